#include "perla/variance_lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <memory>
#include <thread>

#include "perla/envs.hpp"
#include "perla/errors.hpp"
#include "perla/policy.hpp"

namespace perla {
namespace {

constexpr double kZ95 = 1.959963984540054;

double sigmoid(double theta) { return 1.0 / (1.0 + std::exp(-theta)); }

double score(int a1, double theta) {
  const double s = sigmoid(theta);
  return a1 == 1 ? 1.0 - s : -s;
}

// Partner tuples of the toy game, each with probability 1/4.
constexpr std::array<std::array<int, 2>, 4> kPartners{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

double toy_q(int a1, std::span<const int> others) {
  return analytic_q_toy(JointAction::compose(0, a1, others));
}

// E[Q^2 | a1] over uniform partners.
double second_moment_q(int a1) {
  double total = 0.0;
  for (const auto& p : kPartners) {
    const double q = toy_q(a1, p);
    total += q * q;
  }
  return total / 4.0;
}

JointPolicy toy_joint_policy(double theta) {
  std::vector<std::unique_ptr<Policy>> agents;
  agents.push_back(std::make_unique<SigmoidPolicy>(theta));
  agents.push_back(std::make_unique<SoftmaxPolicy>(2));
  agents.push_back(std::make_unique<SoftmaxPolicy>(2));
  return JointPolicy(std::move(agents));
}

QCritic toy_critic() {
  return [](const StateFeatures&, int agent, int a_i, std::span<const int> others) {
    return analytic_q_toy(JointAction::compose(agent, a_i, others));
  };
}

template <typename Fn>
void for_trials(long trials, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || trials < 2 * threads) {
    for (long t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const long chunk = (trials + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const long begin = w * chunk;
    const long end = std::min(trials, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn, &err = errors[static_cast<std::size_t>(w)]] {
      try {
        for (long t = begin; t < end; ++t) fn(t);
      } catch (...) {
        err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

double sample_variance(std::span<const double> values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

}  // namespace

double analytic_q_toy(const JointAction& joint_action) { return toy_team_reward(joint_action); }

double analytic_qtilde_toy(int a1) {
  if (a1 != 0 && a1 != 1) throw InputError("toy actions are binary");
  double total = 0.0;
  for (const auto& p : kPartners) total += toy_q(a1, p);
  return total / 4.0;
}

double toy_gradient_mean(double theta) {
  const double s = sigmoid(theta);
  return s * score(1, theta) * analytic_qtilde_toy(1) +
         (1.0 - s) * score(0, theta) * analytic_qtilde_toy(0);
}

double toy_gradient_variance(const EstimatorKind& kind, double theta) {
  const double s = sigmoid(theta);
  double second = 0.0;
  for (int a1 = 0; a1 < 2; ++a1) {
    const double p = a1 == 1 ? s : 1.0 - s;
    const double qt = analytic_qtilde_toy(a1);
    const double cond_var = second_moment_q(a1) - qt * qt;
    double q2 = 0.0;
    switch (kind.variant) {
      case EstimatorVariant::kDecentralised: q2 = qt * qt; break;
      case EstimatorVariant::kCtde: q2 = qt * qt + cond_var; break;
      case EstimatorVariant::kPerla: q2 = qt * qt + cond_var / kind.k; break;
    }
    const double sc = score(a1, theta);
    second += p * sc * sc * q2;
  }
  const double mean = toy_gradient_mean(theta);
  return second - mean * mean;
}

ToyQVariances toy_q_variances(double theta) {
  const double s = sigmoid(theta);
  double mean = 0.0;
  double second = 0.0;
  double qt_second = 0.0;
  for (int a1 = 0; a1 < 2; ++a1) {
    const double p = a1 == 1 ? s : 1.0 - s;
    const double qt = analytic_qtilde_toy(a1);
    mean += p * qt;
    second += p * second_moment_q(a1);
    qt_second += p * qt * qt;
  }
  return {second - mean * mean, qt_second - mean * mean};
}

SampleMoments sample_moments(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw InputError("need at least two samples");
  const double nd = static_cast<double>(n);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= nd;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d2 = (v - mean) * (v - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  SampleMoments out;
  out.mean = mean;
  out.variance = m2 / (nd - 1.0);
  out.mean_half_width = kZ95 * std::sqrt(out.variance / nd);
  // Var of the sample variance ~ (mu4 - sigma^4 (n-3)/(n-1)) / n.
  const double mu4 = m4 / nd;
  const double s4 = out.variance * out.variance;
  const double var_of_var = std::max(0.0, (mu4 - s4 * (nd - 3.0) / (nd - 1.0)) / nd);
  out.variance_half_width = kZ95 * std::sqrt(var_of_var);
  return out;
}

double VarianceReport::total_variance() const {
  double total = 0.0;
  for (double v : variance) total += v;
  return total;
}

double VarianceReport::total_variance_half_width() const {
  double total = 0.0;
  for (double h : variance_half_width) total += h * h;
  return std::sqrt(total);
}

VarianceReport measure_estimator_variance(const EstimatorKind& kind, long trials, double theta,
                                          const SeededRng& rng, int threads) {
  if (trials < 2) throw InputError("need at least two trials");
  if (kind.variant == EstimatorVariant::kPerla && kind.k < 1) {
    throw InputError("PERLA estimator needs k >= 1");
  }
  const MatrixGame prototype(toy_team_game_spec(), 0.0);
  const JointPolicy joint_policy = toy_joint_policy(theta);
  const QCritic critic = toy_critic();

  std::vector<double> grads(static_cast<std::size_t>(trials));
  for_trials(trials, threads, [&](long t) {
    SeededRng trial_rng = rng.substream(static_cast<std::uint64_t>(t));
    std::unique_ptr<Environment> env = prototype.clone();
    env->reset(trial_rng);
    const Trajectory traj = rollout(*env, joint_policy, 1, trial_rng);
    const Policy& pi = joint_policy.agent(0);
    ParamVector g;
    switch (kind.variant) {
      case EstimatorVariant::kCtde: {
        const Transition& tr = traj.transitions.front();
        const std::vector<double> q{critic(tr.state, 0, tr.joint_action[0], tr.joint_action.others(0))};
        g = gradient_ctde(traj, q, pi, 0);
        break;
      }
      case EstimatorVariant::kDecentralised:
        env->reset(trial_rng);
        g = gradient_dt(traj, exact_marginal_q_values(*env, traj, joint_policy, 0), pi, 0);
        break;
      case EstimatorVariant::kPerla:
        g = gradient_perla(traj, critic, joint_policy, 0, kind.k, trial_rng);
        break;
    }
    const std::vector<double> flat = g.flatten();
    if (flat.size() != 1) throw NumericError("toy gradient must be scalar");
    grads[static_cast<std::size_t>(t)] = flat.front();
  });

  const SampleMoments m = sample_moments(grads);
  VarianceReport report;
  report.kind = kind;
  report.trials = trials;
  report.theta = theta;
  report.mean = {m.mean};
  report.variance = {m.variance};
  report.mean_half_width = {m.mean_half_width};
  report.variance_half_width = {m.variance_half_width};
  return report;
}

DecompositionCheck check_qhat_decomposition(int k, long trials, const SeededRng& rng, int bootstrap_resamples) {
  if (k < 1) throw InputError("k must be >= 1");
  if (trials < 2) throw InputError("need at least two trials");
  if (bootstrap_resamples < 2) throw InputError("need at least two bootstrap resamples");
  const JointPolicy joint_policy = toy_joint_policy(0.0);
  const QCritic critic = toy_critic();
  const std::vector<Observation> obs(3, Observation{1.0});

  std::vector<double> q_hat(static_cast<std::size_t>(trials));
  for (long t = 0; t < trials; ++t) {
    SeededRng trial_rng = rng.substream(static_cast<std::uint64_t>(t));
    const int a1 = joint_policy.agent(0).sample_action(obs[0], trial_rng);
    const CounterfactualSamples samples =
        sample_counterfactual_joint_actions(joint_policy, obs, 0, k, trial_rng);
    q_hat[static_cast<std::size_t>(t)] = marginalized_q(critic, obs[0], a1, samples);
  }

  DecompositionCheck out;
  out.k = k;
  out.trials = trials;
  out.measured = sample_variance(q_hat);
  const ToyQVariances v = toy_q_variances(0.0);
  out.predicted = v.var_q / k + (static_cast<double>(k - 1) / k) * v.var_qtilde;
  out.residual = std::abs(out.measured - out.predicted);

  SeededRng boot_rng = rng.substream(0xb007ULL << 32);
  std::vector<double> resample(q_hat.size());
  std::vector<double> stats(static_cast<std::size_t>(bootstrap_resamples));
  for (double& stat : stats) {
    for (double& x : resample) x = q_hat[boot_rng.below(q_hat.size())];
    stat = sample_variance(resample);
  }
  out.ci_half_width = kZ95 * std::sqrt(sample_variance(stats));
  return out;
}

std::string pair_label(EstimatorPair pair) {
  return pair == EstimatorPair::kPerlaVsDecentralised ? "perla-dt" : "ctde-dt";
}

BoundCheck check_bounds(EstimatorPair pair, int k, long trials, const SeededRng& rng, double theta,
                        int threads) {
  if (k < 1) throw InputError("k must be >= 1");
  BoundCheck out;
  out.pair = pair;
  out.k = pair == EstimatorPair::kCtdeVsDecentralised ? 1 : k;
  out.theta = theta;
  const double s = sigmoid(theta);
  out.B = std::max(s, 1.0 - s);
  out.C = 3.0;
  out.gamma = 0.0;
  out.bound = out.B * out.B * out.C * out.C / ((1.0 - out.gamma * out.gamma) * out.k);

  const EstimatorKind high = pair == EstimatorPair::kPerlaVsDecentralised ? EstimatorKind::perla(k)
                                                                          : EstimatorKind::ctde();
  const VarianceReport hi = measure_estimator_variance(high, trials, theta, rng.substream(1), threads);
  const VarianceReport lo = measure_estimator_variance(EstimatorKind::decentralised(), trials,
                                                       theta, rng.substream(2), threads);
  out.measured_excess = hi.total_variance() - lo.total_variance();
  out.slack = std::hypot(hi.total_variance_half_width(), lo.total_variance_half_width());
  out.satisfied = out.bound >= 0.0 && out.measured_excess <= out.bound + out.slack;
  return out;
}

ConvergenceCheck check_convergence(int k, int iterations, double lr, long batch,
                                   long final_trials, const SeededRng& rng, double tolerance) {
  if (iterations < 1) throw InputError("need at least one iteration");
  const EstimatorKind kind = EstimatorKind::perla(k);
  double theta = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const VarianceReport r = measure_estimator_variance(
        kind, batch, theta, rng.substream(static_cast<std::uint64_t>(it)));
    theta += lr * r.mean.front();
  }
  const VarianceReport last =
      measure_estimator_variance(kind, final_trials, theta, rng.substream(0xf1a1ULL << 32));
  ConvergenceCheck out;
  out.k = k;
  out.iterations = iterations;
  out.final_theta = theta;
  out.averaged_gradient = last.mean.front();
  out.averaged_gradient_half_width = last.mean_half_width.front();
  out.exact_gradient = toy_gradient_mean(theta);
  out.converged = std::abs(out.averaged_gradient) < tolerance;
  return out;
}

}  // namespace perla
