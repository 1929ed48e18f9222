#include "perla/estimators.hpp"

#include <string>

#include "perla/errors.hpp"

namespace perla {

EstimatorKind EstimatorKind::perla(int k) {
  if (k < 1) throw InputError("PERLA estimator needs k >= 1");
  return {EstimatorVariant::kPerla, k};
}

std::string EstimatorKind::label() const {
  switch (variant) {
    case EstimatorVariant::kCtde: return "ctde";
    case EstimatorVariant::kDecentralised: return "dt";
    case EstimatorVariant::kPerla: return "perla";
  }
  return "unknown";
}

EstimatorKind EstimatorKind::parse(const std::string& label, int k) {
  if (label == "ctde") return ctde();
  if (label == "dt") return decentralised();
  if (label == "perla") return perla(k);
  throw InputError("unknown estimator '" + label + "'");
}

CounterfactualSamples sample_counterfactual_joint_actions(const JointPolicy& joint_policy,
                                                          std::span<const Observation> observations,
                                                          int i, int k, SeededRng& rng) {
  const int n = joint_policy.n_agents();
  if (i < 0 || i >= n) throw InputError("agent index " + std::to_string(i) + " out of range");
  if (k < 1) throw InputError("need at least one counterfactual sample");
  if (static_cast<int>(observations.size()) != n) {
    throw InputError("one observation per agent required");
  }
  std::vector<ActionDistribution> dists;
  dists.reserve(static_cast<std::size_t>(n - 1));
  for (int j = 0; j < n; ++j) {
    if (j != i) dists.push_back(joint_policy.agent(j).action_probabilities(observations[static_cast<std::size_t>(j)]));
  }
  CounterfactualSamples samples;
  samples.agent = i;
  samples.observations.assign(observations.begin(), observations.end());
  samples.others.resize(static_cast<std::size_t>(k));
  for (auto& tuple : samples.others) {
    tuple.resize(dists.size());
    for (std::size_t j = 0; j < dists.size(); ++j) tuple[j] = dists[j].sample(rng);
  }
  return samples;
}

CounterfactualSamples pinned_counterfactuals(const JointAction& executed,
                                             std::span<const Observation> observations, int i) {
  if (i < 0 || i >= executed.size()) throw InputError("agent index out of range");
  CounterfactualSamples samples;
  samples.agent = i;
  samples.observations.assign(observations.begin(), observations.end());
  samples.others.push_back(executed.others(i));
  return samples;
}

double marginalized_q(const QCritic& critic_q, const StateFeatures& state, int a_i,
                      const CounterfactualSamples& samples) {
  if (samples.k() < 1) throw InputError("marginalisation needs at least one sample");
  double total = 0.0;
  for (const auto& tuple : samples.others) total += critic_q(state, samples.agent, a_i, tuple);
  return total / samples.k();
}

double marginalized_value(const VCritic& critic_v, const StateFeatures& state,
                          const CounterfactualSamples& samples) {
  if (samples.k() < 1) throw InputError("marginalisation needs at least one sample");
  double total = 0.0;
  for (const auto& tuple : samples.others) {
    total += critic_v(state, samples.agent, tuple, samples.observations);
  }
  return total / samples.k();
}

double td_error(double reward, bool terminal, double discount, double next_value,
                double current_value) {
  if (terminal) return reward - current_value;
  return reward + discount * next_value - current_value;
}

double perla_td_error(const VCritic& critic_v, const Transition& transition,
                      const CounterfactualSamples& samples_current,
                      const CounterfactualSamples& samples_next, double discount) {
  const double current = marginalized_value(critic_v, transition.state, samples_current);
  const double next =
      transition.terminal ? 0.0 : marginalized_value(critic_v, transition.next_state, samples_next);
  return td_error(transition.reward, transition.terminal, discount, next, current);
}

namespace {

ParamVector weighted_score_sum(const Trajectory& trajectory, std::span<const double> weights,
                               const Policy& policy_i, int i, double discount) {
  if (weights.size() != trajectory.size()) {
    throw InputError("got " + std::to_string(weights.size()) + " critic values for " +
                     std::to_string(trajectory.size()) + " steps");
  }
  ParamVector grad;
  double gamma_t = 1.0;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const Transition& tr = trajectory.transitions[t];
    const Observation& obs = tr.observations[static_cast<std::size_t>(i)];
    const double w = gamma_t * weights[t];
    ParamVector score = policy_i.log_prob_gradient(obs, tr.joint_action[i]);
    // Keep the row present even when the weight is zero so shapes agree.
    grad.add_scaled(score, w);
    gamma_t *= discount;
  }
  return grad;
}

}  // namespace

ParamVector gradient_ctde(const Trajectory& trajectory, std::span<const double> q_values_per_step,
                          const Policy& policy_i, int i, double discount) {
  return weighted_score_sum(trajectory, q_values_per_step, policy_i, i, discount);
}

ParamVector gradient_dt(const Trajectory& trajectory,
                        std::span<const double> qtilde_values_per_step, const Policy& policy_i,
                        int i, double discount) {
  return weighted_score_sum(trajectory, qtilde_values_per_step, policy_i, i, discount);
}

std::vector<double> exact_marginal_q_values(const Environment& env, const Trajectory& trajectory,
                                            const JointPolicy& joint_policy, int i) {
  if (!env.has_marginal_oracle()) {
    throw UnsupportedOperation("environment '" + env.name() +
                               "' has no exact marginal Q oracle; DT estimator unavailable");
  }
  std::vector<double> values;
  values.reserve(trajectory.size());
  for (const Transition& tr : trajectory.transitions) {
    std::vector<std::vector<double>> other_probs;
    for (int j = 0; j < joint_policy.n_agents(); ++j) {
      if (j == i) continue;
      other_probs.push_back(
          joint_policy.agent(j).action_probabilities(tr.observations[static_cast<std::size_t>(j)]).probabilities());
    }
    values.push_back(env.marginal_reward(i, tr.joint_action[i], other_probs));
  }
  return values;
}

ParamVector gradient_perla(const Trajectory& trajectory, const QCritic& critic_q,
                           const JointPolicy& joint_policy, int i, int k, SeededRng& rng,
                           double discount, SampleMode mode) {
  if (k < 1) throw InputError("PERLA estimator needs k >= 1");
  std::vector<double> q_hat;
  q_hat.reserve(trajectory.size());
  for (const Transition& tr : trajectory.transitions) {
    const CounterfactualSamples samples =
        mode == SampleMode::kPinnedToExecuted
            ? pinned_counterfactuals(tr.joint_action, tr.observations, i)
            : sample_counterfactual_joint_actions(joint_policy, tr.observations, i, k, rng);
    q_hat.push_back(marginalized_q(critic_q, tr.state, tr.joint_action[i], samples));
  }
  return weighted_score_sum(trajectory, q_hat, joint_policy.agent(i), i, discount);
}

}  // namespace perla
