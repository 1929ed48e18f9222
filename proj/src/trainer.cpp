#include "perla/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>

#include "perla/errors.hpp"

namespace perla {

std::string algo_label(Algo algo) {
  return algo == Algo::kPerlaMappo ? "perla_mappo" : "mappo";
}

Algo parse_algo(const std::string& label) {
  if (label == "perla_mappo" || label == "perla") return Algo::kPerlaMappo;
  if (label == "mappo") return Algo::kMappo;
  throw ConfigError("unknown algorithm '" + label + "' (expected perla_mappo or mappo)");
}

std::unique_ptr<Environment> EnvConfig::make(double discount) const {
  if (kind == "coordination") {
    return std::make_unique<MatrixGame>(
        coordination_game_spec(default_coordination_table(optimal_payoff)), discount);
  }
  if (kind == "penalty") {
    return std::make_unique<MatrixGame>(penalty_game_spec(n_agents, n_actions), discount);
  }
  if (kind == "toy") return std::make_unique<MatrixGame>(toy_team_game_spec(), discount);
  if (kind == "foraging") return std::make_unique<ForagingEnv>(foraging, discount);
  throw ConfigError("unknown environment kind '" + kind + "'");
}

void TrainConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (pin_counterfactuals && K != 1) throw ConfigError("pinned counterfactuals require K = 1");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip must lie in (0, 1)");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (ppo_epochs < 1) throw ConfigError("ppo_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (horizon < 0) throw ConfigError("horizon must be >= 0");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  for (int h : critic_hidden) {
    if (h < 1) throw ConfigError("critic hidden widths must be positive");
  }
  env.make(discount)->spec().validate();
}

int TrainConfig::iterations() const {
  return static_cast<int>((total_steps + batch_size - 1) / batch_size);
}

SampleMode TrainConfig::sample_mode() const {
  if (algo == Algo::kMappo || pin_counterfactuals) return SampleMode::kPinnedToExecuted;
  return SampleMode::kSampled;
}

// CentralCritic --------------------------------------------------------------

namespace {

int max_of(const std::vector<int>& v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

CentralCritic::CentralCritic(const GameSpec& spec, int state_dim, const std::vector<int>& hidden,
                             SeededRng& rng)
    : action_counts_(spec.action_counts), state_dim_(state_dim) {
  const int n = spec.n_agents;
  const int width = max_of(action_counts_);
  // [state | agent one-hot | own action | other_1 | ... | other_{n-1}]
  int offset = state_dim + n;
  for (int slot = 0; slot < n; ++slot) {
    action_offsets_.push_back(offset);
    offset += width;
  }
  net_ = MlpCritic(offset, hidden, rng);
}

std::size_t CentralCritic::KeyHash::operator()(const std::vector<double>& key) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : key) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(SeededRng::mix(h));
}

std::vector<double> CentralCritic::encode(const StateFeatures& state, int agent, int a_i,
                                          std::span<const int> others) const {
  if (static_cast<int>(state.size()) != state_dim_) throw ConfigError("state feature size mismatch");
  std::vector<double> x(static_cast<std::size_t>(input_dim()), 0.0);
  std::copy(state.begin(), state.end(), x.begin());
  x[static_cast<std::size_t>(state_dim_ + agent)] = 1.0;
  x[static_cast<std::size_t>(action_offsets_[0] + a_i)] = 1.0;
  for (std::size_t j = 0; j < others.size(); ++j) {
    x[static_cast<std::size_t>(action_offsets_[j + 1] + others[j])] = 1.0;
  }
  return x;
}

std::vector<double> CentralCritic::preactivation(const StateFeatures& state, int agent,
                                                 std::span<const int> others) const {
  if (static_cast<int>(state.size()) != state_dim_) throw ConfigError("state feature size mismatch");
  if (prefix_.empty() || prefix_state_ != state) {
    prefix_ = net_.first_layer_prefix(state);
    prefix_state_ = state;
  }
  std::vector<double> z = prefix_;
  net_.add_input_column(z, state_dim_ + agent);
  for (std::size_t j = 0; j < others.size(); ++j) {
    net_.add_input_column(z, action_offsets_[j + 1] + others[j]);
  }
  return z;
}

double CentralCritic::q(const StateFeatures& state, int agent, int a_i,
                        std::span<const int> others) const {
  std::vector<double> key;
  if (cache_enabled_) {
    key.reserve(state.size() + others.size() + 2);
    key.assign(state.begin(), state.end());
    key.push_back(agent);
    key.push_back(a_i);
    key.insert(key.end(), others.begin(), others.end());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  std::vector<double> z = preactivation(state, agent, others);
  net_.add_input_column(z, action_offsets_[0] + a_i);
  const double out = net_.forward_from_first_layer(z);
  if (cache_enabled_) cache_.emplace(std::move(key), out);
  return out;
}

double CentralCritic::value(const StateFeatures& state, int agent, std::span<const int> others,
                            std::span<const double> own_probabilities) const {
  double total = 0.0;
  for (std::size_t a = 0; a < own_probabilities.size(); ++a) {
    if (own_probabilities[a] > 0.0) {
      total += own_probabilities[a] * q(state, agent, static_cast<int>(a), others);
    }
  }
  return total;
}

QCritic CentralCritic::as_q() const {
  return [this](const StateFeatures& s, int agent, int a_i, std::span<const int> others) {
    return q(s, agent, a_i, others);
  };
}

VCritic CentralCritic::as_v(const JointPolicy& joint_policy) const {
  return [this, &joint_policy](const StateFeatures& s, int agent, std::span<const int> others,
                               std::span<const Observation> observations) {
    const ActionDistribution pi = joint_policy.agent(agent).action_probabilities(
        observations[static_cast<std::size_t>(agent)]);
    return value(s, agent, others, pi.probabilities());
  };
}

// Advantages -----------------------------------------------------------------

namespace {

// V_i(s, a_-i) = sum_a pi_i(a | tau_i) Q(s, i, a, a_-i), memoising pi_i for
// the most recent observation.
class DerivedValue {
 public:
  DerivedValue(const QCritic& q, const JointPolicy& jp) : q_(q), jp_(jp) {}

  double operator()(const StateFeatures& s, int agent, std::span<const int> others,
                    std::span<const Observation> observations) {
    const Observation& obs = observations[static_cast<std::size_t>(agent)];
    if (agent != last_agent_ || obs != last_obs_) {
      probs_ = jp_.agent(agent).action_probabilities(obs).probabilities();
      last_agent_ = agent;
      last_obs_ = obs;
    }
    double total = 0.0;
    for (std::size_t a = 0; a < probs_.size(); ++a) {
      if (probs_[a] > 0.0) total += probs_[a] * q_(s, agent, static_cast<int>(a), others);
    }
    return total;
  }

 private:
  const QCritic& q_;
  const JointPolicy& jp_;
  int last_agent_ = -1;
  Observation last_obs_;
  std::vector<double> probs_;
};

}  // namespace

AdvantageResult compute_advantages(std::span<const Trajectory> batch, const QCritic& critic_q,
                                   const JointPolicy& joint_policy, int K, double discount,
                                   SampleMode mode, SeededRng& rng) {
  if (K < 1) throw InputError("K must be >= 1");
  const int n = joint_policy.n_agents();
  std::size_t steps = 0;
  for (const Trajectory& tr : batch) steps += tr.size();
  AdvantageResult out;
  out.advantages.assign(static_cast<std::size_t>(n), std::vector<double>(steps));
  out.td_errors.assign(static_cast<std::size_t>(n), std::vector<double>(steps));
  out.td_targets.assign(static_cast<std::size_t>(n), std::vector<double>(steps));

  DerivedValue derived(critic_q, joint_policy);
  const VCritic critic_v = [&derived](const StateFeatures& s, int agent, std::span<const int> others,
                                      std::span<const Observation> obs) {
    return derived(s, agent, others, obs);
  };
  const bool pinned = mode == SampleMode::kPinnedToExecuted;

  std::size_t flat = 0;
  for (const Trajectory& trajectory : batch) {
    for (std::size_t t = 0; t < trajectory.size(); ++t, ++flat) {
      const Transition& tr = trajectory.transitions[t];
      for (int i = 0; i < n; ++i) {
        const CounterfactualSamples current =
            pinned ? pinned_counterfactuals(tr.joint_action, tr.observations, i)
                   : sample_counterfactual_joint_actions(joint_policy, tr.observations, i, K, rng);
        double next_value = 0.0;
        if (!tr.terminal) {
          CounterfactualSamples next;
          if (pinned && t + 1 < trajectory.size()) {
            next = pinned_counterfactuals(trajectory.transitions[t + 1].joint_action,
                                          tr.next_observations, i);
          } else {
            // Truncated final step has no executed successor: draw one.
            next = sample_counterfactual_joint_actions(joint_policy, tr.next_observations, i,
                                                       pinned ? 1 : K, rng);
          }
          next_value = marginalized_value(critic_v, tr.next_state, next);
        }
        const double current_value = marginalized_value(critic_v, tr.state, current);
        const double delta = td_error(tr.reward, tr.terminal, discount, next_value, current_value);

        const int a_i = tr.joint_action[i];
        const std::vector<int> executed_others = tr.joint_action.others(i);
        const double q_exec = critic_q(tr.state, i, a_i, executed_others);
        const double q_hat = pinned ? q_exec : marginalized_q(critic_q, tr.state, a_i, current);

        const std::size_t is = static_cast<std::size_t>(i);
        out.td_errors[is][flat] = delta;
        out.td_targets[is][flat] = tr.terminal ? tr.reward : tr.reward + discount * next_value;
        out.advantages[is][flat] = delta + (q_hat - q_exec);
      }
    }
  }
  return out;
}

// PPO ------------------------------------------------------------------------

ParamVector PolicyOptimizer::ascent_step(const ParamVector& gradient) {
  ParamVector step;
  for (const auto& [key, g] : gradient.rows()) {
    auto [it, inserted] = rows_.try_emplace(key, g.size(), hyper_);
    AdamState& state = it->second;
    std::vector<double> delta(g.size(), 0.0);
    std::vector<double> neg(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) neg[j] = -g[j];
    adam_step(delta, neg, state);
    step.row(key, static_cast<int>(g.size())) = delta;
  }
  return step;
}

ParamVector ppo_surrogate_gradient(const Policy& policy, std::span<const PpoSample> batch,
                                   const PpoSettings& settings) {
  ParamVector grad;
  if (batch.empty()) return grad;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const PpoSample& s : batch) {
    if (!std::isfinite(s.advantage)) throw NumericError("non-finite advantage");
    const double log_p = policy.log_prob(s.observation, s.action);
    const double ratio = std::exp(log_p - s.old_log_prob);
    const bool clipped = (s.advantage > 0.0 && ratio > 1.0 + settings.clip) ||
                         (s.advantage < 0.0 && ratio < 1.0 - settings.clip);
    if (!clipped && s.advantage != 0.0) {
      grad.add_scaled(policy.log_prob_gradient(s.observation, s.action), inv * s.advantage * ratio);
    }
    if (settings.entropy_coef != 0.0) {
      grad.add_scaled(policy.entropy_gradient(s.observation), inv * settings.entropy_coef);
    }
  }
  return grad;
}

void ppo_update(Policy& policy, std::span<const PpoSample> batch, const PpoSettings& settings,
                PolicyOptimizer& optimizer) {
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    ParamVector grad = ppo_surrogate_gradient(policy, batch, settings);
    if (grad.empty()) continue;
    if (settings.max_grad_norm > 0.0) {
      const double norm = std::sqrt(grad.squared_norm());
      if (norm > settings.max_grad_norm) grad.scale(settings.max_grad_norm / norm);
    }
    policy.apply(optimizer.ascent_step(grad));
    if (!policy.all_finite()) throw NumericError("policy parameters became non-finite");
  }
}

double critic_update(MlpCritic& critic, std::span<const CriticSample> batch, AdamState& adam,
                     double max_grad_norm, bool huber) {
  if (batch.empty()) return 0.0;
  constexpr double kHuberDelta = 10.0;
  std::vector<double> grads(critic.parameter_count(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const CriticSample& s : batch) {
    const double err = critic.forward(s.input) - s.target;
    loss += err * err * inv;
    double d = err;
    if (huber) d = std::clamp(err, -kHuberDelta, kHuberDelta);
    critic.backward_accumulate(s.input, 2.0 * d * inv, grads);
  }
  if (max_grad_norm > 0.0) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_grad_norm) {
      for (double& g : grads) g *= max_grad_norm / norm;
    }
  }
  adam_step(critic.parameters(), grads, adam);
  if (!critic.all_finite()) throw NumericError("critic parameters became non-finite");
  return loss;
}

// Training loop ----------------------------------------------------------------

std::uint64_t digest_trajectory(const Trajectory& trajectory, std::uint64_t h) {
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < len; ++k) h = (h ^ p[k]) * 0x100000001b3ULL;
  };
  for (const Transition& tr : trajectory.transitions) {
    for (int a : tr.joint_action.actions()) feed(&a, sizeof(a));
    feed(&tr.reward, sizeof(tr.reward));
    const char term = tr.terminal ? 1 : 0;
    feed(&term, 1);
    for (double x : tr.state) feed(&x, sizeof(x));
  }
  return h;
}

EvalResult evaluate(const Environment& env_template, const JointPolicy& joint_policy, int horizon,
                    int episodes, SeededRng& rng) {
  EvalResult result;
  std::unique_ptr<Environment> env = env_template.clone();
  for (int e = 0; e < episodes; ++e) {
    env->reset(rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const StepResult r = env->step(joint_policy.greedy(env->observations()));
      total += r.reward;
      if (r.terminal) break;
    }
    result.greedy_return += total;

    env->reset(rng);
    const Trajectory traj = rollout(*env, joint_policy, horizon, rng);
    for (const Transition& tr : traj.transitions) result.stochastic_return += tr.reward;
  }
  result.greedy_return /= episodes;
  result.stochastic_return /= episodes;
  return result;
}

SeedRun train_seed(const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  std::unique_ptr<Environment> env = config.env.make(config.discount);
  const GameSpec spec = env->spec();
  const int n = spec.n_agents;
  const int horizon = config.horizon > 0 ? config.horizon : spec.horizon;
  const SampleMode mode = config.sample_mode();

  SeededRng root(seed);
  SeededRng init_rng = root.substream(1);
  SeededRng rollout_rng = root.substream(2);
  SeededRng counterfactual_rng = root.substream(3);
  SeededRng eval_rng = root.substream(4);

  env->reset(rollout_rng);
  const int state_dim = static_cast<int>(env->state().size());
  CentralCritic critic(spec, state_dim, config.critic_hidden, init_rng);
  critic.enable_cache(config.env.is_matrix_game());
  AdamState critic_adam(critic.net().parameter_count(),
                        AdamHyper{config.critic_lr, 0.9, 0.999, config.adam_eps});

  JointPolicy joint_policy = JointPolicy::uniform_softmax(spec);
  std::vector<PolicyOptimizer> optimizers(
      static_cast<std::size_t>(n), PolicyOptimizer(AdamHyper{config.actor_lr, 0.9, 0.999, config.adam_eps}));
  const PpoSettings ppo{1, config.clip, config.entropy_coef, config.max_grad_norm};

  SeedRun run;
  run.seed = seed;
  long steps = 0;
  const int iterations = config.iterations();

  auto record = [&](int iteration, double loss, double mean_abs_adv) {
    EvalRecord rec;
    rec.iteration = iteration;
    rec.step = steps;
    const EvalResult ev = evaluate(*env, joint_policy, horizon, config.eval_episodes, eval_rng);
    rec.greedy_return = ev.greedy_return;
    rec.stochastic_return = ev.stochastic_return;
    rec.critic_loss = loss;
    rec.mean_abs_advantage = mean_abs_adv;
    if (config.env.is_matrix_game()) {
      const std::vector<Observation> obs = env->observations();
      for (int i = 0; i < n; ++i) {
        rec.policy_probabilities.push_back(
            joint_policy.agent(i).action_probabilities(obs[static_cast<std::size_t>(i)]).probabilities());
      }
    }
    run.records.push_back(std::move(rec));
  };

  record(0, 0.0, 0.0);
  for (int it = 1; it <= iterations; ++it) {
    // Collect at least batch_size transitions.
    std::vector<Trajectory> batch;
    std::size_t collected = 0;
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    while (collected < static_cast<std::size_t>(config.batch_size)) {
      env->reset(rollout_rng);
      Trajectory traj = rollout(*env, joint_policy, horizon, rollout_rng);
      if (traj.empty()) throw ConfigError("rollout produced no transitions");
      collected += traj.size();
      digest = digest_trajectory(traj, digest);
      batch.push_back(std::move(traj));
    }
    steps += static_cast<long>(collected);
    run.batch_digests.push_back(digest);

    // Behaviour log-probs at collection time.
    std::vector<std::vector<double>> old_log_probs(static_cast<std::size_t>(n));
    for (const Trajectory& traj : batch) {
      for (const Transition& tr : traj.transitions) {
        for (int i = 0; i < n; ++i) {
          old_log_probs[static_cast<std::size_t>(i)].push_back(
              joint_policy.agent(i).log_prob(tr.observations[static_cast<std::size_t>(i)], tr.joint_action[i]));
        }
      }
    }

    double last_loss = 0.0;
    double last_abs_adv = 0.0;
    for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
      const AdvantageResult adv = compute_advantages(batch, critic.as_q(), joint_policy, config.K,
                                                     config.discount, mode, counterfactual_rng);
      std::vector<CriticSample> critic_batch;
      std::vector<std::vector<PpoSample>> ppo_batches(static_cast<std::size_t>(n));
      std::size_t flat = 0;
      double abs_sum = 0.0;
      for (const Trajectory& traj : batch) {
        for (const Transition& tr : traj.transitions) {
          for (int i = 0; i < n; ++i) {
            const std::size_t is = static_cast<std::size_t>(i);
            critic_batch.push_back(
                {critic.encode(tr.state, i, tr.joint_action[i], tr.joint_action.others(i)),
                 adv.td_targets[is][flat]});
            ppo_batches[is].push_back({tr.observations[is], tr.joint_action[i],
                                       old_log_probs[is][flat], adv.advantages[is][flat]});
            abs_sum += std::abs(adv.advantages[is][flat]);
          }
          ++flat;
        }
      }
      last_abs_adv = abs_sum / static_cast<double>(critic_batch.size());
      last_loss = critic_update(critic.net(), critic_batch, critic_adam, config.max_grad_norm,
                                config.huber_loss);
      critic.invalidate();
      for (int i = 0; i < n; ++i) {
        ppo_update(joint_policy.agent(i), ppo_batches[static_cast<std::size_t>(i)], ppo,
                   optimizers[static_cast<std::size_t>(i)]);
      }
    }

    if (config.keep_trajectories) {
      for (Trajectory& traj : batch) run.trajectories.push_back(std::move(traj));
    }
    if (it % config.eval_interval == 0 || it == iterations) record(it, last_loss, last_abs_adv);
  }
  run.final_policy = std::move(joint_policy);
  return run;
}

TrainingReport train(const TrainConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainingReport report;
  for (std::uint64_t seed : config.seeds) report.runs.push_back(train_seed(config, seed));

  const std::size_t n_records = report.runs.front().records.size();
  for (std::size_t r = 0; r < n_records; ++r) {
    TrainingRecord rec;
    rec.step = report.runs.front().records[r].step;
    for (const SeedRun& run : report.runs) {
      rec.per_seed_greedy.push_back(run.records[r].greedy_return);
      rec.per_seed_stochastic.push_back(run.records[r].stochastic_return);
    }
    const double k = static_cast<double>(report.runs.size());
    for (double x : rec.per_seed_greedy) rec.mean_greedy_return += x / k;
    for (double x : rec.per_seed_stochastic) rec.mean_stochastic_return += x / k;
    report.records.push_back(std::move(rec));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace perla
