#ifndef PERLA_TRAINER_HPP_
#define PERLA_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "perla/core.hpp"
#include "perla/envs.hpp"
#include "perla/estimators.hpp"
#include "perla/nn.hpp"
#include "perla/policy.hpp"

namespace perla {

enum class Algo { kPerlaMappo, kMappo };

std::string algo_label(Algo algo);  // "perla_mappo" / "mappo"
Algo parse_algo(const std::string& label);

struct EnvConfig {
  std::string kind = "coordination";  // coordination | penalty | toy | foraging
  int n_agents = 2;                   // penalty
  int n_actions = 3;                  // penalty
  double optimal_payoff = 1.0;        // coordination (l, l)
  ForagingSpec foraging;

  std::unique_ptr<Environment> make(double discount) const;
  bool is_matrix_game() const { return kind != "foraging"; }
};

struct TrainConfig {
  EnvConfig env;
  Algo algo = Algo::kPerlaMappo;
  int K = 100;
  // PERLA with its single sample forced to the executed a_-i (requires K = 1).
  bool pin_counterfactuals = false;
  double discount = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 5e-4;
  double adam_eps = 1e-5;
  int ppo_epochs = 5;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double max_grad_norm = 10.0;
  bool huber_loss = false;
  int batch_size = 64;   // transitions per update
  int horizon = 0;       // 0: the environment's own horizon
  long total_steps = 64L * 500;
  int eval_interval = 10;  // iterations between evaluations
  int eval_episodes = 1;
  std::vector<int> critic_hidden{64, 64};
  std::vector<std::uint64_t> seeds{0};
  bool keep_trajectories = false;

  void validate() const;
  int iterations() const;
  SampleMode sample_mode() const;
};

// Shared centralised critic Q(s, i, a_i, a_-i). Input layout: state features,
// one-hot agent index, one-hot own action, then one-hot actions of the other
// agents in ascending order.
class CentralCritic {
 public:
  CentralCritic(const GameSpec& spec, int state_dim, const std::vector<int>& hidden,
                SeededRng& rng);

  int input_dim() const { return net_.input_dim(); }
  int state_dim() const { return state_dim_; }
  MlpCritic& net() { return net_; }
  const MlpCritic& net() const { return net_; }

  std::vector<double> encode(const StateFeatures& state, int agent, int a_i,
                             std::span<const int> others) const;
  double q(const StateFeatures& state, int agent, int a_i, std::span<const int> others) const;
  // sum_a pi_i(a) Q(s, i, a, a_-i): the value of (s, a_-i) under agent i's policy.
  double value(const StateFeatures& state, int agent, std::span<const int> others,
               std::span<const double> own_probabilities) const;

  QCritic as_q() const;
  VCritic as_v(const JointPolicy& joint_policy) const;

  // Memoises queries until the next parameter change; pays off when many
  // queries share a state (matrix games).
  void enable_cache(bool on) { cache_enabled_ = on; cache_.clear(); }
  void invalidate() const { cache_.clear(); prefix_state_.clear(); }

 private:
  std::vector<double> preactivation(const StateFeatures& state, int agent,
                                    std::span<const int> others) const;

  std::vector<int> action_counts_;
  std::vector<int> action_offsets_;
  int state_dim_;
  MlpCritic net_;

  struct KeyHash {
    std::size_t operator()(const std::vector<double>& key) const;
  };
  bool cache_enabled_ = false;
  mutable std::unordered_map<std::vector<double>, double, KeyHash> cache_;
  mutable StateFeatures prefix_state_;
  mutable std::vector<double> prefix_;
};

struct AdvantageResult {
  // Indexed [agent][step], steps flattened over the batch in order.
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> td_errors;
  std::vector<std::vector<double>> td_targets;
};

// Per-(agent, step) advantages. The TD error is perla_td_error with value
// terms marginalised over counterfactual a_-i at s^t and s^{t+1}; the
// advantage adds Q_hat(s, a_i) - Q(s, a_i, a_-i executed), which swaps the
// executed other-agent actions for their k-sample marginal. Pinned samples
// make that correction exactly zero.
AdvantageResult compute_advantages(std::span<const Trajectory> batch, const QCritic& critic_q,
                                   const JointPolicy& joint_policy, int K, double discount,
                                   SampleMode mode, SeededRng& rng);

struct PpoSample {
  Observation observation;
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
};

struct PpoSettings {
  int epochs = 5;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double max_grad_norm = 10.0;
};

// Adam over sparse parameter rows; each row keeps its own moments.
class PolicyOptimizer {
 public:
  explicit PolicyOptimizer(AdamHyper hyper = {}) : hyper_(hyper) {}
  // Step that ascends `gradient`.
  ParamVector ascent_step(const ParamVector& gradient);

 private:
  AdamHyper hyper_;
  std::map<Observation, AdamState> rows_;
};

// Gradient of (1/|B|) sum min(rho A, clip(rho, 1-eps, 1+eps) A) + c H(pi).
ParamVector ppo_surrogate_gradient(const Policy& policy, std::span<const PpoSample> batch,
                                   const PpoSettings& settings);

// settings.epochs ascent steps on the clipped surrogate.
void ppo_update(Policy& policy, std::span<const PpoSample> batch, const PpoSettings& settings,
                PolicyOptimizer& optimizer);

struct CriticSample {
  std::vector<double> input;
  double target = 0.0;
};

// One Adam step on the mean squared (or Huber) error; returns the pre-step
// mean squared loss.
double critic_update(MlpCritic& critic, std::span<const CriticSample> batch, AdamState& adam,
                     double max_grad_norm = 0.0, bool huber = false);

struct EvalRecord {
  int iteration = 0;
  long step = 0;
  double greedy_return = 0.0;
  double stochastic_return = 0.0;
  double critic_loss = 0.0;
  double mean_abs_advantage = 0.0;
  // Matrix games: per-agent action probabilities at the single state.
  std::vector<std::vector<double>> policy_probabilities;

  bool operator==(const EvalRecord&) const = default;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EvalRecord> records;
  JointPolicy final_policy;
  // FNV-1a digest of every collected transition, one per iteration.
  std::vector<std::uint64_t> batch_digests;
  std::vector<Trajectory> trajectories;  // only with keep_trajectories
};

struct TrainingRecord {
  long step = 0;
  double mean_greedy_return = 0.0;
  double mean_stochastic_return = 0.0;
  std::vector<double> per_seed_greedy;
  std::vector<double> per_seed_stochastic;
};

struct TrainingReport {
  std::vector<TrainingRecord> records;
  std::vector<SeedRun> runs;
  double wall_clock_seconds = 0.0;
};

// One seeded run of Algorithm PERLA-MAPPO (or the MAPPO baseline). Throws
// NumericError if any parameter becomes non-finite.
SeedRun train_seed(const TrainConfig& config, std::uint64_t seed);

// Every seed in config.seeds, run sequentially, merged by evaluation step.
TrainingReport train(const TrainConfig& config);

// Greedy and stochastic undiscounted episode returns averaged over episodes.
struct EvalResult {
  double greedy_return = 0.0;
  double stochastic_return = 0.0;
};
EvalResult evaluate(const Environment& env_template, const JointPolicy& joint_policy, int horizon,
                    int episodes, SeededRng& rng);

std::uint64_t digest_trajectory(const Trajectory& trajectory, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace perla

#endif  // PERLA_TRAINER_HPP_
