#ifndef PERLA_ENVS_HPP_
#define PERLA_ENVS_HPP_

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "perla/core.hpp"
#include "perla/rng.hpp"

namespace perla {

// ---------------------------------------------------------------------------
// Single-state matrix games
// ---------------------------------------------------------------------------

// Payoff of the 2x2 coordination game, indexed [agent 1][agent 2] with
// action 0 = l and 1 = r.
using CoordinationTable = std::array<std::array<double, 2>, 2>;

constexpr int kLeft = 0;
constexpr int kRight = 1;

// (l,l) = 1.0 is a configurable default; (r,r) = 0.5 and miscoordination -1.
CoordinationTable default_coordination_table(double optimal_payoff = 1.0);

double coordination_reward(const JointAction& joint_action,
                           const CoordinationTable& payoff_table);

// 8 when every agent plays action 0 ("A"), -12 when exactly one agent
// deviates from A, 0 otherwise.
double penalty_game_reward(const JointAction& joint_action, int n_agents, int n_actions);

// Three binary agents: 1 if all play 0, 3 if all play 1, else 0.
double toy_team_reward(const JointAction& joint_action);

struct MatrixGameSpec {
  std::string name;
  int n_agents = 2;
  int n_actions = 2;
  std::function<double(const JointAction&)> payoff;

  // Dense payoff over all n_actions^n_agents joint actions, agent 0 the
  // most significant digit.
  std::vector<double> materialise() const;
};

MatrixGameSpec coordination_game_spec(const CoordinationTable& table);
MatrixGameSpec penalty_game_spec(int n_agents, int n_actions);
MatrixGameSpec toy_team_game_spec();

// One-shot game: every episode is a single terminal transition. Observations
// and state are the constant vector {1}.
class MatrixGame final : public Environment {
 public:
  explicit MatrixGame(MatrixGameSpec spec, double discount = 0.99);

  GameSpec spec() const override;
  std::string name() const override { return spec_.name; }
  void reset(SeededRng& rng) override;
  StateFeatures state() const override { return {1.0}; }
  std::vector<Observation> observations() const override;
  StepResult step(const JointAction& joint_action) override;
  std::unique_ptr<Environment> clone() const override;

  bool has_marginal_oracle() const override { return true; }
  double marginal_reward(int agent, int action,
                         std::span<const std::vector<double>> other_probs) const override;

  const MatrixGameSpec& matrix() const { return spec_; }
  double payoff(const JointAction& joint_action) const;

 private:
  MatrixGameSpec spec_;
  double discount_;
  bool done_ = false;
};

// Exact expectation of `payoff` over the other agents' independent action
// distributions with agent `agent` fixed to `action`. Enumerates joint
// outcomes; other_probs is in ascending agent order excluding `agent`.
double enumerate_marginal_payoff(const std::function<double(const JointAction&)>& payoff,
                                 int agent, int action,
                                 std::span<const std::vector<double>> other_probs);

// ---------------------------------------------------------------------------
// Cooperative foraging gridworld (simplified level-based foraging)
// ---------------------------------------------------------------------------

enum ForagingAction : int { kNoop = 0, kUp = 1, kDown = 2, kLeftMove = 3, kRightMove = 4, kLoad = 5 };
constexpr int kForagingActions = 6;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct ForagingSpec {
  int rows = 5;
  int cols = 5;
  int n_agents = 2;
  int n_foods = 1;
  std::vector<int> agent_levels;   // size n_agents
  std::vector<int> food_levels;    // size n_foods
  // Every food's level is raised to the summed level of the three strongest
  // agents, so no smaller group can collect it.
  bool cooperative_only = false;
  int max_steps = 25;

  void validate() const;
  // Food levels after applying cooperative_only.
  std::vector<int> effective_food_levels() const;
};

struct ForagingState {
  std::vector<Cell> agent_positions;
  std::vector<Cell> food_positions;
  std::vector<int> food_levels;  // 0 once collected
  int step_count = 0;

  bool operator==(const ForagingState&) const = default;
};

struct ForagingStepResult {
  ForagingState next_state;
  double reward = 0.0;
  bool terminal = false;
};

// Uniform placement without overlap; foods keep off the border so every
// food has four free neighbours at reset.
ForagingState foraging_reset(const ForagingSpec& spec, SeededRng& rng);

// Deterministic dynamics. Moves into walls, foods or cells claimed by a
// lower-indexed agent (or held by a later agent) are no-ops. A food is
// collected when the adjacent agents issuing load have summed level >= its
// level; reward is collected level / total initial food level.
ForagingStepResult foraging_step(const ForagingState& state, const JointAction& joint_action,
                                 const ForagingSpec& spec);

// Own position, then every agent's (row, col, level), then every food's
// (row, col, level) with collected foods as (-1, -1, 0).
Observation foraging_observation(const ForagingState& state, const ForagingSpec& spec,
                                 int agent);
// Global features scaled to roughly [0, 1] for the critic.
StateFeatures foraging_state_features(const ForagingState& state, const ForagingSpec& spec);

class ForagingEnv final : public Environment {
 public:
  explicit ForagingEnv(ForagingSpec spec, double discount = 0.99);

  GameSpec spec() const override;
  std::string name() const override;
  void reset(SeededRng& rng) override;
  StateFeatures state() const override;
  std::vector<Observation> observations() const override;
  StepResult step(const JointAction& joint_action) override;
  std::unique_ptr<Environment> clone() const override;

  const ForagingState& current() const { return state_; }
  void set_state(ForagingState state) { state_ = std::move(state); }
  const ForagingSpec& foraging_spec() const { return spec_; }

 private:
  ForagingSpec spec_;
  double discount_;
  ForagingState state_;
};

}  // namespace perla

#endif  // PERLA_ENVS_HPP_
