#include "perla/envs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "perla/errors.hpp"

namespace perla {

// Matrix games --------------------------------------------------------------

CoordinationTable default_coordination_table(double optimal_payoff) {
  CoordinationTable table{};
  table[kLeft][kLeft] = optimal_payoff;
  table[kLeft][kRight] = -1.0;
  table[kRight][kLeft] = -1.0;
  table[kRight][kRight] = 0.5;
  return table;
}

double coordination_reward(const JointAction& joint_action, const CoordinationTable& payoff_table) {
  if (joint_action.size() != 2) throw InputError("coordination game takes two actions");
  const int a = joint_action[0];
  const int b = joint_action[1];
  if (a < 0 || a > 1 || b < 0 || b > 1) throw InputError("coordination actions must be l or r");
  return payoff_table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

double penalty_game_reward(const JointAction& joint_action, int n_agents, int n_actions) {
  if (joint_action.size() != n_agents) throw InputError("joint action length != n_agents");
  int on_a = 0;
  for (int a : joint_action.actions()) {
    if (a < 0 || a >= n_actions) throw InputError("penalty game action out of range");
    if (a == 0) ++on_a;
  }
  if (on_a == n_agents) return 8.0;
  if (on_a == n_agents - 1) return -12.0;
  return 0.0;
}

double toy_team_reward(const JointAction& joint_action) {
  if (joint_action.size() != 3) throw InputError("toy team game has three agents");
  int ones = 0;
  for (int a : joint_action.actions()) {
    if (a != 0 && a != 1) throw InputError("toy team game actions are binary");
    ones += a;
  }
  if (ones == 0) return 1.0;
  if (ones == 3) return 3.0;
  return 0.0;
}

std::vector<double> MatrixGameSpec::materialise() const {
  std::size_t total = 1;
  for (int i = 0; i < n_agents; ++i) total *= static_cast<std::size_t>(n_actions);
  std::vector<double> out(total);
  std::vector<int> digits(static_cast<std::size_t>(n_agents), 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (int i = n_agents - 1; i >= 0; --i) {
      digits[static_cast<std::size_t>(i)] = static_cast<int>(rest % static_cast<std::size_t>(n_actions));
      rest /= static_cast<std::size_t>(n_actions);
    }
    out[idx] = payoff(JointAction(digits));
  }
  return out;
}

MatrixGameSpec coordination_game_spec(const CoordinationTable& table) {
  return {"coordination", 2, 2,
          [table](const JointAction& ja) { return coordination_reward(ja, table); }};
}

MatrixGameSpec penalty_game_spec(int n_agents, int n_actions) {
  return {"penalty", n_agents, n_actions, [n_agents, n_actions](const JointAction& ja) {
            return penalty_game_reward(ja, n_agents, n_actions);
          }};
}

MatrixGameSpec toy_team_game_spec() { return {"toy", 3, 2, toy_team_reward}; }

MatrixGame::MatrixGame(MatrixGameSpec spec, double discount)
    : spec_(std::move(spec)), discount_(discount) {
  this->spec().validate();
}

GameSpec MatrixGame::spec() const {
  GameSpec g;
  g.n_agents = spec_.n_agents;
  g.action_counts.assign(static_cast<std::size_t>(spec_.n_agents), spec_.n_actions);
  g.observation_dims.assign(static_cast<std::size_t>(spec_.n_agents), 1);
  g.discount = discount_;
  g.horizon = 1;
  return g;
}

void MatrixGame::reset(SeededRng&) { done_ = false; }

std::vector<Observation> MatrixGame::observations() const {
  return std::vector<Observation>(static_cast<std::size_t>(spec_.n_agents), Observation{1.0});
}

double MatrixGame::payoff(const JointAction& joint_action) const {
  joint_action.check(spec());
  return spec_.payoff(joint_action);
}

StepResult MatrixGame::step(const JointAction& joint_action) {
  if (done_) throw InputError("step called on a finished matrix game; reset first");
  const double r = payoff(joint_action);
  done_ = true;
  return {r, true};
}

std::unique_ptr<Environment> MatrixGame::clone() const {
  return std::make_unique<MatrixGame>(*this);
}

double MatrixGame::marginal_reward(int agent, int action,
                                   std::span<const std::vector<double>> other_probs) const {
  return enumerate_marginal_payoff(spec_.payoff, agent, action, other_probs);
}

double enumerate_marginal_payoff(const std::function<double(const JointAction&)>& payoff,
                                 int agent, int action,
                                 std::span<const std::vector<double>> other_probs) {
  const std::size_t m = other_probs.size();
  std::vector<int> others(m, 0);
  double total = 0.0;
  while (true) {
    double weight = 1.0;
    for (std::size_t j = 0; j < m; ++j) weight *= other_probs[j][static_cast<std::size_t>(others[j])];
    if (weight > 0.0) total += weight * payoff(JointAction::compose(agent, action, others));
    // Odometer increment, last agent fastest.
    std::size_t j = m;
    while (j > 0) {
      --j;
      if (++others[j] < static_cast<int>(other_probs[j].size())) break;
      others[j] = 0;
      if (j == 0) return total;
    }
    if (m == 0) return total;
  }
}

// Foraging ------------------------------------------------------------------

namespace {

// Sum of the `count` highest agent levels.
int top_levels(std::vector<int> levels, std::size_t count) {
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.resize(std::min(count, levels.size()));
  return std::accumulate(levels.begin(), levels.end(), 0);
}

}  // namespace

void ForagingSpec::validate() const {
  if (rows < 3 || cols < 3) throw ConfigError("foraging grid must be at least 3x3");
  if (n_agents < 2) throw ConfigError("foraging needs at least 2 agents");
  if (n_foods < 1) throw ConfigError("foraging needs at least one food");
  if (static_cast<int>(agent_levels.size()) != n_agents) {
    throw ConfigError("agent_levels must have n_agents entries");
  }
  if (static_cast<int>(food_levels.size()) != n_foods) {
    throw ConfigError("food_levels must have n_foods entries");
  }
  if (max_steps < 1) throw ConfigError("max_steps must be positive");
  for (int level : agent_levels) {
    if (level < 1) throw ConfigError("agent levels must be positive");
  }
  const int team = std::accumulate(agent_levels.begin(), agent_levels.end(), 0);
  for (int level : food_levels) {
    if (level < 1) throw ConfigError("food levels must be positive");
    if (level > team) throw ConfigError("food level exceeds the team's summed level");
    // Only four cells touch a food.
    if (level > top_levels(agent_levels, 4)) {
      throw ConfigError("food level exceeds what four adjacent agents can lift");
    }
  }
  // Foods sit on interior cells with no food neighbour; agents anywhere else.
  const int interior = (rows - 2) * (cols - 2);
  if (n_foods > (interior + 1) / 2) throw ConfigError("too many foods for the grid interior");
  if (n_agents + n_foods > rows * cols) throw ConfigError("grid too small for all entities");
}

std::vector<int> ForagingSpec::effective_food_levels() const {
  if (!cooperative_only) return food_levels;
  return std::vector<int>(static_cast<std::size_t>(n_foods), top_levels(agent_levels, 3));
}

namespace {

bool adjacent(const Cell& a, const Cell& b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

bool occupied_by_food(const ForagingState& s, const Cell& c) {
  for (std::size_t f = 0; f < s.food_positions.size(); ++f) {
    if (s.food_levels[f] > 0 && s.food_positions[f] == c) return true;
  }
  return false;
}

}  // namespace

ForagingState foraging_reset(const ForagingSpec& spec, SeededRng& rng) {
  spec.validate();
  ForagingState state;
  state.food_levels = spec.effective_food_levels();
  while (static_cast<int>(state.food_positions.size()) < spec.n_foods) {
    const Cell c{1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.rows - 2))),
                 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cols - 2)))};
    const bool clash = std::any_of(state.food_positions.begin(), state.food_positions.end(),
                                   [&](const Cell& f) { return f == c || adjacent(f, c); });
    if (!clash) state.food_positions.push_back(c);
  }
  while (static_cast<int>(state.agent_positions.size()) < spec.n_agents) {
    const Cell c{static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.rows))),
                 static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cols)))};
    const bool taken =
        std::find(state.food_positions.begin(), state.food_positions.end(), c) !=
            state.food_positions.end() ||
        std::find(state.agent_positions.begin(), state.agent_positions.end(), c) !=
            state.agent_positions.end();
    if (!taken) state.agent_positions.push_back(c);
  }
  return state;
}

ForagingStepResult foraging_step(const ForagingState& state, const JointAction& joint_action,
                                 const ForagingSpec& spec) {
  const int n = spec.n_agents;
  if (joint_action.size() != n) throw InputError("foraging joint action length != n_agents");
  for (int a : joint_action.actions()) {
    if (a < 0 || a >= kForagingActions) {
      throw InputError("foraging action " + std::to_string(a) + " out of range");
    }
  }

  ForagingStepResult out;
  out.next_state = state;
  ForagingState& next = out.next_state;

  for (int i = 0; i < n; ++i) {
    const Cell from = state.agent_positions[static_cast<std::size_t>(i)];
    Cell to = from;
    switch (joint_action[i]) {
      case kUp: to.row -= 1; break;
      case kDown: to.row += 1; break;
      case kLeftMove: to.col -= 1; break;
      case kRightMove: to.col += 1; break;
      default: break;
    }
    if (to == from) continue;
    if (to.row < 0 || to.row >= spec.rows || to.col < 0 || to.col >= spec.cols) continue;
    if (occupied_by_food(state, to)) continue;
    bool blocked = false;
    for (int j = 0; j < n && !blocked; ++j) {
      if (j == i) continue;
      // Earlier agents have already resolved; later ones still hold their cell.
      const Cell& other = next.agent_positions[static_cast<std::size_t>(j)];
      blocked = other == to;
    }
    if (!blocked) next.agent_positions[static_cast<std::size_t>(i)] = to;
  }

  const std::vector<int> initial = spec.effective_food_levels();
  const double total_level = std::accumulate(initial.begin(), initial.end(), 0.0);
  for (std::size_t f = 0; f < next.food_levels.size(); ++f) {
    if (next.food_levels[f] <= 0) continue;
    int loading = 0;
    for (int i = 0; i < n; ++i) {
      if (joint_action[i] == kLoad &&
          adjacent(next.agent_positions[static_cast<std::size_t>(i)], next.food_positions[f])) {
        loading += spec.agent_levels[static_cast<std::size_t>(i)];
      }
    }
    if (loading >= next.food_levels[f]) {
      out.reward += next.food_levels[f] / total_level;
      next.food_levels[f] = 0;
    }
  }

  next.step_count = state.step_count + 1;
  const bool cleared =
      std::all_of(next.food_levels.begin(), next.food_levels.end(), [](int l) { return l <= 0; });
  out.terminal = cleared || next.step_count >= spec.max_steps;
  return out;
}

Observation foraging_observation(const ForagingState& state, const ForagingSpec& spec, int agent) {
  Observation obs;
  obs.reserve(static_cast<std::size_t>(2 + 3 * spec.n_agents + 3 * spec.n_foods));
  const Cell& own = state.agent_positions[static_cast<std::size_t>(agent)];
  obs.push_back(own.row);
  obs.push_back(own.col);
  for (int i = 0; i < spec.n_agents; ++i) {
    const Cell& c = state.agent_positions[static_cast<std::size_t>(i)];
    obs.push_back(c.row);
    obs.push_back(c.col);
    obs.push_back(spec.agent_levels[static_cast<std::size_t>(i)]);
  }
  for (int f = 0; f < spec.n_foods; ++f) {
    const std::size_t fi = static_cast<std::size_t>(f);
    if (state.food_levels[fi] > 0) {
      obs.push_back(state.food_positions[fi].row);
      obs.push_back(state.food_positions[fi].col);
      obs.push_back(state.food_levels[fi]);
    } else {
      obs.insert(obs.end(), {-1.0, -1.0, 0.0});
    }
  }
  return obs;
}

StateFeatures foraging_state_features(const ForagingState& state, const ForagingSpec& spec) {
  StateFeatures x;
  const double rs = spec.rows - 1;
  const double cs = spec.cols - 1;
  const double team = std::accumulate(spec.agent_levels.begin(), spec.agent_levels.end(), 0.0);
  for (int i = 0; i < spec.n_agents; ++i) {
    const Cell& c = state.agent_positions[static_cast<std::size_t>(i)];
    x.push_back(c.row / rs);
    x.push_back(c.col / cs);
    x.push_back(spec.agent_levels[static_cast<std::size_t>(i)] / team);
  }
  for (int f = 0; f < spec.n_foods; ++f) {
    const std::size_t fi = static_cast<std::size_t>(f);
    const bool present = state.food_levels[fi] > 0;
    x.push_back(present ? state.food_positions[fi].row / rs : 0.0);
    x.push_back(present ? state.food_positions[fi].col / cs : 0.0);
    x.push_back(present ? 1.0 : 0.0);
    x.push_back(present ? state.food_levels[fi] / team : 0.0);
  }
  x.push_back(static_cast<double>(state.step_count) / spec.max_steps);
  return x;
}

ForagingEnv::ForagingEnv(ForagingSpec spec, double discount)
    : spec_(std::move(spec)), discount_(discount) {
  spec_.validate();
  SeededRng rng(0);
  state_ = foraging_reset(spec_, rng);
}

GameSpec ForagingEnv::spec() const {
  GameSpec g;
  g.n_agents = spec_.n_agents;
  g.action_counts.assign(static_cast<std::size_t>(spec_.n_agents), kForagingActions);
  g.observation_dims.assign(static_cast<std::size_t>(spec_.n_agents),
                            2 + 3 * spec_.n_agents + 3 * spec_.n_foods);
  g.discount = discount_;
  g.horizon = spec_.max_steps;
  return g;
}

std::string ForagingEnv::name() const {
  return "foraging-" + std::to_string(spec_.rows) + "x" + std::to_string(spec_.cols) + "-" +
         std::to_string(spec_.n_agents) + "p-" + std::to_string(spec_.n_foods) + "f" +
         (spec_.cooperative_only ? "-coop" : "");
}

void ForagingEnv::reset(SeededRng& rng) { state_ = foraging_reset(spec_, rng); }

StateFeatures ForagingEnv::state() const { return foraging_state_features(state_, spec_); }

std::vector<Observation> ForagingEnv::observations() const {
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(spec_.n_agents));
  for (int i = 0; i < spec_.n_agents; ++i) out.push_back(foraging_observation(state_, spec_, i));
  return out;
}

StepResult ForagingEnv::step(const JointAction& joint_action) {
  ForagingStepResult r = foraging_step(state_, joint_action, spec_);
  state_ = std::move(r.next_state);
  return {r.reward, r.terminal};
}

std::unique_ptr<Environment> ForagingEnv::clone() const {
  return std::make_unique<ForagingEnv>(*this);
}

}  // namespace perla
