#include "perla/core.hpp"

#include <cmath>
#include <string>

#include "perla/errors.hpp"
#include "perla/policy.hpp"

namespace perla {

void GameSpec::validate() const {
  if (n_agents < 2) throw ConfigError("game needs at least 2 agents");
  if (static_cast<int>(action_counts.size()) != n_agents) {
    throw ConfigError("action_counts length " + std::to_string(action_counts.size()) +
                      " != n_agents " + std::to_string(n_agents));
  }
  for (int count : action_counts) {
    if (count < 2) throw ConfigError("every agent needs at least 2 actions");
  }
  if (!observation_dims.empty() && static_cast<int>(observation_dims.size()) != n_agents) {
    throw ConfigError("observation_dims length must equal n_agents");
  }
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (horizon < 1) throw ConfigError("horizon must be positive");
}

std::vector<int> JointAction::others(int i) const {
  if (i < 0 || i >= size()) throw InputError("agent index " + std::to_string(i) + " out of range");
  std::vector<int> out;
  out.reserve(actions_.size() - 1);
  for (int j = 0; j < size(); ++j) {
    if (j != i) out.push_back(actions_[static_cast<std::size_t>(j)]);
  }
  return out;
}

JointAction JointAction::compose(int i, int a_i, std::span<const int> others) {
  std::vector<int> actions;
  actions.reserve(others.size() + 1);
  std::size_t next = 0;
  for (std::size_t j = 0; j <= others.size(); ++j) {
    if (static_cast<int>(j) == i) {
      actions.push_back(a_i);
    } else {
      actions.push_back(others[next++]);
    }
  }
  return JointAction(std::move(actions));
}

void JointAction::check(const GameSpec& spec) const {
  if (size() != spec.n_agents) {
    throw InputError("joint action has " + std::to_string(size()) + " entries, game has " +
                     std::to_string(spec.n_agents) + " agents");
  }
  for (int j = 0; j < size(); ++j) {
    const int a = (*this)[j];
    if (a < 0 || a >= spec.action_counts[static_cast<std::size_t>(j)]) {
      throw InputError("action " + std::to_string(a) + " out of range for agent " +
                       std::to_string(j));
    }
  }
}

double Environment::marginal_reward(int, int, std::span<const std::vector<double>>) const {
  throw UnsupportedOperation("environment '" + name() + "' has no exact marginal oracle");
}

Trajectory rollout(Environment& env, const JointPolicy& joint_policy, int horizon,
                   SeededRng& rng) {
  const GameSpec spec = env.spec();
  joint_policy.check(spec);
  Trajectory trajectory;
  trajectory.seed = rng.seed();
  if (horizon <= 0) return trajectory;
  trajectory.transitions.reserve(static_cast<std::size_t>(horizon));

  StateFeatures state = env.state();
  std::vector<Observation> observations = env.observations();
  for (int t = 0; t < horizon; ++t) {
    Transition tr;
    tr.joint_action = joint_policy.sample(observations, rng);
    const StepResult result = env.step(tr.joint_action);
    if (!std::isfinite(result.reward)) throw NumericError("environment produced non-finite reward");
    tr.state = std::move(state);
    tr.observations = std::move(observations);
    tr.reward = result.reward;
    tr.terminal = result.terminal;
    tr.next_state = env.state();
    tr.next_observations = env.observations();
    state = tr.next_state;
    observations = tr.next_observations;
    trajectory.transitions.push_back(std::move(tr));
    if (result.terminal) break;
  }
  return trajectory;
}

double discounted_return(const Trajectory& trajectory, double discount) {
  if (trajectory.empty()) throw InputError("discounted_return of an empty trajectory");
  double total = 0.0;
  double weight = 1.0;
  for (const Transition& tr : trajectory.transitions) {
    total += weight * tr.reward;
    weight *= discount;
  }
  return total;
}

}  // namespace perla
