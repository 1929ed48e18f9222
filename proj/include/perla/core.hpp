#ifndef PERLA_CORE_HPP_
#define PERLA_CORE_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "perla/rng.hpp"

namespace perla {

using Observation = std::vector<double>;
using StateFeatures = std::vector<double>;

struct GameSpec {
  int n_agents = 2;
  std::vector<int> action_counts;
  std::vector<int> observation_dims;
  double discount = 0.99;
  int horizon = 1;

  // Throws ConfigError unless n_agents >= 2, every action count >= 2,
  // discount in [0, 1) and horizon >= 1.
  void validate() const;
};

class JointAction {
 public:
  JointAction() = default;
  explicit JointAction(std::vector<int> actions) : actions_(std::move(actions)) {}

  int size() const { return static_cast<int>(actions_.size()); }
  int operator[](int i) const { return actions_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& actions() const { return actions_; }

  // a_{-i}: the other agents' actions in ascending agent order.
  std::vector<int> others(int i) const;

  // Joint action with agent i playing a_i and everyone else playing
  // `others` (ascending order, length n - 1).
  static JointAction compose(int i, int a_i, std::span<const int> others);

  // Throws InputError when the length or any index is out of range.
  void check(const GameSpec& spec) const;

  bool operator==(const JointAction&) const = default;

 private:
  std::vector<int> actions_;
};

struct Transition {
  StateFeatures state;
  std::vector<Observation> observations;
  JointAction joint_action;
  double reward = 0.0;
  StateFeatures next_state;
  std::vector<Observation> next_observations;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;

  bool empty() const { return transitions.empty(); }
  std::size_t size() const { return transitions.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct StepResult {
  double reward = 0.0;
  bool terminal = false;
};

// A fully cooperative Markov game: one shared reward per step.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual GameSpec spec() const = 0;
  virtual std::string name() const = 0;

  virtual void reset(SeededRng& rng) = 0;
  virtual StateFeatures state() const = 0;
  virtual std::vector<Observation> observations() const = 0;
  virtual StepResult step(const JointAction& joint_action) = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;

  // Exact E_{a_-i ~ pi_-i}[r(a_i, a_-i)] at the current state. Only
  // single-step enumerable games provide it.
  virtual bool has_marginal_oracle() const { return false; }
  virtual double marginal_reward(int agent, int action,
                                 std::span<const std::vector<double>> other_probs) const;
};

class JointPolicy;

// Runs the joint policy from the environment's current (already reset) state
// for at most `horizon` steps, stopping at a terminal transition.
Trajectory rollout(Environment& env, const JointPolicy& joint_policy, int horizon,
                   SeededRng& rng);

// Sum_t discount^t r_t. Throws InputError on an empty trajectory.
double discounted_return(const Trajectory& trajectory, double discount);

}  // namespace perla

#endif  // PERLA_CORE_HPP_
