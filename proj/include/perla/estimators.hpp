#ifndef PERLA_ESTIMATORS_HPP_
#define PERLA_ESTIMATORS_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perla/core.hpp"
#include "perla/policy.hpp"
#include "perla/rng.hpp"

namespace perla {

enum class EstimatorVariant { kCtde, kDecentralised, kPerla };

struct EstimatorKind {
  EstimatorVariant variant = EstimatorVariant::kCtde;
  int k = 1;  // counterfactual samples; used by kPerla only

  static EstimatorKind ctde() { return {EstimatorVariant::kCtde, 1}; }
  static EstimatorKind decentralised() { return {EstimatorVariant::kDecentralised, 1}; }
  static EstimatorKind perla(int k);

  // "ctde", "dt" or "perla".
  std::string label() const;
  static EstimatorKind parse(const std::string& label, int k = 1);
  bool operator==(const EstimatorKind&) const = default;
};

// Where the other agents' actions inside the critic come from.
enum class SampleMode {
  kSampled,           // fresh draws from the current joint policy
  kPinnedToExecuted,  // the single executed a_-i (vanilla centralised critic)
};

struct CounterfactualSamples {
  int agent = 0;
  // k tuples a_-i^(j), each of length n - 1 in ascending agent order.
  std::vector<std::vector<int>> others;
  std::vector<Observation> observations;

  int k() const { return static_cast<int>(others.size()); }
};

// Draws k independent a_-i tuples, each component j != i from
// pi_j(. | observations[j]). Throws InputError if i is out of range or k < 1.
CounterfactualSamples sample_counterfactual_joint_actions(const JointPolicy& joint_policy,
                                                          std::span<const Observation> observations,
                                                          int i, int k, SeededRng& rng);

// The degenerate single sample equal to the executed a_-i.
CounterfactualSamples pinned_counterfactuals(const JointAction& executed,
                                             std::span<const Observation> observations, int i);

// Q(s, a_i, a_-i) for agent `agent`.
using QCritic = std::function<double(const StateFeatures& state, int agent, int a_i,
                                     std::span<const int> others)>;
// V(s, a_-i) for agent `agent`; observations are those the samples were drawn at.
using VCritic = std::function<double(const StateFeatures& state, int agent,
                                     std::span<const int> others,
                                     std::span<const Observation> observations)>;

// (1/k) sum_j Q(s, a_i, a_-i^(j)).
double marginalized_q(const QCritic& critic_q, const StateFeatures& state, int a_i,
                      const CounterfactualSamples& samples);

// (1/k) sum_j V(s, a_-i^(j)).
double marginalized_value(const VCritic& critic_v, const StateFeatures& state,
                          const CounterfactualSamples& samples);

// reward + discount * next_value * [not terminal] - current_value.
double td_error(double reward, bool terminal, double discount, double next_value,
                double current_value);

// r + discount * V_hat(s') * [not terminal] - V_hat(s), where the bootstrap
// term is marginalised over samples drawn at the next observations.
double perla_td_error(const VCritic& critic_v, const Transition& transition,
                      const CounterfactualSamples& samples_current,
                      const CounterfactualSamples& samples_next, double discount);

// sum_t discount^t Q(s^t, a^t) grad log pi_i(a_i^t | tau_i^t).
ParamVector gradient_ctde(const Trajectory& trajectory, std::span<const double> q_values_per_step,
                          const Policy& policy_i, int i, double discount = 1.0);

// As gradient_ctde but weighted by the exact marginal Q-tilde(s^t, a_i^t).
ParamVector gradient_dt(const Trajectory& trajectory,
                        std::span<const double> qtilde_values_per_step, const Policy& policy_i,
                        int i, double discount = 1.0);

// Q-tilde(s^t, a_i^t) for every step, from the environment's enumeration
// oracle. Throws UnsupportedOperation when the environment has none.
std::vector<double> exact_marginal_q_values(const Environment& env, const Trajectory& trajectory,
                                            const JointPolicy& joint_policy, int i);

// sum_t discount^t Q_hat(s^t, a_i^t) grad log pi_i, with fresh counterfactual
// samples per step (or the executed a_-i when pinned).
ParamVector gradient_perla(const Trajectory& trajectory, const QCritic& critic_q,
                           const JointPolicy& joint_policy, int i, int k, SeededRng& rng,
                           double discount = 1.0, SampleMode mode = SampleMode::kSampled);

}  // namespace perla

#endif  // PERLA_ESTIMATORS_HPP_
