#ifndef PERLA_POLICY_HPP_
#define PERLA_POLICY_HPP_

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "perla/core.hpp"
#include "perla/rng.hpp"

namespace perla {

class ActionDistribution {
 public:
  ActionDistribution() = default;
  // Throws NumericError unless entries are non-negative and sum to 1 (1e-12).
  explicit ActionDistribution(std::vector<double> probabilities);

  int size() const { return static_cast<int>(p_.size()); }
  double operator[](int a) const { return p_[static_cast<std::size_t>(a)]; }
  const std::vector<double>& probabilities() const { return p_; }

  // Inverse-CDF sampling; consumes exactly one uniform draw.
  int sample(SeededRng& rng) const;
  // Lowest-index argmax.
  int greedy() const;
  double entropy() const;

 private:
  std::vector<double> p_;
};

// Parameter-space vector for a policy. Parameters are grouped in rows keyed
// by observation, so tabular gradients stay sparse.
class ParamVector {
 public:
  using Rows = std::map<Observation, std::vector<double>>;

  std::vector<double>& row(const Observation& key, int width);
  const Rows& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  ParamVector& add_scaled(const ParamVector& other, double scale);
  ParamVector& scale(double factor);
  double dot(const ParamVector& other) const;
  double squared_norm() const { return dot(*this); }
  // Row-major concatenation in key order, for scalar reports.
  std::vector<double> flatten() const;

  bool operator==(const ParamVector&) const = default;

 private:
  Rows rows_;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual int action_count() const = 0;
  virtual ActionDistribution action_probabilities(const Observation& obs) const = 0;
  // d/dtheta log pi(action | obs).
  virtual ParamVector log_prob_gradient(const Observation& obs, int action) const = 0;
  // d/dtheta H(pi(. | obs)).
  virtual ParamVector entropy_gradient(const Observation& obs) const = 0;
  // theta <- theta + step.
  virtual void apply(const ParamVector& step) = 0;
  virtual ParamVector parameters() const = 0;
  virtual bool all_finite() const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;

  int sample_action(const Observation& obs, SeededRng& rng) const {
    return action_probabilities(obs).sample(rng);
  }
  virtual double log_prob(const Observation& obs, int action) const;
};

// pi(a | obs) = softmax(logits[obs] / temperature). Unseen observations use
// an all-zero row, i.e. the uniform policy.
class SoftmaxPolicy final : public Policy {
 public:
  explicit SoftmaxPolicy(int n_actions, double temperature = 1.0);

  int action_count() const override { return n_actions_; }
  ActionDistribution action_probabilities(const Observation& obs) const override;
  ParamVector log_prob_gradient(const Observation& obs, int action) const override;
  ParamVector entropy_gradient(const Observation& obs) const override;
  void apply(const ParamVector& step) override;
  ParamVector parameters() const override;
  bool all_finite() const override;
  std::unique_ptr<Policy> clone() const override;
  // Falls back to log-sum-exp when the probability underflows.
  double log_prob(const Observation& obs, int action) const override;

  void set_logits(const Observation& obs, std::vector<double> logits);
  std::vector<double> logits(const Observation& obs) const;
  double temperature() const { return temperature_; }
  std::size_t table_size() const { return table_.size(); }

 private:
  int n_actions_;
  double temperature_;
  std::map<Observation, std::vector<double>> table_;
};

// Binary policy with P(a = 1) = 1 / (1 + exp(-theta)); ignores observations.
class SigmoidPolicy final : public Policy {
 public:
  explicit SigmoidPolicy(double theta = 0.0) : theta_(theta) {}

  int action_count() const override { return 2; }
  ActionDistribution action_probabilities(const Observation& obs) const override;
  ParamVector log_prob_gradient(const Observation& obs, int action) const override;
  ParamVector entropy_gradient(const Observation& obs) const override;
  void apply(const ParamVector& step) override;
  ParamVector parameters() const override;
  bool all_finite() const override;
  std::unique_ptr<Policy> clone() const override;

  double theta() const { return theta_; }
  void set_theta(double theta) { theta_ = theta; }
  double p_one() const;

  // The single parameter row lives under the empty observation key.
  static const Observation& key();

 private:
  double theta_;
};

// One decentralised policy per agent; copyable via clone.
class JointPolicy {
 public:
  JointPolicy() = default;
  explicit JointPolicy(std::vector<std::unique_ptr<Policy>> policies)
      : policies_(std::move(policies)) {}
  JointPolicy(const JointPolicy& other);
  JointPolicy& operator=(const JointPolicy& other);
  JointPolicy(JointPolicy&&) noexcept = default;
  JointPolicy& operator=(JointPolicy&&) noexcept = default;

  // n independent uniform softmax tables sized from the game.
  static JointPolicy uniform_softmax(const GameSpec& spec);

  int n_agents() const { return static_cast<int>(policies_.size()); }
  const Policy& agent(int i) const { return *policies_.at(static_cast<std::size_t>(i)); }
  Policy& agent(int i) { return *policies_.at(static_cast<std::size_t>(i)); }

  // Throws ConfigError when agent counts or action counts disagree.
  void check(const GameSpec& spec) const;

  // Samples every agent at its own observation, in ascending agent order.
  JointAction sample(std::span<const Observation> observations, SeededRng& rng) const;
  JointAction greedy(std::span<const Observation> observations) const;

 private:
  std::vector<std::unique_ptr<Policy>> policies_;
};

}  // namespace perla

#endif  // PERLA_POLICY_HPP_
