#include "perla/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "perla/errors.hpp"

namespace perla {

namespace {

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  double max_z = -INFINITY;
  for (double x : logits) {
    if (!std::isfinite(x)) throw NumericError("non-finite logit");
    max_z = std::max(max_z, x / temperature);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    p[a] = std::exp(logits[a] / temperature - max_z);
    total += p[a];
  }
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

// ActionDistribution --------------------------------------------------------

ActionDistribution::ActionDistribution(std::vector<double> probabilities)
    : p_(std::move(probabilities)) {
  if (p_.empty()) throw NumericError("empty action distribution");
  double total = 0.0;
  for (double x : p_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw NumericError("invalid action probability");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw NumericError("action probabilities sum to " + std::to_string(total));
  }
}

int ActionDistribution::sample(SeededRng& rng) const {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (int a = 0; a < size(); ++a) {
    cumulative += p_[static_cast<std::size_t>(a)];
    if (u < cumulative) return a;
  }
  // Rounding left u above the final partial sum; return the last action with
  // positive mass.
  for (int a = size() - 1; a >= 0; --a) {
    if (p_[static_cast<std::size_t>(a)] > 0.0) return a;
  }
  return size() - 1;
}

int ActionDistribution::greedy() const {
  return static_cast<int>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

double ActionDistribution::entropy() const {
  double h = 0.0;
  for (double x : p_) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

// ParamVector ---------------------------------------------------------------

std::vector<double>& ParamVector::row(const Observation& key, int width) {
  auto [it, inserted] = rows_.try_emplace(key);
  if (inserted) it->second.assign(static_cast<std::size_t>(width), 0.0);
  return it->second;
}

ParamVector& ParamVector::add_scaled(const ParamVector& other, double scale) {
  for (const auto& [key, values] : other.rows_) {
    std::vector<double>& dst = row(key, static_cast<int>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) dst[j] += scale * values[j];
  }
  return *this;
}

ParamVector& ParamVector::scale(double factor) {
  for (auto& [key, values] : rows_) {
    for (double& x : values) x *= factor;
  }
  return *this;
}

double ParamVector::dot(const ParamVector& other) const {
  double total = 0.0;
  for (const auto& [key, values] : rows_) {
    auto it = other.rows_.find(key);
    if (it == other.rows_.end()) continue;
    for (std::size_t j = 0; j < values.size(); ++j) total += values[j] * it->second[j];
  }
  return total;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  for (const auto& [key, values] : rows_) out.insert(out.end(), values.begin(), values.end());
  return out;
}

// Policy --------------------------------------------------------------------

double Policy::log_prob(const Observation& obs, int action) const {
  return std::log(action_probabilities(obs)[action]);
}

SoftmaxPolicy::SoftmaxPolicy(int n_actions, double temperature)
    : n_actions_(n_actions), temperature_(temperature) {
  if (n_actions < 1) throw ConfigError("softmax policy needs at least one action");
  if (!(temperature > 0.0)) throw ConfigError("softmax temperature must be positive");
}

ActionDistribution SoftmaxPolicy::action_probabilities(const Observation& obs) const {
  auto it = table_.find(obs);
  if (it == table_.end()) {
    return ActionDistribution(std::vector<double>(static_cast<std::size_t>(n_actions_),
                                                  1.0 / n_actions_));
  }
  std::vector<double> p = softmax(it->second, temperature_);
  // Renormalise so the simplex check holds to the last ulp.
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return ActionDistribution(std::move(p));
}

double SoftmaxPolicy::log_prob(const Observation& obs, int action) const {
  const double p = action_probabilities(obs)[action];
  if (p > 0.0) return std::log(p);
  const std::vector<double> z = logits(obs);
  const double top = *std::max_element(z.begin(), z.end()) / temperature_;
  double sum = 0.0;
  for (double x : z) sum += std::exp(x / temperature_ - top);
  return z[static_cast<std::size_t>(action)] / temperature_ - top - std::log(sum);
}

ParamVector SoftmaxPolicy::log_prob_gradient(const Observation& obs, int action) const {
  if (action < 0 || action >= n_actions_) {
    throw InputError("action " + std::to_string(action) + " out of range");
  }
  const ActionDistribution dist = action_probabilities(obs);
  ParamVector grad;
  std::vector<double>& row = grad.row(obs, n_actions_);
  for (int b = 0; b < n_actions_; ++b) {
    row[static_cast<std::size_t>(b)] = ((b == action ? 1.0 : 0.0) - dist[b]) / temperature_;
  }
  return grad;
}

ParamVector SoftmaxPolicy::entropy_gradient(const Observation& obs) const {
  const ActionDistribution dist = action_probabilities(obs);
  const double h = dist.entropy();
  ParamVector grad;
  std::vector<double>& row = grad.row(obs, n_actions_);
  for (int b = 0; b < n_actions_; ++b) {
    const double p = dist[b];
    row[static_cast<std::size_t>(b)] = p > 0.0 ? -p * (std::log(p) + h) / temperature_ : 0.0;
  }
  return grad;
}

void SoftmaxPolicy::apply(const ParamVector& step) {
  for (const auto& [key, values] : step.rows()) {
    if (static_cast<int>(values.size()) != n_actions_) {
      throw ConfigError("parameter row width does not match action count");
    }
    auto [it, inserted] = table_.try_emplace(key);
    if (inserted) it->second.assign(static_cast<std::size_t>(n_actions_), 0.0);
    for (std::size_t j = 0; j < values.size(); ++j) it->second[j] += values[j];
  }
}

ParamVector SoftmaxPolicy::parameters() const {
  ParamVector out;
  for (const auto& [key, logits] : table_) out.row(key, n_actions_) = logits;
  return out;
}

bool SoftmaxPolicy::all_finite() const {
  for (const auto& [key, logits] : table_) {
    for (double x : logits) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::unique_ptr<Policy> SoftmaxPolicy::clone() const {
  return std::make_unique<SoftmaxPolicy>(*this);
}

void SoftmaxPolicy::set_logits(const Observation& obs, std::vector<double> logits) {
  if (static_cast<int>(logits.size()) != n_actions_) {
    throw InputError("logit row width does not match action count");
  }
  table_[obs] = std::move(logits);
}

std::vector<double> SoftmaxPolicy::logits(const Observation& obs) const {
  auto it = table_.find(obs);
  if (it == table_.end()) return std::vector<double>(static_cast<std::size_t>(n_actions_), 0.0);
  return it->second;
}

// SigmoidPolicy -------------------------------------------------------------

const Observation& SigmoidPolicy::key() {
  static const Observation empty;
  return empty;
}

double SigmoidPolicy::p_one() const {
  if (!std::isfinite(theta_)) throw NumericError("non-finite sigmoid parameter");
  return 1.0 / (1.0 + std::exp(-theta_));
}

ActionDistribution SigmoidPolicy::action_probabilities(const Observation&) const {
  const double p1 = p_one();
  return ActionDistribution({1.0 - p1, p1});
}

ParamVector SigmoidPolicy::log_prob_gradient(const Observation&, int action) const {
  if (action != 0 && action != 1) throw InputError("sigmoid policy action must be 0 or 1");
  const double s = p_one();
  ParamVector grad;
  grad.row(key(), 1)[0] = action == 1 ? 1.0 - s : -s;
  return grad;
}

ParamVector SigmoidPolicy::entropy_gradient(const Observation&) const {
  // H = -s log s - (1-s) log(1-s); dH/dtheta = -theta * s * (1 - s).
  const double s = p_one();
  ParamVector grad;
  grad.row(key(), 1)[0] = -theta_ * s * (1.0 - s);
  return grad;
}

void SigmoidPolicy::apply(const ParamVector& step) {
  for (const auto& [k, values] : step.rows()) {
    if (values.size() != 1) throw ConfigError("sigmoid policy has a single parameter");
    theta_ += values[0];
  }
}

ParamVector SigmoidPolicy::parameters() const {
  ParamVector out;
  out.row(key(), 1)[0] = theta_;
  return out;
}

bool SigmoidPolicy::all_finite() const { return std::isfinite(theta_); }

std::unique_ptr<Policy> SigmoidPolicy::clone() const {
  return std::make_unique<SigmoidPolicy>(*this);
}

// JointPolicy ---------------------------------------------------------------

JointPolicy::JointPolicy(const JointPolicy& other) {
  policies_.reserve(other.policies_.size());
  for (const auto& p : other.policies_) policies_.push_back(p->clone());
}

JointPolicy& JointPolicy::operator=(const JointPolicy& other) {
  if (this != &other) {
    JointPolicy copy(other);
    *this = std::move(copy);
  }
  return *this;
}

JointPolicy JointPolicy::uniform_softmax(const GameSpec& spec) {
  std::vector<std::unique_ptr<Policy>> policies;
  for (int count : spec.action_counts) policies.push_back(std::make_unique<SoftmaxPolicy>(count));
  return JointPolicy(std::move(policies));
}

void JointPolicy::check(const GameSpec& spec) const {
  if (n_agents() != spec.n_agents) {
    throw ConfigError("joint policy has " + std::to_string(n_agents()) +
                      " agents, environment has " + std::to_string(spec.n_agents));
  }
  for (int i = 0; i < n_agents(); ++i) {
    if (agent(i).action_count() != spec.action_counts[static_cast<std::size_t>(i)]) {
      throw ConfigError("policy of agent " + std::to_string(i) + " has wrong action count");
    }
  }
}

JointAction JointPolicy::sample(std::span<const Observation> observations, SeededRng& rng) const {
  std::vector<int> actions(policies_.size());
  for (std::size_t i = 0; i < policies_.size(); ++i) {
    actions[i] = policies_[i]->sample_action(observations[i], rng);
  }
  return JointAction(std::move(actions));
}

JointAction JointPolicy::greedy(std::span<const Observation> observations) const {
  std::vector<int> actions(policies_.size());
  for (std::size_t i = 0; i < policies_.size(); ++i) {
    actions[i] = policies_[i]->action_probabilities(observations[i]).greedy();
  }
  return JointAction(std::move(actions));
}

}  // namespace perla
