#ifndef PERLA_VARIANCE_LAB_HPP_
#define PERLA_VARIANCE_LAB_HPP_

#include <span>
#include <string>
#include <vector>

#include "perla/core.hpp"
#include "perla/estimators.hpp"
#include "perla/rng.hpp"

namespace perla {

// Toy team game: agent 0 plays SigmoidPolicy(theta), agents 1 and 2 are
// uniform. The game is one-shot and stateless, so Q is the reward.
double analytic_q_toy(const JointAction& joint_action);
// E over the four equiprobable partner tuples of Q(a1, a_-1).
double analytic_qtilde_toy(int a1);

// Closed forms obtained by enumerating the 8 joint outcomes.
double toy_gradient_mean(double theta);
double toy_gradient_variance(const EstimatorKind& kind, double theta);
struct ToyQVariances {
  double var_q = 0.0;       // Var over (a1, a_-1) of Q
  double var_qtilde = 0.0;  // Var over a1 of Q-tilde(a1)
};
ToyQVariances toy_q_variances(double theta);

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;         // unbiased
  double mean_half_width = 0.0;  // 95%, normal approximation
  double variance_half_width = 0.0;
};
// Throws InputError for fewer than two values.
SampleMoments sample_moments(std::span<const double> values);

struct VarianceReport {
  EstimatorKind kind;
  long trials = 0;
  double theta = 0.0;
  // One entry per policy parameter component.
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> mean_half_width;
  std::vector<double> variance_half_width;

  int k() const { return kind.k; }
  // Trace of the component-wise variance, and its CI half-width.
  double total_variance() const;
  double total_variance_half_width() const;
};

// Each trial draws one joint action on its own substream of `rng` and
// evaluates the chosen estimator once. `threads` only changes scheduling;
// the report is identical for any value.
VarianceReport measure_estimator_variance(const EstimatorKind& kind, long trials, double theta,
                                          const SeededRng& rng, int threads = 1);

struct DecompositionCheck {
  int k = 1;
  long trials = 0;
  double measured = 0.0;   // sample Var of Q_hat_k
  double predicted = 0.0;  // Var(Q)/k + (k-1)/k Var(Q-tilde)
  double residual = 0.0;   // |measured - predicted|
  double ci_half_width = 0.0;  // bootstrap, 95%
};

// Q_hat_k = (1/k) sum_j Q(a1, a_-1^(j)) at theta = 0, a1 ~ pi_1.
DecompositionCheck check_qhat_decomposition(int k, long trials, const SeededRng& rng,
                             int bootstrap_resamples = 200);

enum class EstimatorPair {
  kPerlaVsDecentralised,  // excess Var(g^P(k)) - Var(g^D), bound B^2 C^2 / k
  kCtdeVsDecentralised,   // excess Var(g^C) - Var(g^D), bound B^2 C^2
};

std::string pair_label(EstimatorPair pair);

struct BoundCheck {
  EstimatorPair pair = EstimatorPair::kPerlaVsDecentralised;
  double B = 0.0;      // sup |d log pi / d theta|
  double C = 0.0;      // sup |Q|
  double gamma = 0.0;  // single step, so the discount series sums to 1
  int k = 1;
  double theta = 0.0;
  double bound = 0.0;
  double measured_excess = 0.0;
  double slack = 0.0;  // combined CI half-widths of the two variances
  bool satisfied = false;
};

BoundCheck check_bounds(EstimatorPair pair, int k, long trials, const SeededRng& rng,
                        double theta = 0.0, int threads = 1);

struct ConvergenceCheck {
  int k = 1;
  int iterations = 0;
  double final_theta = 0.0;
  double averaged_gradient = 0.0;  // mean PERLA gradient at the final iterate
  double averaged_gradient_half_width = 0.0;
  double exact_gradient = 0.0;     // closed form at the final iterate
  bool converged = false;          // |averaged_gradient| < tolerance
};

// Stochastic gradient ascent on agent 1's theta in the toy game, each step
// using the mean PERLA(k) gradient over `batch` trials with the analytic
// critic, then the averaged gradient over `final_trials` at the last iterate.
ConvergenceCheck check_convergence(int k, int iterations, double lr, long batch,
                                   long final_trials, const SeededRng& rng,
                                   double tolerance = 1e-2);

}  // namespace perla

#endif  // PERLA_VARIANCE_LAB_HPP_
