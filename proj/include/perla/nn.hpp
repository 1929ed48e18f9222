#ifndef PERLA_NN_HPP_
#define PERLA_NN_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "perla/rng.hpp"

namespace perla {

// Fully connected ReLU network with a scalar linear output. All weights and
// biases live in one flat vector: for each layer, a row-major (out x in)
// weight block followed by its bias.
class MlpCritic {
 public:
  MlpCritic() = default;
  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  MlpCritic(int input_dim, std::vector<int> hidden, SeededRng& rng);
  // Zero-initialised network of the given shape.
  static MlpCritic zeros(int input_dim, std::vector<int> hidden);

  int input_dim() const { return dims_.empty() ? 0 : dims_.front(); }
  // Layer widths including input and the scalar output.
  const std::vector<int>& dims() const { return dims_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::span<double> weights(int layer);
  std::span<const double> weights(int layer) const;
  std::span<double> bias(int layer);
  std::span<const double> bias(int layer) const;
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }

  // Throws ConfigError on dimension mismatch.
  double forward(std::span<const double> input) const;

  // d(output * output_gradient)/d(params) at `input`; same layout as
  // parameters(). Recomputes the forward activations.
  std::vector<double> backward(std::span<const double> input, double output_gradient) const;
  // Accumulating variant for batched losses.
  void backward_accumulate(std::span<const double> input, double output_gradient,
                           std::span<double> grads) const;

  // First-layer pre-activation W0 x + b0 for a dense input.
  std::vector<double> first_layer(std::span<const double> input) const;
  // W0[:, :prefix.size()] prefix + b0: the pre-activation with every input
  // past the prefix set to zero.
  std::vector<double> first_layer_prefix(std::span<const double> prefix) const;
  // Adds `scale` times column `column` of W0 to a first-layer pre-activation,
  // which is how one-hot input blocks are folded in without a dense pass.
  void add_input_column(std::span<double> preactivation, int column, double scale = 1.0) const;
  // Completes the forward pass from a first-layer pre-activation.
  double forward_from_first_layer(std::span<const double> preactivation) const;

  bool all_finite() const;

  // Flat little-endian binary: magic, layer count, widths, then float64
  // parameters.
  void save(const std::filesystem::path& path) const;
  static MlpCritic load(const std::filesystem::path& path);

 private:
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  std::size_t bias_offset(int layer) const;
  void layout(std::vector<int> dims);

  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t size, AdamHyper hyper)
      : m(size, 0.0), v(size, 0.0), hyper(hyper) {}

  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  AdamHyper hyper;
};

// Bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace perla

#endif  // PERLA_NN_HPP_
