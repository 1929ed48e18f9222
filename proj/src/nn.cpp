#include "perla/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "perla/errors.hpp"

namespace perla {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'L', 'C'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("truncated critic file");
  return value;
}

}  // namespace

void MlpCritic::layout(std::vector<int> dims) {
  dims_ = std::move(dims);
  offsets_.clear();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1]) +
              static_cast<std::size_t>(dims_[l + 1]);
  }
  params_.assign(offset, 0.0);
}

MlpCritic::MlpCritic(int input_dim, std::vector<int> hidden, SeededRng& rng) {
  if (input_dim < 1) throw ConfigError("critic input dimension must be positive");
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  layout(std::move(dims));
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[static_cast<std::size_t>(l)]));
    for (double& w : weights(l)) w = (2.0 * rng.uniform() - 1.0) * bound;
  }
}

MlpCritic MlpCritic::zeros(int input_dim, std::vector<int> hidden) {
  MlpCritic net;
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  net.layout(std::move(dims));
  return net;
}

std::size_t MlpCritic::bias_offset(int layer) const {
  const std::size_t l = static_cast<std::size_t>(layer);
  return offsets_[l] + static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1]);
}

std::span<double> MlpCritic::weights(int layer) {
  const std::size_t l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer),
          static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1])};
}

std::span<const double> MlpCritic::weights(int layer) const {
  const std::size_t l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer),
          static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l + 1])};
}

std::span<double> MlpCritic::bias(int layer) {
  return {params_.data() + bias_offset(layer),
          static_cast<std::size_t>(dims_[static_cast<std::size_t>(layer) + 1])};
}

std::span<const double> MlpCritic::bias(int layer) const {
  return {params_.data() + bias_offset(layer),
          static_cast<std::size_t>(dims_[static_cast<std::size_t>(layer) + 1])};
}

std::vector<double> MlpCritic::first_layer(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != input_dim()) {
    throw ConfigError("critic input has dimension " + std::to_string(input.size()) +
                      ", expected " + std::to_string(input_dim()));
  }
  const int in = dims_[0];
  const int out = dims_[1];
  const std::span<const double> w = weights(0);
  const std::span<const double> b = bias(0);
  std::vector<double> z(b.begin(), b.end());
  for (int o = 0; o < out; ++o) {
    const double* row = w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
    double acc = 0.0;
    for (int k = 0; k < in; ++k) acc += row[k] * input[static_cast<std::size_t>(k)];
    z[static_cast<std::size_t>(o)] += acc;
  }
  return z;
}

std::vector<double> MlpCritic::first_layer_prefix(std::span<const double> prefix) const {
  if (static_cast<int>(prefix.size()) > input_dim()) throw ConfigError("critic input prefix too long");
  const std::size_t in = static_cast<std::size_t>(dims_[0]);
  const std::span<const double> w = weights(0);
  const std::span<const double> b = bias(0);
  std::vector<double> z(b.begin(), b.end());
  for (std::size_t o = 0; o < z.size(); ++o) {
    const double* row = w.data() + o * in;
    double acc = 0.0;
    for (std::size_t k = 0; k < prefix.size(); ++k) acc += row[k] * prefix[k];
    z[o] += acc;
  }
  return z;
}

void MlpCritic::add_input_column(std::span<double> preactivation, int column, double scale) const {
  const int in = dims_[0];
  const std::span<const double> w = weights(0);
  for (std::size_t o = 0; o < preactivation.size(); ++o) {
    preactivation[o] += scale * w[o * static_cast<std::size_t>(in) + static_cast<std::size_t>(column)];
  }
}

double MlpCritic::forward_from_first_layer(std::span<const double> preactivation) const {
  std::vector<double> act(preactivation.begin(), preactivation.end());
  std::vector<double> next;
  for (int l = 1; l < layer_count(); ++l) {
    for (double& a : act) a = a > 0.0 ? a : 0.0;
    const std::size_t in = static_cast<std::size_t>(dims_[static_cast<std::size_t>(l)]);
    const std::size_t out = static_cast<std::size_t>(dims_[static_cast<std::size_t>(l) + 1]);
    const std::span<const double> w = weights(l);
    const std::span<const double> b = bias(l);
    next.assign(b.begin(), b.end());
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w.data() + o * in;
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += row[k] * act[k];
      next[o] += acc;
    }
    act.swap(next);
  }
  return act[0];
}

double MlpCritic::forward(std::span<const double> input) const {
  const std::vector<double> z = first_layer(input);
  return forward_from_first_layer(z);
}

std::vector<double> MlpCritic::backward(std::span<const double> input, double output_gradient) const {
  std::vector<double> grads(params_.size(), 0.0);
  backward_accumulate(input, output_gradient, grads);
  return grads;
}

void MlpCritic::backward_accumulate(std::span<const double> input, double output_gradient,
                                    std::span<double> grads) const {
  if (grads.size() != params_.size()) throw ConfigError("gradient buffer has wrong size");
  if (output_gradient == 0.0) return;

  // Forward pass keeping every layer's input (post-activation).
  const int layers = layer_count();
  std::vector<std::vector<double>> inputs(static_cast<std::size_t>(layers));
  std::vector<std::vector<double>> pre(static_cast<std::size_t>(layers));
  inputs[0].assign(input.begin(), input.end());
  pre[0] = first_layer(input);
  for (int l = 1; l < layers; ++l) {
    const std::size_t ls = static_cast<std::size_t>(l);
    std::vector<double>& a = inputs[ls];
    a = pre[ls - 1];
    for (double& x : a) x = x > 0.0 ? x : 0.0;
    const std::size_t in = a.size();
    const std::size_t out = static_cast<std::size_t>(dims_[ls + 1]);
    const std::span<const double> w = weights(l);
    const std::span<const double> b = bias(l);
    pre[ls].assign(b.begin(), b.end());
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += w[o * in + k] * a[k];
      pre[ls][o] += acc;
    }
  }

  // Reverse sweep; delta is d(loss)/d(pre-activation) of the current layer.
  std::vector<double> delta{output_gradient};
  for (int l = layers - 1; l >= 0; --l) {
    const std::size_t ls = static_cast<std::size_t>(l);
    const std::vector<double>& a = inputs[ls];
    const std::size_t in = a.size();
    const std::size_t out = delta.size();
    double* gw = grads.data() + weight_offset(l);
    double* gb = grads.data() + bias_offset(l);
    for (std::size_t o = 0; o < out; ++o) {
      if (delta[o] == 0.0) continue;
      gb[o] += delta[o];
      for (std::size_t k = 0; k < in; ++k) gw[o * in + k] += delta[o] * a[k];
    }
    if (l == 0) break;
    const std::span<const double> w = weights(l);
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      if (delta[o] == 0.0) continue;
      for (std::size_t k = 0; k < in; ++k) prev[k] += w[o * in + k] * delta[o];
    }
    for (std::size_t k = 0; k < in; ++k) {
      if (pre[ls - 1][k] <= 0.0) prev[k] = 0.0;
    }
    delta.swap(prev);
  }
}

bool MlpCritic::all_finite() const {
  for (double x : params_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void MlpCritic::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims_.size()));
  for (int d : dims_) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double x : params_) write_le<double>(out, x);
  if (!out) throw ConfigError("failed writing " + path.string());
}

MlpCritic MlpCritic::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path.string() + " is not a critic parameter file");
  }
  const std::uint32_t n = read_le<std::uint32_t>(in);
  if (n < 2 || n > 64) throw ConfigError("implausible layer count in " + path.string());
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n; ++i) dims.push_back(static_cast<int>(read_le<std::uint32_t>(in)));
  MlpCritic net;
  net.layout(std::move(dims));
  for (double& x : net.params_) x = read_le<double>(in);
  return net;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw ConfigError("adam_step shape mismatch");
  }
  ++state.step;
  const AdamHyper& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t j = 0; j < params.size(); ++j) {
    state.m[j] = h.beta1 * state.m[j] + (1.0 - h.beta1) * grads[j];
    state.v[j] = h.beta2 * state.v[j] + (1.0 - h.beta2) * grads[j] * grads[j];
    const double m_hat = state.m[j] / c1;
    const double v_hat = state.v[j] / c2;
    params[j] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

}  // namespace perla
