#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "perla/errors.hpp"
#include "perla/nn.hpp"

using namespace perla;

namespace {

// Plain re-implementation of the forward pass from the flat layout.
double reference_forward(const MlpCritic& net, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.dims()[static_cast<std::size_t>(l)];
    const int out = net.dims()[static_cast<std::size_t>(l + 1)];
    const auto w = net.weights(l);
    const auto b = net.bias(l);
    std::vector<double> next(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      double z = b[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) z += w[static_cast<std::size_t>(o * in + i)] * h[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(o)] = l + 1 < net.layer_count() ? std::max(z, 0.0) : z;
    }
    h = std::move(next);
  }
  return h[0];
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("layout and initialisation") {
  SeededRng rng(1);
  const MlpCritic net(4, {8, 3}, rng);
  CHECK(net.dims() == std::vector<int>{4, 8, 3, 1});
  CHECK(net.parameter_count() == std::size_t(4 * 8 + 8 + 8 * 3 + 3 + 3 + 1));
  for (double w : net.weights(0)) CHECK(std::abs(w) <= 0.5);
  for (double b : net.bias(1)) CHECK(b == 0.0);
  CHECK(MlpCritic::zeros(3, {2}).forward(std::vector<double>{1, 2, 3}) == 0.0);
}

TEST_CASE("forward matches a hand computation") {
  MlpCritic net = MlpCritic::zeros(2, {2});
  auto w0 = net.weights(0);
  w0[0] = 1.0; w0[1] = -1.0;  // h0 = relu(x0 - x1 + 0.5)
  w0[2] = 2.0; w0[3] = 1.0;   // h1 = relu(2 x0 + x1)
  net.bias(0)[0] = 0.5;
  net.weights(1)[0] = 3.0;
  net.weights(1)[1] = -1.0;
  net.bias(1)[0] = 0.25;
  // x = (1, 3): h0 = relu(-1.5) = 0, h1 = 5; y = -5 + 0.25.
  CHECK(net.forward(std::vector<double>{1.0, 3.0}) == doctest::Approx(-4.75));
  CHECK_THROWS_AS(net.forward(std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("forward agrees with the reference implementation") {
  SeededRng rng(7);
  const MlpCritic net(5, {6, 4}, rng);
  SeededRng xs(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(5);
    for (double& v : x) v = xs.uniform() * 2 - 1;
    CHECK(net.forward(x) == doctest::Approx(reference_forward(net, x)).epsilon(1e-12));
  }
}

TEST_CASE("backward matches central differences") {
  SeededRng rng(3);
  MlpCritic net(4, {7, 5}, rng);
  for (double& b : net.parameters()) b += 0.05;  // keep units off the ReLU kink
  const std::vector<double> x{0.3, -0.2, 0.9, 0.1};
  const double g_out = 1.7;
  const std::vector<double> g = net.backward(x, g_out);
  REQUIRE(g.size() == net.parameter_count());
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t p = 0; p < net.parameter_count(); ++p) {
    const double keep = net.parameters()[p];
    net.parameters()[p] = keep + h;
    const double up = net.forward(x);
    net.parameters()[p] = keep - h;
    const double down = net.forward(x);
    net.parameters()[p] = keep;
    const double fd = g_out * (up - down) / (2 * h);
    CHECK(g[p] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("backward_accumulate sums") {
  SeededRng rng(4);
  const MlpCritic net(3, {4}, rng);
  const std::vector<double> a{1, 0, 0};
  const std::vector<double> b{0, 1, 1};
  std::vector<double> acc(net.parameter_count(), 0.0);
  net.backward_accumulate(a, 1.0, acc);
  net.backward_accumulate(b, 2.0, acc);
  const auto ga = net.backward(a, 1.0);
  const auto gb = net.backward(b, 2.0);
  for (std::size_t p = 0; p < acc.size(); ++p) CHECK(acc[p] == doctest::Approx(ga[p] + gb[p]));
}

TEST_CASE("first-layer folding equals the dense pass") {
  SeededRng rng(9);
  const MlpCritic net(6, {5}, rng);
  const std::vector<double> prefix{0.4, -0.7};
  std::vector<double> pre = net.first_layer_prefix(prefix);
  net.add_input_column(pre, 3);
  net.add_input_column(pre, 5, 0.5);
  const std::vector<double> dense{0.4, -0.7, 0.0, 1.0, 0.0, 0.5};
  const auto direct = net.first_layer(dense);
  for (std::size_t j = 0; j < pre.size(); ++j) CHECK(pre[j] == doctest::Approx(direct[j]));
  CHECK(net.forward_from_first_layer(pre) == doctest::Approx(net.forward(dense)));
}

TEST_CASE("save and load round-trip bit for bit") {
  SeededRng rng(11);
  const MlpCritic net(3, {4, 2}, rng);
  const auto path = std::filesystem::temp_directory_path() / "perla_nn_roundtrip.bin";
  net.save(path);
  const MlpCritic back = MlpCritic::load(path);
  CHECK(back.dims() == net.dims());
  CHECK(std::equal(back.parameters().begin(), back.parameters().end(), net.parameters().begin()));
  {
    std::ofstream junk(path, std::ios::binary | std::ios::trunc);
    junk << "not a network";
  }
  CHECK_THROWS(MlpCritic::load(path));
  std::filesystem::remove(path);
}

TEST_CASE("adam step matches a hand computation") {
  std::vector<double> params{1.0, -2.0};
  AdamState state(2, AdamHyper{0.1, 0.9, 0.999, 1e-8});
  const std::vector<double> g1{0.5, -1.0};
  adam_step(params, g1, state);
  // First bias-corrected step moves each parameter by lr * sign(g).
  CHECK(params[0] == doctest::Approx(0.9));
  CHECK(params[1] == doctest::Approx(-1.9));
  const std::vector<double> g2{0.1, 0.0};
  adam_step(params, g2, state);
  const double m = 0.9 * 0.05 + 0.1 * 0.1;
  const double v = 0.999 * 0.00025 + 0.001 * 0.01;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.999 * 0.999);
  CHECK(params[0] == doctest::Approx(0.9 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)));
  CHECK(state.step == 2);
}

}  // TEST_SUITE
