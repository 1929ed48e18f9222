#include <cmath>
#include <vector>

#include "doctest.h"
#include "perla/errors.hpp"
#include "perla/policy.hpp"

using namespace perla;

namespace {

// Central difference of f over every logit of `obs`, compared with the
// analytic row.
template <class F>
void check_row_gradient(SoftmaxPolicy& policy, const Observation& obs, const ParamVector& grad,
                        F f) {
  const std::vector<double> base = policy.logits(obs);
  const double h = 1e-6;
  auto rows = grad.rows();
  const std::vector<double> analytic = rows.count(obs) ? rows.at(obs) : std::vector<double>(base.size());
  for (std::size_t j = 0; j < base.size(); ++j) {
    std::vector<double> up = base;
    std::vector<double> down = base;
    up[j] += h;
    down[j] -= h;
    policy.set_logits(obs, up);
    const double fu = f();
    policy.set_logits(obs, down);
    const double fd = f();
    policy.set_logits(obs, base);
    CHECK(analytic[j] == doctest::Approx((fu - fd) / (2 * h)).epsilon(1e-6));
  }
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("action distribution validates and samples by inverse CDF") {
  CHECK_THROWS_AS(ActionDistribution({0.5, 0.6}), NumericError);
  CHECK_THROWS_AS(ActionDistribution({-0.1, 1.1}), NumericError);
  const ActionDistribution d({0.2, 0.5, 0.3});
  SeededRng rng(5);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(d.sample(rng))];
  for (int a = 0; a < 3; ++a) {
    const double p = d[a];
    const double sd = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(counts[static_cast<std::size_t>(a)] / double(n) - p) < 4 * sd);
  }
  SeededRng r2(1);
  const auto before = r2.draws();
  (void)d.sample(r2);
  CHECK(r2.draws() == before + 1);
}

TEST_CASE("greedy breaks ties to the lowest index") {
  CHECK(ActionDistribution({0.25, 0.25, 0.25, 0.25}).greedy() == 0);
  CHECK(ActionDistribution({0.1, 0.45, 0.45}).greedy() == 1);
  CHECK(ActionDistribution({0.5, 0.5}).entropy() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softmax probabilities and unseen observations") {
  SoftmaxPolicy p(3);
  const Observation o{0.0, 1.0};
  const auto u = p.action_probabilities(o);
  for (int a = 0; a < 3; ++a) CHECK(u[a] == doctest::Approx(1.0 / 3));
  p.set_logits(o, {1.0, 2.0, 3.0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p.action_probabilities(o)[2] == doctest::Approx(std::exp(3.0) / z));
  CHECK(p.action_probabilities(Observation{9.0})[0] == doctest::Approx(1.0 / 3));
  CHECK_THROWS(p.set_logits(o, {1.0}));
}

TEST_CASE("softmax handles extreme logits without overflow") {
  SoftmaxPolicy p(2);
  p.set_logits({1.0}, {800.0, 0.0});
  const auto d = p.action_probabilities({1.0});
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(p.log_prob({1.0}, 1)));
}

TEST_CASE("softmax log-prob gradient matches finite differences") {
  for (double temperature : {1.0, 0.5, 2.0}) {
    SoftmaxPolicy p(4, temperature);
    const Observation o{0.3};
    p.set_logits(o, {0.2, -1.0, 0.7, 0.1});
    for (int a = 0; a < 4; ++a) {
      check_row_gradient(p, o, p.log_prob_gradient(o, a), [&] { return p.log_prob(o, a); });
    }
  }
}

TEST_CASE("softmax entropy gradient matches finite differences") {
  SoftmaxPolicy p(3, 0.7);
  const Observation o{2.0};
  p.set_logits(o, {0.4, -0.3, 1.2});
  check_row_gradient(p, o, p.entropy_gradient(o),
                     [&] { return p.action_probabilities(o).entropy(); });
}

TEST_CASE("softmax gradients only touch the visited row") {
  SoftmaxPolicy p(2);
  p.set_logits({0.0}, {1.0, 0.0});
  const ParamVector g = p.log_prob_gradient({1.0}, 0);
  CHECK(g.rows().size() == 1);
  CHECK(g.rows().count(Observation{1.0}) == 1);
}

TEST_CASE("apply moves parameters by the step") {
  SoftmaxPolicy p(2);
  ParamVector step;
  step.row({1.0}, 2) = {0.5, -0.5};
  p.apply(step);
  CHECK(p.logits({1.0}) == std::vector<double>{0.5, -0.5});
  CHECK(p.parameters() == step);
  ParamVector twice = step;
  twice.add_scaled(step, 1.0);
  CHECK(twice.dot(step) == doctest::Approx(1.0));
  CHECK(twice.flatten() == std::vector<double>{1.0, -1.0});
}

TEST_CASE("sigmoid policy gradients") {
  for (double theta : {-1.5, 0.0, 0.8}) {
    SigmoidPolicy p(theta);
    const double s = 1.0 / (1.0 + std::exp(-theta));
    CHECK(p.p_one() == doctest::Approx(s));
    const auto g1 = p.log_prob_gradient({1.0}, 1).rows().at(SigmoidPolicy::key());
    const auto g0 = p.log_prob_gradient({1.0}, 0).rows().at(SigmoidPolicy::key());
    CHECK(g1[0] == doctest::Approx(1.0 - s));
    CHECK(g0[0] == doctest::Approx(-s));
    const double h = 1e-6;
    SigmoidPolicy up(theta + h);
    SigmoidPolicy down(theta - h);
    const double fd = (up.action_probabilities({}).entropy() -
                       down.action_probabilities({}).entropy()) / (2 * h);
    CHECK(p.entropy_gradient({}).rows().at(SigmoidPolicy::key())[0] ==
          doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("joint policy checks shapes and samples in agent order") {
  GameSpec spec;
  spec.n_agents = 2;
  spec.action_counts = {2, 3};
  spec.observation_dims = {1, 1};
  const JointPolicy jp = JointPolicy::uniform_softmax(spec);
  CHECK_NOTHROW(jp.check(spec));
  GameSpec other = spec;
  other.action_counts = {2, 2};
  CHECK_THROWS_AS(jp.check(other), ConfigError);

  const std::vector<Observation> obs{{1.0}, {1.0}};
  SeededRng a(3);
  SeededRng b(3);
  const JointAction ja = jp.sample(obs, a);
  CHECK(ja[0] == jp.agent(0).sample_action(obs[0], b));
  CHECK(ja[1] == jp.agent(1).sample_action(obs[1], b));
  CHECK(jp.greedy(obs) == JointAction({0, 0}));

  JointPolicy copy = jp;
  ParamVector step;
  step.row({1.0}, 2) = {1.0, 0.0};
  copy.agent(0).apply(step);
  CHECK(jp.agent(0).parameters().empty());
}


TEST_CASE("score function identity") {
  SoftmaxPolicy p(5, 0.8);
  const Observation o{4.0};
  p.set_logits(o, {0.3, -2.0, 1.1, 0.0, 0.7});
  const auto probs = p.action_probabilities(o);
  std::vector<double> total(5, 0.0);
  for (int a = 0; a < 5; ++a) {
    const auto g = p.log_prob_gradient(o, a).rows().at(o);
    for (int j = 0; j < 5; ++j) total[static_cast<std::size_t>(j)] += probs[a] * g[static_cast<std::size_t>(j)];
  }
  for (double t : total) CHECK(std::abs(t) < 1e-10);
  for (double theta : {-2.0, 0.5}) {
    const SigmoidPolicy s(theta);
    const double sum = (1 - s.p_one()) * s.log_prob_gradient({}, 0).flatten()[0] +
                       s.p_one() * s.log_prob_gradient({}, 1).flatten()[0];
    CHECK(std::abs(sum) < 1e-10);
  }
}

TEST_CASE("softmax is invariant to a constant logit shift") {
  SoftmaxPolicy a(4);
  SoftmaxPolicy b(4);
  a.set_logits({1.0}, {0.1, 0.9, -0.4, 0.2});
  b.set_logits({1.0}, {5.1, 5.9, 4.6, 5.2});
  const auto pa = a.action_probabilities({1.0});
  const auto pb = b.action_probabilities({1.0});
  CHECK(pa.greedy() == pb.greedy());
  for (int i = 0; i < 4; ++i) CHECK(std::abs(pa[i] - pb[i]) < 1e-12);
}

TEST_CASE("deterministic distribution always samples its action") {
  const ActionDistribution d({1.0, 0.0, 0.0});
  SeededRng rng(0);
  for (int i = 0; i < 1000; ++i) CHECK(d.sample(rng) == 0);
}

}  // TEST_SUITE
