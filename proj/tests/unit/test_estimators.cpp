#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "perla/envs.hpp"
#include "perla/errors.hpp"
#include "perla/estimators.hpp"

using namespace perla;

namespace {

Transition one_step(const JointAction& ja, double reward) {
  Transition t;
  t.state = {1.0};
  t.next_state = {1.0};
  t.observations.assign(static_cast<std::size_t>(ja.size()), Observation{1.0});
  t.next_observations = t.observations;
  t.joint_action = ja;
  t.reward = reward;
  t.terminal = true;
  return t;
}

JointPolicy skewed_policy(int n, int actions, double bias) {
  std::vector<std::unique_ptr<Policy>> ps;
  for (int i = 0; i < n; ++i) {
    auto p = std::make_unique<SoftmaxPolicy>(actions);
    std::vector<double> logits(static_cast<std::size_t>(actions), 0.0);
    logits[0] = bias * (i + 1);
    p->set_logits({1.0}, logits);
    ps.push_back(std::move(p));
  }
  return JointPolicy(std::move(ps));
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("estimator labels round-trip") {
  for (auto k : {EstimatorKind::ctde(), EstimatorKind::decentralised(), EstimatorKind::perla(7)}) {
    CHECK(EstimatorKind::parse(k.label(), k.k) == k);
  }
  CHECK_THROWS_AS(EstimatorKind::parse("reinforce"), InputError);
  CHECK_THROWS_AS(EstimatorKind::perla(0), InputError);
}

TEST_CASE("coordination (r, r) with a zero critic gives delta 0.5") {
  const Transition tr = one_step(JointAction({kRight, kRight}), 0.5);
  const VCritic zero = [](const StateFeatures&, int, std::span<const int>,
                          std::span<const Observation>) { return 0.0; };
  const JointPolicy jp = skewed_policy(2, 2, 0.0);
  SeededRng rng(0);
  for (int i = 0; i < 2; ++i) {
    const auto cur = sample_counterfactual_joint_actions(jp, tr.observations, i, 10, rng);
    const auto nxt = sample_counterfactual_joint_actions(jp, tr.next_observations, i, 10, rng);
    CHECK(perla_td_error(zero, tr, cur, nxt, 0.99) == doctest::Approx(0.5));
  }
}

TEST_CASE("td error respects terminal flags") {
  CHECK(td_error(1.0, true, 0.9, 100.0, 0.25) == doctest::Approx(0.75));
  CHECK(td_error(1.0, false, 0.5, 2.0, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("perla td error bootstraps on the marginalised next value") {
  Transition tr = one_step(JointAction({0, 1}), 1.0);
  tr.terminal = false;
  tr.next_state = {2.0};
  // V depends on the state and the sampled other action.
  const VCritic v = [](const StateFeatures& s, int, std::span<const int> others,
                       std::span<const Observation>) { return s[0] * (others[0] + 1); };
  CounterfactualSamples cur;
  cur.agent = 0;
  cur.others = {{0}, {1}};
  cur.observations = tr.observations;
  CounterfactualSamples nxt = cur;
  nxt.others = {{1}, {1}, {0}};
  // V(s) = (1 + 2) / 2 = 1.5; V(s') = 2 * (2 + 2 + 1) / 3.
  CHECK(perla_td_error(v, tr, cur, nxt, 0.9) == doctest::Approx(1.0 + 0.9 * 10.0 / 3 - 1.5));
}

TEST_CASE("counterfactual samples follow the other agents' policies") {
  const JointPolicy jp = skewed_policy(3, 3, 1.0);
  const std::vector<Observation> obs(3, Observation{1.0});
  SeededRng rng(12);
  const int k = 60000;
  const auto s = sample_counterfactual_joint_actions(jp, obs, 1, k, rng);
  CHECK(s.k() == k);
  CHECK(s.agent == 1);
  std::vector<std::vector<int>> counts(2, std::vector<int>(3, 0));
  for (const auto& t : s.others) {
    REQUIRE(t.size() == 2);
    ++counts[0][static_cast<std::size_t>(t[0])];
    ++counts[1][static_cast<std::size_t>(t[1])];
  }
  const int agents[2] = {0, 2};
  for (int j = 0; j < 2; ++j) {
    const auto d = jp.agent(agents[j]).action_probabilities({1.0});
    for (int a = 0; a < 3; ++a) {
      const double sd = std::sqrt(d[a] * (1 - d[a]) / k);
      CHECK(std::abs(counts[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] / double(k) - d[a]) < 4 * sd);
    }
  }
  CHECK_THROWS_AS(sample_counterfactual_joint_actions(jp, obs, 3, 1, rng), InputError);
  CHECK_THROWS_AS(sample_counterfactual_joint_actions(jp, obs, 0, 0, rng), InputError);
}

TEST_CASE("pinned counterfactuals hold the executed actions") {
  const std::vector<Observation> obs(3, Observation{1.0});
  const auto s = pinned_counterfactuals(JointAction({2, 0, 1}), obs, 1);
  CHECK(s.k() == 1);
  CHECK(s.others[0] == std::vector<int>{2, 1});
}

TEST_CASE("marginalised Q is the sample mean") {
  const QCritic q = [](const StateFeatures&, int, int a_i, std::span<const int> others) {
    return 10.0 * a_i + others[0];
  };
  CounterfactualSamples s;
  s.agent = 0;
  s.others = {{0}, {2}, {2}, {1}};
  CHECK(marginalized_q(q, {1.0}, 1, s) == doctest::Approx(11.25));
  s.others.clear();
  CHECK_THROWS_AS(marginalized_q(q, {1.0}, 1, s), InputError);
}

TEST_CASE("exact marginal Q matches brute-force enumeration") {
  MatrixGame env(penalty_game_spec(3, 3));
  const JointPolicy jp = skewed_policy(3, 3, 0.8);
  Trajectory traj;
  for (int a = 0; a < 3; ++a) traj.transitions.push_back(one_step(JointAction({1, a, 0}), 0.0));
  const auto values = exact_marginal_q_values(env, traj, jp, 1);
  const auto p0 = jp.agent(0).action_probabilities({1.0});
  const auto p2 = jp.agent(2).action_probabilities({1.0});
  for (int a = 0; a < 3; ++a) {
    double expected = 0.0;
    for (int b = 0; b < 3; ++b) {
      for (int c = 0; c < 3; ++c) {
        expected += p0[b] * p2[c] * penalty_game_reward(JointAction({b, a, c}), 3, 3);
      }
    }
    CHECK(values[static_cast<std::size_t>(a)] == doctest::Approx(expected));
  }
}

TEST_CASE("the exact estimator is unavailable on foraging") {
  ForagingSpec spec;
  spec.agent_levels = {1, 1};
  spec.food_levels = {1};
  ForagingEnv env(spec);
  const JointPolicy jp = JointPolicy::uniform_softmax(env.spec());
  SeededRng rng(0);
  env.reset(rng);
  const Trajectory t = rollout(env, jp, 3, rng);
  CHECK_THROWS_AS(exact_marginal_q_values(env, t, jp, 0), UnsupportedOperation);
}

TEST_CASE("score-function estimators discount by step") {
  SigmoidPolicy p(0.0);
  Trajectory traj;
  traj.transitions.push_back(one_step(JointAction({1, 0}), 0.0));
  traj.transitions.push_back(one_step(JointAction({0, 0}), 0.0));
  const std::vector<double> q{2.0, 4.0};
  // score(1) = 0.5, score(0) = -0.5 at theta = 0.
  const ParamVector g = gradient_ctde(traj, q, p, 0, 0.5);
  CHECK(g.rows().at(SigmoidPolicy::key())[0] == doctest::Approx(2.0 * 0.5 - 0.5 * 4.0 * 0.5));
  CHECK(gradient_dt(traj, q, p, 0, 1.0).rows().at(SigmoidPolicy::key())[0] ==
        doctest::Approx(1.0 - 2.0));
  CHECK_THROWS_AS(gradient_ctde(traj, std::vector<double>{1.0}, p, 0), InputError);
}

TEST_CASE("pinned PERLA gradient equals the centralised one") {
  const JointPolicy jp = skewed_policy(2, 3, 0.5);
  const QCritic q = [](const StateFeatures&, int, int a_i, std::span<const int> others) {
    return penalty_game_reward(JointAction::compose(0, a_i, others), 2, 3);
  };
  Trajectory traj;
  std::vector<double> executed_q;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      traj.transitions.push_back(one_step(JointAction({a, b}), 0.0));
      executed_q.push_back(penalty_game_reward(JointAction({a, b}), 2, 3));
    }
  }
  SeededRng rng(1);
  const ParamVector pinned =
      gradient_perla(traj, q, jp, 0, 1, rng, 1.0, SampleMode::kPinnedToExecuted);
  CHECK(pinned == gradient_ctde(traj, executed_q, jp.agent(0), 0));
}

TEST_CASE("PERLA gradient converges to the exact-marginal gradient as k grows") {
  MatrixGame env(penalty_game_spec(2, 3));
  const JointPolicy jp = skewed_policy(2, 3, 0.5);
  const QCritic q = [](const StateFeatures&, int agent, int a_i, std::span<const int> others) {
    return penalty_game_reward(JointAction::compose(agent, a_i, others), 2, 3);
  };
  Trajectory traj;
  for (int a = 0; a < 3; ++a) traj.transitions.push_back(one_step(JointAction({a, 2}), 0.0));
  const ParamVector exact =
      gradient_dt(traj, exact_marginal_q_values(env, traj, jp, 0), jp.agent(0), 0);
  SeededRng rng(2);
  const ParamVector approx = gradient_perla(traj, q, jp, 0, 200000, rng);
  const auto e = exact.flatten();
  const auto a = approx.flatten();
  REQUIRE(e.size() == a.size());
  for (std::size_t j = 0; j < e.size(); ++j) CHECK(a[j] == doctest::Approx(e[j]).epsilon(0.02).scale(1.0));
}


TEST_CASE("td error with trivial critics") {
  const VCritic zero = [](const StateFeatures&, int, std::span<const int>, std::span<const Observation>) { return 0.0; };
  const VCritic constant = [](const StateFeatures&, int, std::span<const int>, std::span<const Observation>) { return 2.5; };
  Transition tr = one_step(JointAction({0, 1}), 0.75);
  CounterfactualSamples s = pinned_counterfactuals(tr.joint_action, tr.observations, 0);
  CHECK(perla_td_error(zero, tr, s, s, 0.9) == 0.75);
  tr.terminal = false;
  tr.reward = 0.0;
  CHECK(perla_td_error(constant, tr, s, s, 0.9) == doctest::Approx((0.9 - 1.0) * 2.5));
}

TEST_CASE("marginalised value of the toy critic matches the enumerated expectation") {
  std::vector<std::unique_ptr<Policy>> ps;
  ps.push_back(std::make_unique<SigmoidPolicy>(0.0));
  ps.push_back(std::make_unique<SoftmaxPolicy>(2));
  ps.push_back(std::make_unique<SoftmaxPolicy>(2));
  const JointPolicy jp(std::move(ps));
  const std::vector<Observation> obs(3, Observation{1.0});
  // V(s, a_-1) := Q(a1 = 1, a_-1); its expectation over uniform partners is 0.75.
  const VCritic v = [](const StateFeatures&, int, std::span<const int> others, std::span<const Observation>) {
    return toy_team_reward(JointAction::compose(0, 1, others));
  };
  SeededRng rng(6);
  const auto s = sample_counterfactual_joint_actions(jp, obs, 0, 1000, rng);
  const double sd = std::sqrt(2.25 - 0.75 * 0.75) / std::sqrt(1000.0);
  CHECK(std::abs(marginalized_value(v, {1.0}, s) - 0.75) < 4 * sd);
}

}  // TEST_SUITE
