#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "perla/core.hpp"
#include "perla/envs.hpp"
#include "perla/errors.hpp"
#include "perla/policy.hpp"
#include "perla/rng.hpp"

using namespace perla;

TEST_SUITE("core") {

TEST_CASE("joint action others and compose round-trip") {
  const JointAction a({2, 0, 1, 1});
  CHECK(a.others(0) == std::vector<int>{0, 1, 1});
  CHECK(a.others(2) == std::vector<int>{2, 0, 1});
  for (int i = 0; i < a.size(); ++i) {
    const std::vector<int> o = a.others(i);
    CHECK(JointAction::compose(i, a[i], o) == a);
  }
  CHECK_THROWS_AS(a.others(4), InputError);
}

TEST_CASE("joint action check against spec") {
  GameSpec spec;
  spec.n_agents = 2;
  spec.action_counts = {3, 3};
  spec.observation_dims = {1, 1};
  CHECK_NOTHROW(JointAction({2, 0}).check(spec));
  CHECK_THROWS_AS(JointAction({3, 0}).check(spec), InputError);
  CHECK_THROWS_AS(JointAction({0}).check(spec), InputError);
  CHECK_THROWS_AS(JointAction({-1, 0}).check(spec), InputError);
}

TEST_CASE("game spec validation") {
  GameSpec spec;
  spec.n_agents = 2;
  spec.action_counts = {2, 2};
  spec.observation_dims = {1, 1};
  CHECK_NOTHROW(spec.validate());
  spec.discount = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.discount = 0.9;
  spec.action_counts = {2, 1};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.action_counts = {2, 2};
  spec.n_agents = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("matrix game rollout is one terminal transition") {
  MatrixGame env(coordination_game_spec(default_coordination_table()));
  SeededRng rng(3);
  env.reset(rng);
  const JointPolicy jp = JointPolicy::uniform_softmax(env.spec());
  const Trajectory traj = rollout(env, jp, 10, rng);
  REQUIRE(traj.size() == 1);
  CHECK(traj.transitions[0].terminal);
  CHECK(traj.transitions[0].observations.size() == 2);
}

TEST_CASE("deterministic (r, r) rollout pays 0.5") {
  MatrixGame env(coordination_game_spec(default_coordination_table()));
  std::vector<std::unique_ptr<Policy>> agents;
  for (int i = 0; i < 2; ++i) {
    auto p = std::make_unique<SoftmaxPolicy>(2);
    p->set_logits({1.0}, {-1e3, 0.0});
    agents.push_back(std::move(p));
  }
  const JointPolicy jp(std::move(agents));
  SeededRng rng(0);
  env.reset(rng);
  const Trajectory traj = rollout(env, jp, 1, rng);
  REQUIRE(traj.size() == 1);
  CHECK(traj.transitions[0].joint_action == JointAction({1, 1}));
  CHECK(traj.transitions[0].reward == doctest::Approx(0.5));
}

TEST_CASE("rollout rejects mismatched policies") {
  MatrixGame env(penalty_game_spec(2, 3));
  SeededRng rng(0);
  env.reset(rng);
  std::vector<std::unique_ptr<Policy>> agents;
  agents.push_back(std::make_unique<SoftmaxPolicy>(3));
  agents.push_back(std::make_unique<SoftmaxPolicy>(2));
  const JointPolicy jp(std::move(agents));
  CHECK_THROWS_AS(rollout(env, jp, 1, rng), ConfigError);
}

TEST_CASE("discounted return") {
  Trajectory t;
  for (double r : {1.0, 2.0, 4.0}) {
    Transition tr;
    tr.reward = r;
    t.transitions.push_back(tr);
  }
  CHECK(discounted_return(t, 0.5) == doctest::Approx(1.0 + 1.0 + 1.0));
  CHECK(discounted_return(t, 1.0) == doctest::Approx(7.0));
  CHECK_THROWS_AS(discounted_return(Trajectory{}, 0.9), InputError);
}

TEST_CASE("rng is reproducible and substreams are independent of consumption") {
  SeededRng a(42);
  SeededRng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng fresh(42);
  const SeededRng s1 = fresh.substream(7);
  for (int i = 0; i < 13; ++i) fresh.next_u64();
  SeededRng s2 = fresh.substream(7);
  SeededRng s1c = s1;
  for (int i = 0; i < 10; ++i) CHECK(s1c.next_u64() == s2.next_u64());

  SeededRng x = SeededRng(42).substream(1);
  SeededRng y = SeededRng(42).substream(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += x.next_u64() == y.next_u64();
  CHECK(same == 0);
}

TEST_CASE("rng uniform and below stay in range and look uniform") {
  SeededRng rng(9);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    const auto k = rng.below(5);
    REQUIRE(k < 5);
    ++counts[k];
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  // Each bucket within 5 standard deviations of n/5.
  const double sd = std::sqrt(n * 0.2 * 0.8);
  for (int c : counts) CHECK(std::abs(c - n / 5.0) < 5 * sd);
}


TEST_CASE("discounted return special cases") {
  Trajectory t;
  for (double r : {1.0, 1.0}) {
    Transition tr;
    tr.reward = r;
    t.transitions.push_back(tr);
  }
  CHECK(discounted_return(t, 0.0) == 1.0);
  for (auto& tr : t.transitions) tr.reward = 0.0;
  CHECK(discounted_return(t, 0.7) == 0.0);
}

TEST_CASE("foraging rollouts are contiguous and replayable") {
  ForagingSpec spec;
  spec.agent_levels = {1, 1};
  spec.food_levels = {2};
  spec.max_steps = 15;
  ForagingEnv env(spec);
  const JointPolicy jp = JointPolicy::uniform_softmax(env.spec());
  SeededRng a(21);
  env.reset(a);
  const Trajectory t1 = rollout(env, jp, spec.max_steps, a);
  SeededRng b(21);
  env.reset(b);
  const Trajectory t2 = rollout(env, jp, spec.max_steps, b);
  CHECK(t1 == t2);
  for (std::size_t i = 0; i + 1 < t1.size(); ++i) {
    CHECK(t1.transitions[i].next_state == t1.transitions[i + 1].state);
    CHECK(t1.transitions[i].next_observations == t1.transitions[i + 1].observations);
    CHECK_FALSE(t1.transitions[i].terminal);
  }
}

}  // TEST_SUITE
