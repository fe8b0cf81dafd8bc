#include <doctest.h>

#include <cmath>
#include <vector>

#include "asmpg/envs.hpp"
#include "env_access.hpp"

using namespace asmpg;
using asmpg::testing::EnvAccess;

TEST_CASE("make_env rejects unknown names and parameters") {
  CHECK_THROWS_AS(make_env("mountain_car", 0), ConfigError);
  CHECK_THROWS_AS(make_env("cheese_maze", 0, {{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(make_env("tiny:abc", 0), ConfigError);
  CHECK_THROWS_AS(make_env("cheese_maze", 0, {{"max_steps", 0}}), ConfigError);
}

TEST_CASE("cheese maze observations and aliasing") {
  auto env = make_env("cheese_maze", 1952);
  for (int i = 0; i < 100; ++i) {
    const int o = env->reset();
    CHECK(o >= 0);
    CHECK(o <= 6);
  }
  const auto& obs = CheeseMazeEnv::kObservation;
  CHECK(obs[1] == obs[3]);
  CHECK(obs[5] == obs[6]);
  CHECK(obs[6] == obs[7]);
  CHECK(obs[8] == obs[9]);
  CHECK(env->info().n_obs == 7);
  CHECK(env->info().n_actions == 4);
}

TEST_CASE("cheese maze start cells are uniform over 0..9") {
  CheeseMazeEnv env;
  Rng rng(3);
  std::vector<int> counts(11, 0);
  for (int i = 0; i < 20000; ++i) {
    env.reset(rng);
    ++counts[env.position()];
  }
  CHECK(counts[10] == 0);
  for (int c = 0; c < 10; ++c) CHECK(counts[c] / 20000.0 == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("cheese maze pays 1 only on reaching the goal") {
  CheeseMazeEnv env;
  Rng rng(0);
  env.reset(rng);
  EnvAccess::set_position(env, 6);
  const auto r = env.step(rng, CheeseMazeEnv::kSouth);
  CHECK(env.position() == CheeseMazeEnv::kGoal);
  CHECK(r.reward == 1.0);
  CHECK(r.terminated);
  CHECK_THROWS(env.step(rng, CheeseMazeEnv::kNorth));

  env.reset(rng);
  EnvAccess::set_position(env, 0);
  const auto w = env.step(rng, CheeseMazeEnv::kNorth);
  CHECK(env.position() == 0);
  CHECK(w.reward == 0.0);
  CHECK_FALSE(w.done());
}

TEST_CASE("cheese maze truncates at the step cap") {
  CheeseMazeEnv env(3);
  Rng rng(0);
  env.reset(rng);
  EnvAccess::set_position(env, 0);
  CHECK_FALSE(env.step(rng, CheeseMazeEnv::kNorth).done());
  CHECK_FALSE(env.step(rng, CheeseMazeEnv::kNorth).done());
  const auto last = env.step(rng, CheeseMazeEnv::kNorth);
  CHECK(last.truncated);
  CHECK_FALSE(last.terminated);
  CHECK(last.reward == 0.0);
}

TEST_CASE("cheese maze BFS distances") {
  const auto d = latent_optimal_steps("cheese_maze");
  REQUIRE(d.at(2).has_value());
  CHECK(*d.at(2) == 2);
  CHECK(*d.at(10) == 0);
  CHECK(latent_optimal_average("cheese_maze") == doctest::Approx(3.9));
}

TEST_CASE("hallway walls, rewards and goal") {
  HallwayEnv env;
  Rng rng(5);
  env.reset(rng);
  EnvAccess::set_cell(env, 0, 0);
  const auto r = env.step(rng, HallwayEnv::kWest);
  CHECK(r.reward == -1.0);
  CHECK_FALSE(r.done());
  CHECK(env.x() == 0);
  CHECK(env.y() == 0);

  const auto moved = env.step(rng, HallwayEnv::kEast);
  CHECK(moved.reward == HallwayEnv::kStepReward);
  CHECK(env.x() == 1);

  const auto corners = HallwayEnv::corners();
  for (const auto& [x, y] : corners) CHECK(HallwayEnv::free_cell(x, y));
  const auto d = latent_optimal_steps("hallway");
  for (const auto& [x, y] : corners) {
    const auto it = d.find(HallwayEnv::cell_id(x, y));
    REQUIRE(it != d.end());
    REQUIRE(it->second.has_value());
    CHECK(*it->second > 0);
  }
  CHECK(*d.at(HallwayEnv::cell_id(HallwayEnv::kGoalX, HallwayEnv::kGoalY)) == 0);
}

TEST_CASE("hallway rewards are always one of the three values") {
  auto env = make_env("hallway", 9);
  Rng rng(9);
  for (int ep = 0; ep < 20; ++ep) {
    env->reset(rng);
    for (;;) {
      const auto r = env->step(rng, rng.uniform_int(4));
      CHECK((r.reward == 5.0 || r.reward == -1.0 || r.reward == -0.1));
      if (r.done()) break;
    }
  }
}

TEST_CASE("healthcare terminal rewards") {
  HealthcareEnv env(200, 0.0);
  Rng rng(1);
  CHECK(env.reset(rng) == HealthcareEnv::health_bin(0.5));
  EnvAccess::set_health(env, 2.1);
  const auto r = env.step(rng, HealthcareEnv::kNone);
  CHECK(r.reward == 50.0);
  CHECK(r.terminated);
  CHECK(env.goal_reached());

  env.reset(rng);
  EnvAccess::set_health(env, -0.95);
  for (int i = 0; i < 3; ++i) env.step(rng, HealthcareEnv::kAggressive);
  env.reset(rng);
  EnvAccess::set_health(env, -1.2);
  const auto f = env.step(rng, HealthcareEnv::kNone);
  CHECK(f.reward == -50.0);
  CHECK(f.terminated);
}

TEST_CASE("healthcare aggressive treatment raises toxicity and resistance") {
  HealthcareEnv env(200, 0.0);
  Rng rng(1);
  env.reset(rng);
  env.step(rng, HealthcareEnv::kAggressive);
  CHECK(env.toxicity() == doctest::Approx(0.25));
  CHECK(env.resistance() == doctest::Approx(0.1));
  CHECK(env.health() == doctest::Approx(1.1));
  const double tox = env.toxicity();
  env.step(rng, HealthcareEnv::kNone);
  CHECK(env.toxicity() == doctest::Approx(0.9 * tox));
}

TEST_CASE("healthcare bins cover [-1, 2]") {
  CHECK(HealthcareEnv::health_bin(-1.0) == 0);
  CHECK(HealthcareEnv::health_bin(1.99) == HealthcareEnv::kHealthBins - 1);
  CHECK(HealthcareEnv::health_bin(-5.0) == 0);
  CHECK(HealthcareEnv::health_bin(7.0) == HealthcareEnv::kHealthBins - 1);
}

TEST_CASE("machine repair is imperfect") {
  MachineRepairEnv env;
  Rng rng(2);
  env.reset(rng);
  EnvAccess::set_wear(env, 0.8);
  const auto r = env.step(rng, MachineRepairEnv::kRepair);
  CHECK(r.reward == -1.0);
  CHECK(env.wear() < 0.8);
  CHECK(env.wear() > 0.0);

  env.reset(rng);
  EnvAccess::set_condition(env, MachineRepairEnv::kHealthy);
  CHECK(env.step(rng, MachineRepairEnv::kOperate).reward == 1.0);
  env.reset(rng);
  EnvAccess::set_condition(env, MachineRepairEnv::kDegraded);
  CHECK(env.step(rng, MachineRepairEnv::kOperate).reward == -1.0);
}

TEST_CASE("velocity cartpole observes only velocities") {
  VelocityCartPoleEnv env;
  Rng rng(4);
  env.reset(rng);
  EnvAccess::set_latent(env, {0.0, 0.0, 0.0, 0.0});
  for (int i = 0; i < 2; ++i) {
    const auto r = env.step(rng, i % 2);
    CHECK(r.reward == 1.0);
    CHECK_FALSE(r.done());
    CHECK_FALSE(env.out_of_bounds());
  }
  const auto f = env.features();
  REQUIRE(f.size() == 2);
  CHECK(f[0] == env.latent()[1]);
  CHECK(f[1] == env.latent()[3]);
  CHECK(env.info().n_obs == 0);
  CHECK(env.info().feature_dim == 2);

  EnvAccess::set_latent(env, {0.0, 0.0, 0.5, 0.0});
  CHECK(env.step(rng, 0).terminated);
}

TEST_CASE("same seed and actions replay the same observations and rewards") {
  for (const char* name : {"cheese_maze", "hallway", "healthcare", "machine_repair", "tiny:3"}) {
    auto a = make_env(name, 77);
    auto b = make_env(name, 77);
    Rng actions(5);
    a->reset();
    b->reset();
    for (int t = 0; t < 40; ++t) {
      const int act = actions.uniform_int(a->info().n_actions);
      const auto ra = a->step(act);
      const auto rb = b->step(act);
      CHECK(ra.obs == rb.obs);
      CHECK(ra.reward == rb.reward);
      if (ra.done()) {
        a->reset();
        b->reset();
      }
    }
  }
}

TEST_CASE("tiny NMDP is history dependent") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto cert = non_markov_certificate(nmdp, 3);
  CHECK(cert.found);
  CHECK(cert.total_variation >= 0.2);
  CHECK(cert.obs_a.back() == cert.obs_b.back());
  CHECK(cert.actions_a.back() == cert.actions_b.back());
  CHECK_THROWS_AS(tiny_nmdp({5, 2, 3, 0}), ConfigError);
}

TEST_CASE("enumerable env runs exactly H steps") {
  auto env = make_env("toggle_latch", 0, {{"horizon", 4}});
  REQUIRE(env->enumerable() != nullptr);
  env->reset();
  for (int t = 1; t <= 4; ++t) {
    const auto r = env->step(0);
    CHECK(r.done() == (t == 4));
  }
}
