#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "asmpg/envs.hpp"
#include "asmpg/nmdp.hpp"

using namespace asmpg;

TEST_CASE("tiny NMDP transition rows are distributions") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  std::vector<int> obs, actions;
  int rows = 0;
  std::function<void(int)> walk = [&](int t) {
    for (int o = 0; o < nmdp.n_obs; ++o) {
      obs.push_back(o);
      for (int a = 0; a < nmdp.n_actions; ++a) {
        actions.push_back(a);
        const auto row = nmdp.next_obs_dist(obs, actions);
        double s = 0.0;
        for (double p : row) {
          CHECK(p >= 0.0);
          s += p;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(nmdp.checked_reward(obs, actions)) <= nmdp.r_max);
        ++rows;
        if (t < 3) walk(t + 1);
        actions.pop_back();
      }
      obs.pop_back();
    }
  };
  walk(1);
  CHECK(rows == 4 + 16 + 64);
}

TEST_CASE("tiny NMDP is a deterministic function of its spec") {
  const auto a = tiny_nmdp({2, 2, 3, 7});
  const auto b = tiny_nmdp({2, 2, 3, 7});
  const auto c = tiny_nmdp({2, 2, 3, 8});
  const std::vector<int> obs{1, 0}, actions{1, 1};
  CHECK(a.next_obs_dist(obs, actions) == b.next_obs_dist(obs, actions));
  CHECK(a.checked_reward(obs, actions) == b.checked_reward(obs, actions));
  CHECK(a.initial == b.initial);
  CHECK((a.next_obs_dist(obs, actions) != c.next_obs_dist(obs, actions) || a.initial != c.initial));
}

TEST_CASE("kernel checks catch malformed rows and rewards") {
  EnumerableNmdp bad;
  bad.n_obs = 2;
  bad.n_actions = 1;
  bad.initial = {0.5, 0.5};
  bad.r_max = 1.0;
  bad.transition = [](std::span<const int>, std::span<const int>, std::span<double> out) {
    out[0] = 0.7;
    out[1] = 0.7;
  };
  bad.reward = [](std::span<const int>, std::span<const int>) { return 2.0; };
  const std::vector<int> obs{0}, actions{0};
  CHECK_THROWS_AS(bad.next_obs_dist(obs, actions), NumericError);
  CHECK_THROWS_AS(bad.checked_reward(obs, actions), NumericError);
  bad.initial = {0.5, 0.6};
  CHECK_THROWS(bad.validate_initial());
}

TEST_CASE("toggle latch reward tracks the hidden bit") {
  const auto nmdp = toggle_latch_pomdp(3);
  CHECK(nmdp.checked_reward(std::vector<int>{1}, std::vector<int>{0}) == 1.0);
  CHECK(nmdp.checked_reward(std::vector<int>{1, 0}, std::vector<int>{1, 0}) == 0.0);
  CHECK(nmdp.checked_reward(std::vector<int>{0, 1, 1}, std::vector<int>{1, 1, 0}) == 0.0);
  CHECK(nmdp.checked_reward(std::vector<int>{0, 1, 1}, std::vector<int>{1, 0, 0}) == 1.0);
}
