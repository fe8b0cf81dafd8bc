#include <doctest.h>

#include <cmath>
#include <vector>

#include "asmpg/envs.hpp"
#include "asmpg/linalg.hpp"
#include "asmpg/oracle.hpp"
#include "asmpg/trainer.hpp"

using namespace asmpg;

namespace {

EnumerableNmdp constant_reward_nmdp(int n_obs, int n_actions, int horizon, double c) {
  EnumerableNmdp n;
  n.name = "constant";
  n.n_obs = n_obs;
  n.n_actions = n_actions;
  n.horizon = horizon;
  n.initial.assign(n_obs, 1.0 / n_obs);
  n.r_max = std::max(1.0, std::abs(c));
  n.transition = [n_obs](std::span<const int>, std::span<const int>, std::span<double> out) {
    for (int o = 0; o < n_obs; ++o) out[o] = 1.0 / n_obs;
  };
  n.reward = [c](std::span<const int>, std::span<const int>) { return c; };
  return n;
}

void randomize(ParametricAsm& p, std::uint64_t seed, double scale = 2.0) {
  Rng rng(seed);
  for (auto& v : p.mutable_params()) v = rng.uniform(-scale, scale);
}

double diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("enumeration of degenerate and small alphabets") {
  const auto one = constant_reward_nmdp(1, 1, 2, 1.0);
  TabularSoftmaxAsm p1({1, 1, 1}, 1);
  const auto single = enumerate(one, p1, 2);
  REQUIRE(single.size() == 1);
  CHECK(single[0].probability == doctest::Approx(1.0));

  const auto two = constant_reward_nmdp(2, 2, 2, 1.0);
  TabularSoftmaxAsm p2({2, 2, 2}, 1);
  const auto all = enumerate(two, p2, 2);
  CHECK(all.size() == 64);
  double total = 0.0;
  for (const auto& w : all) total += w.probability;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tiny NMDP trajectory probabilities sum to one") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 1);
  double total = 0.0;
  for_each_trajectory(nmdp, p, 3, [&](const Trajectory&, double prob) { total += prob; });
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("budget is enforced before enumerating") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  EnumerationOptions opts;
  opts.budget = 10;
  CHECK(enumeration_leaves(nmdp, 2, 3) == 512.0);
  CHECK_THROWS_AS(enumerate(nmdp, p, 3, opts), BudgetError);
  CHECK_THROWS_AS(exact_gradient(nmdp, p, ReturnSpec::episodic(3), opts), BudgetError);
  CHECK_THROWS_AS(exact_objective(nmdp, p, ReturnSpec::episodic(3), opts), BudgetError);
}

TEST_CASE("objective with constant rewards") {
  const auto n = constant_reward_nmdp(2, 2, 4, 0.5);
  TabularSoftmaxAsm p({2, 2, 2}, 4);
  randomize(p, 2);
  CHECK(exact_objective(n, p, ReturnSpec::episodic(4)).value == doctest::Approx(2.0).epsilon(1e-13));

  const auto ones = constant_reward_nmdp(2, 2, 3, 1.0);
  TabularSoftmaxAsm ps({2, 2, 2}, 1);
  const auto v = exact_objective(ones, ps, ReturnSpec::discounted(0.5, 3));
  CHECK(v.value == doctest::Approx(1.75).epsilon(1e-13));
  CHECK(v.tail_bound == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(discounted_tail_bound(1.0, 0.5, 3) == doctest::Approx(0.25));
}

TEST_CASE("objective on the tiny NMDP matches the frozen value and Monte Carlo") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  const double exact = exact_objective(nmdp, p, ReturnSpec::episodic(3)).value;
  CHECK(exact == doctest::Approx(-0.61240661321755241).epsilon(1e-12));

  auto env = make_env("tiny:0", 0);
  Rng rng(2024);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto traj = rollout(p, *env, rng, 3);
    const double r = episode_return(traj, ReturnSpec::episodic(3));
    sum += r;
    sq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("exact gradient identities on the tiny NMDP") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto spec = ReturnSpec::episodic(3);
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  for (int probe = 0; probe < 4; ++probe) {
    randomize(p, 40 + probe);
    const auto g = exact_gradient(nmdp, p, spec);
    const auto fd = fd_gradient(nmdp, p, spec);
    const auto q = q_form_gradient(nmdp, p, spec);
    const auto full = exact_gradient(nmdp, p, spec, {}, EstimatorForm::kFullReturn);
    CHECK(diff(g, fd) <= std::max(1e-6 * l2_norm(fd), 1e-8));
    CHECK(diff(g, q) <= 1e-9);
    CHECK(diff(g, full) <= 1e-9);
  }
}

TEST_CASE("discounted gradient identities and serial/parallel agreement") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto spec = ReturnSpec::discounted(0.5, 5);
  TabularSoftmaxAsm p({2, 2, 2}, 1);
  randomize(p, 7);
  EnumerationOptions serial;
  serial.workers = 1;
  EnumerationOptions parallel;
  parallel.workers = 4;
  const auto g1 = exact_gradient(nmdp, p, spec, serial);
  const auto g4 = exact_gradient(nmdp, p, spec, parallel);
  CHECK(g1 == g4);
  const auto fd = fd_gradient(nmdp, p, spec);
  CHECK(diff(g1, fd) <= 1e-6 * l2_norm(fd));
  CHECK(diff(g1, q_form_gradient(nmdp, p, spec)) <= 1e-9);
}

TEST_CASE("zero rewards give a zero gradient and value") {
  const auto n = constant_reward_nmdp(2, 2, 3, 0.0);
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 3);
  for (double v : exact_gradient(n, p, ReturnSpec::episodic(3))) CHECK(v == 0.0);
  HistoryPrefix prefix;
  prefix.obs = {1};
  CHECK(exact_v(n, p, prefix, ReturnSpec::episodic(3)) == 0.0);
  CHECK(fd_hessian_norm(n, p, ReturnSpec::episodic(3)) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("network policies need finite differences") {
  const auto nmdp = tiny_nmdp({2, 2, 2, 0});
  MlpAsm p({2, 2, 2}, 4);
  CHECK_THROWS_AS(exact_gradient(nmdp, p, ReturnSpec::episodic(2)), UnsupportedError);
  CHECK(fd_gradient(nmdp, p, ReturnSpec::episodic(2)).size() == p.dim());
}

TEST_CASE("Q at the last step is the last reward") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 5);
  HistoryPrefix prefix;
  prefix.obs = {1, 0, 1};
  prefix.agent_states = {0, 1, 0, 1};
  prefix.actions = {0, 1, 1, 0};
  const std::vector<int> actions{1, 1, 0};
  CHECK(exact_q(nmdp, p, prefix, ReturnSpec::episodic(3)) ==
        doctest::Approx(nmdp.checked_reward(prefix.obs, actions)).epsilon(1e-14));
}

TEST_CASE("value gradient at a prefix matches differences of the value") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  const auto spec = ReturnSpec::episodic(3);
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 6);
  HistoryPrefix prefix;
  prefix.obs = {0, 1};
  prefix.agent_states = {0, 1};
  prefix.actions = {0, 0};
  const auto g = exact_v_gradient(nmdp, p, prefix, spec);
  std::vector<double> base(p.params().begin(), p.params().end());
  const double h = 1e-5;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto q = base;
    q[i] += h;
    p.set_params(q);
    const double up = exact_v(nmdp, p, prefix, spec);
    q[i] -= 2 * h;
    p.set_params(q);
    const double down = exact_v(nmdp, p, prefix, spec);
    CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1e-3));
  }
}

TEST_CASE("prefixes off the support are rejected") {
  const auto nmdp = toggle_latch_pomdp(3);
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  auto params = p.mutable_params();
  for (int o = 0; o < 2; ++o) params[p.nu_offset(0, 0, o, 1)] = -800.0;
  HistoryPrefix prefix;
  prefix.obs = {0};
  prefix.agent_states = {0, 0};
  prefix.actions = {0, 0};
  CHECK_THROWS_AS(exact_q(nmdp, p, prefix, ReturnSpec::episodic(3)), UndefinedConditionalError);
  prefix.obs = {3};
  CHECK_THROWS_AS(exact_q(nmdp, p, prefix, ReturnSpec::episodic(3)), BoundsError);
}

TEST_CASE("Hessian bound on a tiny instance") {
  const auto nmdp = tiny_nmdp({2, 2, 2, 4});
  JointSoftmaxAsm p({2, 2, 2}, 2);
  randomize(p, 8, 1.0);
  const double norm = fd_hessian_norm(nmdp, p, ReturnSpec::episodic(2));
  const auto c = episodic_constants(nmdp.r_max, std::sqrt(2.0), 1.0, 2);
  CHECK(norm > 0.0);
  CHECK(norm <= c.beta);
}

TEST_CASE("truncation gap and gradient tail bounds") {
  const auto nmdp = tiny_nmdp({2, 2, 3, 0});
  TabularSoftmaxAsm p({2, 2, 2}, 1);
  randomize(p, 9);
  EnumerationOptions opts;
  opts.budget = 2e7;
  const double j4 = exact_objective(nmdp, p, ReturnSpec::discounted(0.5, 4), opts).value;
  const double j8 = exact_objective(nmdp, p, ReturnSpec::discounted(0.5, 8), opts).value;
  CHECK(std::abs(j8 - j4) <= discounted_tail_bound(nmdp.r_max, 0.5, 4));
  const auto g4 = exact_gradient(nmdp, p, ReturnSpec::discounted(0.5, 4), opts);
  const auto g6 = exact_gradient(nmdp, p, ReturnSpec::discounted(0.5, 6), opts);
  CHECK(diff(g4, g6) <= discounted_gradient_tail_bound(nmdp.r_max, 2.0, 0.5, 4, 6));
  CHECK(discounted_gradient_tail_bound(1.0, 1.0, 0.5, 1, 2) == doctest::Approx(2.0 * 0.5));
}

TEST_CASE("ideal agent-state check") {
  const auto nmdp = toggle_latch_pomdp(3);
  const auto ideal = ideal_asd_optimality_check(nmdp, toggle_latch_tracker(), 3);
  CHECK(ideal.ideal);
  CHECK_FALSE(ideal.witness.has_value());
  CHECK(ideal.hr_value == doctest::Approx(2.5));
  CHECK(std::abs(ideal.gap) <= 1e-12);

  const auto forgetful = ideal_asd_optimality_check(nmdp, forgetful_dynamics(2), 3);
  CHECK_FALSE(forgetful.ideal);
  REQUIRE(forgetful.witness.has_value());
  CHECK(forgetful.witness->discrepancy > 0.0);
  CHECK(forgetful.gap >= 0.01);
  CHECK(history_optimal_value(nmdp, 3) == doctest::Approx(2.5));
  const auto j = forgetful.to_json();
  CHECK(j.contains("witness"));
}
