#include <doctest.h>

#include <cmath>
#include <vector>

#include "asmpg/linalg.hpp"
#include "asmpg/policy.hpp"

using namespace asmpg;

namespace {

void randomize(ParametricAsm& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& v : p.mutable_params()) v = rng.uniform(-scale, scale);
}

double barrier_total(const ParametricAsm& p, const StepTransition& tr) { return p.barrier_value(tr.context(), tr.s); }

// Central-difference check of score and barrier gradient at one transition.
void check_derivatives(ParametricAsm& policy, const StepTransition& tr, double tol) {
  const auto score = policy.score(tr);
  std::vector<double> bgrad(policy.dim(), 0.0);
  policy.add_barrier_grad(tr.context(), tr.s, 1.0, bgrad);
  const double h = 1e-6;
  auto params = std::vector<double>(policy.params().begin(), policy.params().end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    p[i] += h;
    policy.set_params(p);
    const double lp_up = policy.log_prob(tr);
    const double b_up = barrier_total(policy, tr);
    p[i] -= 2 * h;
    policy.set_params(p);
    const double lp_down = policy.log_prob(tr);
    const double b_down = barrier_total(policy, tr);
    CHECK(score[i] == doctest::Approx((lp_up - lp_down) / (2 * h)).epsilon(tol).scale(1.0));
    CHECK(bgrad[i] == doctest::Approx((b_up - b_down) / (2 * h)).epsilon(tol).scale(1.0));
  }
  policy.set_params(params);
}

StepTransition transition(int s_prev, int a_prev, int o, int s, int a, int t) {
  StepTransition tr;
  tr.s_prev = s_prev;
  tr.a_prev = a_prev;
  tr.obs.index = o;
  tr.s = s;
  tr.a = a;
  tr.t = t;
  return tr;
}

}  // namespace

TEST_CASE("softmax helpers") {
  std::vector<double> out(2);
  softmax(std::vector<double>{std::log(3.0), 0.0}, out);
  CHECK(out[0] == doctest::Approx(0.75));
  CHECK(out[1] == doctest::Approx(0.25));
  softmax(std::vector<double>{0.0, std::log(9.0)}, out);
  CHECK(out[0] == doctest::Approx(0.1));
  std::vector<double> lp(2);
  log_softmax(std::vector<double>{1000.0, 0.0}, lp);
  CHECK(lp[0] == doctest::Approx(-std::exp(-1000.0)));
  CHECK(lp[1] == doctest::Approx(-1000.0));
}

TEST_CASE("tabular at zero parameters is uniform") {
  TabularSoftmaxAsm p({3, 4, 4}, 1);
  std::vector<double> nu(4), phi(4);
  StepContext ctx;
  ctx.obs.index = 2;
  p.nu_dist(ctx, nu);
  p.phi_dist(1, 1, phi);
  for (double v : nu) CHECK(v == doctest::Approx(0.25));
  for (double v : phi) CHECK(v == doctest::Approx(0.25));
  TabularSoftmaxAsm small({2, 2, 2}, 1);
  CHECK(small.log_prob(transition(0, 0, 1, 1, 0, 1)) == doctest::Approx(std::log(0.25)));
  Rng rng(0);
  CHECK(small.sample(rng, StepContext{}).log_prob == doctest::Approx(std::log(0.25)));
}

TEST_CASE("tabular logits map to the expected probabilities") {
  TabularSoftmaxAsm p({1, 2, 2}, 1);
  auto params = p.mutable_params();
  params[p.nu_offset(0, 0, 0, 1)] = std::log(3.0);
  params[p.phi_offset(1, 1) + 1] = std::log(9.0);
  std::vector<double> nu(2), phi(2);
  p.nu_dist({}, nu);
  p.phi_dist(1, 1, phi);
  CHECK(nu[0] == doctest::Approx(0.75));
  CHECK(phi[1] == doctest::Approx(0.9));
}

TEST_CASE("saturated logits sample the dominant pair") {
  TabularSoftmaxAsm p({1, 2, 2}, 1);
  auto params = p.mutable_params();
  for (int s = 0; s < 2; ++s) params[p.nu_offset(s, 0, 0, 1)] = 50.0;
  for (int s = 0; s < 2; ++s) params[p.phi_offset(s, 1)] = 50.0;
  Rng rng(1);
  const auto smp = p.sample(rng, {});
  CHECK(smp.s == 0);
  CHECK(smp.a == 0);
  const double expected = 2.0 * -std::log1p(std::exp(-50.0));
  CHECK(std::abs(smp.log_prob - expected) <= 1e-20);
}

TEST_CASE("network at zero parameters is uniform") {
  MlpAsm p({3, 4, 5}, 8);
  std::vector<double> nu(5), phi(4);
  StepContext ctx;
  ctx.obs.index = 1;
  p.nu_dist(ctx, nu);
  p.phi_dist(2, 1, phi);
  for (double v : nu) CHECK(v == doctest::Approx(0.2));
  for (double v : phi) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("scores and barrier gradients match central differences") {
  SUBCASE("factorized tabular") {
    TabularSoftmaxAsm p({2, 3, 2}, 2);
    randomize(p, 1, 2.0);
    check_derivatives(p, transition(1, 2, 1, 0, 1, 2), 1e-6);
  }
  SUBCASE("joint tabular") {
    JointSoftmaxAsm p({2, 3, 2}, 1);
    randomize(p, 2, 2.0);
    check_derivatives(p, transition(0, 1, 0, 1, 2, 1), 1e-6);
  }
  SUBCASE("network") {
    MlpAsm p({3, 2, 3}, 4);
    Rng rng(3);
    p.initialize(rng);
    check_derivatives(p, transition(2, 1, 2, 1, 0, 5), 1e-5);
  }
}

TEST_CASE("barrier gradient vanishes at uniform tabular parameters") {
  TabularSoftmaxAsm p({2, 2, 3}, 1);
  std::vector<double> g(p.dim(), 0.0);
  p.add_barrier_grad({}, 1, 1.0, g);
  for (double v : g) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("score norm bounds") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    JointSoftmaxAsm joint({2, 3, 3}, 1);
    TabularSoftmaxAsm fact({2, 3, 3}, 1);
    randomize(joint, 10 + i, 10.0);
    randomize(fact, 500 + i, 10.0);
    const auto tr = transition(rng.uniform_int(3), rng.uniform_int(3), rng.uniform_int(2), rng.uniform_int(3),
                               rng.uniform_int(3), 1);
    CHECK(l2_norm(joint.score(tr)) <= std::sqrt(2.0) + 1e-9);
    CHECK(l2_norm(fact.score(tr)) <= 2.0 + 1e-9);
    CHECK(spectral_norm_symmetric(joint.hessian_log_prob(tr)) <= 1.0 + 1e-9);
  }
  CHECK(*JointSoftmaxAsm({2, 2, 2}, 1).score_bound() == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("softmax Hessian rows sum to zero and match differences of the score") {
  JointSoftmaxAsm p({2, 2, 2}, 1);
  randomize(p, 7, 1.5);
  const auto tr = transition(1, 0, 1, 1, 1, 1);
  const auto hess = p.hessian_log_prob(tr);
  for (std::size_t i = 0; i < hess.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hess.n; ++j) s += hess(i, j);
    CHECK(std::abs(s) <= 1e-12);
  }
  const std::size_t off = p.offset(1, 0, 1, 1);
  const double h = 1e-6;
  std::vector<double> base(p.params().begin(), p.params().end());
  for (std::size_t j = 0; j < hess.n; ++j) {
    auto q = base;
    q[off + j] += h;
    p.set_params(q);
    const auto up = p.score(tr);
    q[off + j] -= 2 * h;
    p.set_params(q);
    const auto down = p.score(tr);
    for (std::size_t i = 0; i < hess.n; ++i) {
      CHECK(hess(i, j) == doctest::Approx((up[off + i] - down[off + i]) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
  }
  MlpAsm net({2, 2, 2}, 4);
  CHECK_THROWS_AS(net.hessian_log_prob(tr), UnsupportedError);
}

TEST_CASE("network episode paths agree with per-step paths") {
  MlpAsm p({3, 3, 4}, 6);
  Rng rng(5);
  p.initialize(rng);
  Trajectory traj = Trajectory::start();
  for (int t = 1; t <= 7; ++t) {
    traj.obs.push_back(rng.uniform_int(3));
    traj.agent_states.push_back(rng.uniform_int(4));
    traj.actions.push_back(rng.uniform_int(3));
    traj.rewards.push_back(0.0);
  }
  std::vector<double> w{0.5, -1.0, 2.0, 0.0, 0.25, 1.0, -0.3};
  std::vector<double> batched(p.dim(), 0.0), stepwise(p.dim(), 0.0);
  p.add_episode_score(traj, w, batched);
  p.ParametricAsm::add_episode_score(traj, w, stepwise);
  for (std::size_t i = 0; i < p.dim(); ++i) CHECK(batched[i] == doctest::Approx(stepwise[i]).epsilon(1e-12));
  std::fill(batched.begin(), batched.end(), 0.0);
  std::fill(stepwise.begin(), stepwise.end(), 0.0);
  p.add_episode_barrier(traj, 0.3, batched);
  p.ParametricAsm::add_episode_barrier(traj, 0.3, stepwise);
  for (std::size_t i = 0; i < p.dim(); ++i) CHECK(batched[i] == doctest::Approx(stepwise[i]).epsilon(1e-12));
}

TEST_CASE("out-of-range indices are rejected") {
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  CHECK_THROWS_AS(p.log_prob(transition(2, 0, 0, 0, 0, 1)), BoundsError);
  CHECK_THROWS_AS(p.log_prob(transition(0, 2, 0, 0, 0, 1)), BoundsError);
  CHECK_THROWS_AS(p.log_prob(transition(0, 0, 2, 0, 0, 1)), BoundsError);
  CHECK_THROWS_AS(p.log_prob(transition(0, 0, 0, 0, 2, 1)), BoundsError);
  CHECK_THROWS_AS(p.log_prob(transition(0, 0, 0, 0, 0, 4)), BoundsError);
  std::vector<double> wrong(p.dim() + 1);
  CHECK_THROWS_AS(p.set_params(wrong), ShapeError);
}

TEST_CASE("layout metadata round trips through json") {
  const auto p = make_policy({3, 4, 5}, {PolicyKind::kMlp, 1, 16, 0, 1.0});
  const auto layout = PolicyLayout::from_json(p->layout().to_json());
  CHECK(layout.kind == PolicyKind::kMlp);
  CHECK(layout.alphabet == p->alphabet());
  CHECK(layout.hidden == 16);
  CHECK(make_policy(layout)->dim() == p->dim());
  CHECK_THROWS_AS(policy_kind_from_string("lstm"), ConfigError);
}
