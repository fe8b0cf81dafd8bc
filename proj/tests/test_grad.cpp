#include <doctest.h>

#include <cmath>
#include <vector>

#include "asmpg/grad.hpp"
#include "asmpg/linalg.hpp"

using namespace asmpg;

namespace {

Trajectory random_traj(Rng& rng, const Alphabet& ab, int length, double reward_scale) {
  Trajectory t = Trajectory::start();
  for (int i = 0; i < length; ++i) {
    t.obs.push_back(rng.uniform_int(ab.n_obs));
    t.agent_states.push_back(rng.uniform_int(ab.n_agent_states));
    t.actions.push_back(rng.uniform_int(ab.n_actions));
    t.rewards.push_back(reward_scale * rng.uniform(-1.0, 1.0));
  }
  return t;
}

void randomize(ParametricAsm& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : p.mutable_params()) v = rng.uniform(-2.0, 2.0);
}

}  // namespace

TEST_CASE("estimator weights") {
  Trajectory t = Trajectory::start();
  for (double r : {1.0, 2.0, 4.0}) {
    t.obs.push_back(0);
    t.agent_states.push_back(0);
    t.actions.push_back(0);
    t.rewards.push_back(r);
  }
  const auto ep = estimator_weights(t, ReturnSpec::episodic(3));
  CHECK(ep == std::vector<double>{7.0, 6.0, 4.0});
  const auto disc = estimator_weights(t, ReturnSpec::discounted(0.5, 3));
  CHECK(disc[0] == doctest::Approx(1.0 + 1.0 + 1.0));
  CHECK(disc[1] == doctest::Approx(1.0 + 1.0));
  CHECK(disc[2] == doctest::Approx(1.0));
  const auto full = estimator_weights(t, ReturnSpec::episodic(3), EstimatorForm::kFullReturn);
  CHECK(full == std::vector<double>{7.0, 7.0, 7.0});
}

TEST_CASE("zero rewards give a zero estimate") {
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 1);
  Rng rng(2);
  const auto t = random_traj(rng, p.alphabet(), 3, 0.0);
  for (double v : episodic_estimate(p, t, 3).vector) CHECK(v == 0.0);
  for (double v : discounted_estimate(TabularSoftmaxAsm({2, 2, 2}, 1), t, 0.9, 10).vector) CHECK(v == 0.0);
}

TEST_CASE("estimate equals the hand-built score sum") {
  TabularSoftmaxAsm p({2, 3, 2}, 1);
  randomize(p, 3);
  Rng rng(4);
  const auto t = random_traj(rng, p.alphabet(), 5, 1.0);
  const auto est = discounted_estimate(p, t, 0.8, 5);
  std::vector<double> manual(p.dim(), 0.0);
  for (std::size_t k = 1; k <= 5; ++k) {
    double w = 0.0;
    for (std::size_t j = k; j <= 5; ++j) w += std::pow(0.8, static_cast<double>(j - 1)) * t.rewards[j - 1];
    p.add_score(transition_at(t, k), w, manual);
  }
  for (std::size_t i = 0; i < p.dim(); ++i) CHECK(est.vector[i] == doctest::Approx(manual[i]).epsilon(1e-13));
  CHECK(est.norm == doctest::Approx(l2_norm(manual)));
}

TEST_CASE("shape and domain errors") {
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  Rng rng(5);
  const auto long_traj = random_traj(rng, p.alphabet(), 4, 1.0);
  CHECK_THROWS_AS(episodic_estimate(p, long_traj, 3), ShapeError);
  CHECK_THROWS_AS(episodic_estimate(p, long_traj, 4), ShapeError);
  CHECK_THROWS_AS(discounted_estimate(p, long_traj, 1.0, 10), ConfigError);
  CHECK_THROWS_AS(batch_estimate(p, std::vector<Trajectory>{}, ReturnSpec::episodic(3)), ConfigError);
}

TEST_CASE("batch of identical trajectories equals the single estimate") {
  TabularSoftmaxAsm p({2, 2, 2}, 3);
  randomize(p, 6);
  Rng rng(7);
  const auto t = random_traj(rng, p.alphabet(), 3, 1.0);
  const std::vector<Trajectory> batch(4, t);
  const auto single = episodic_estimate(p, t, 3);
  const auto mean = batch_estimate(p, batch, ReturnSpec::episodic(3));
  for (std::size_t i = 0; i < p.dim(); ++i) CHECK(mean.vector[i] == doctest::Approx(single.vector[i]).epsilon(1e-14));
  CHECK(mean.n_episodes == 4);
  CHECK(mean.episode_norms.size() == 4);
}

TEST_CASE("serial and parallel batch reductions are bit-identical") {
  MlpAsm p({3, 3, 4}, 8);
  Rng init(8);
  p.initialize(init);
  Rng rng(9);
  std::vector<Trajectory> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(random_traj(rng, p.alphabet(), 3 + i % 5, 1.0));
  const auto spec = ReturnSpec::discounted(0.99, 10);
  const auto a = batch_estimate(p, batch, spec);
  for (int workers : {1, 2, 4}) {
    const auto b = batch_estimate_parallel(p, batch, spec, workers);
    CHECK(a.vector == b.vector);
    CHECK(a.episode_norms == b.episode_norms);
  }
}

TEST_CASE("single-episode estimates respect the norm bound") {
  // G = sqrt(2) and C_H / 2 = r_max sqrt(2) H (H + 1) / 2 for the joint softmax.
  JointSoftmaxAsm p({2, 2, 2}, 3);
  for (int i = 0; i < 200; ++i) {
    randomize(p, 100 + i);
    Rng rng(300 + i);
    const auto t = random_traj(rng, p.alphabet(), 3, 1.0);
    CHECK(episodic_estimate(p, t, 3).norm <= std::sqrt(2.0) * 3 * 4 / 2.0 + 1e-12);
  }
}

TEST_CASE("log barrier") {
  TabularSoftmaxAsm p({2, 2, 3}, 1);
  Rng rng(10);
  std::vector<Trajectory> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_traj(rng, p.alphabet(), 4, 1.0));

  const auto at_uniform = log_barrier_grad(p, batch, 0.5);
  for (double v : at_uniform.vector) CHECK(v == doctest::Approx(0.0));

  randomize(p, 11);
  for (double v : log_barrier_grad(p, batch, 0.0).vector) CHECK(v == 0.0);

  const auto g = log_barrier_grad(p, batch, 0.3);
  std::vector<double> base(p.params().begin(), p.params().end());
  const double h = 1e-6;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto q = base;
    q[i] += h;
    p.set_params(q);
    const double up = log_barrier_value(p, batch, 0.3);
    q[i] -= 2 * h;
    p.set_params(q);
    const double down = log_barrier_value(p, batch, 0.3);
    CHECK(g.vector[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1e-3));
  }
  p.set_params(base);
  for (double v : log_barrier_grad(p, std::vector<Trajectory>{}, 0.1).vector) CHECK(v == 0.0);
  CHECK_THROWS_AS(log_barrier_grad(p, batch, -1.0), ConfigError);
}
