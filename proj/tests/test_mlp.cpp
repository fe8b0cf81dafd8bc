#include <doctest.h>

#include <cmath>
#include <vector>

#include "asmpg/mlp.hpp"

using namespace asmpg;

namespace {

double objective(const Mlp& net, std::span<const double> params, std::span<const double> x,
                 std::span<const double> c) {
  Mlp::Tape tape;
  net.forward(params, x, tape);
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * tape.values.back()[i];
  return s;
}

}  // namespace

TEST_CASE("parameter count and zero parameters give zero logits") {
  Mlp net({3, 5, 2});
  CHECK(net.num_params() == 3 * 5 + 5 + 5 * 2 + 2);
  std::vector<double> params(net.num_params(), 0.0);
  Mlp::Tape tape;
  const std::vector<double> x{1.0, -2.0, 0.5};
  net.forward(params, x, tape);
  for (double v : tape.values.back()) CHECK(v == 0.0);
}

TEST_CASE("backward matches central differences") {
  Mlp net({4, 6, 5, 3});
  std::vector<double> params(net.num_params());
  Rng rng(1);
  for (auto& p : params) p = rng.uniform(-0.8, 0.8);
  const std::vector<double> x{0.3, 0.0, 1.0, -0.7};
  const std::vector<double> c{0.5, -1.0, 2.0};
  Mlp::Tape tape;
  net.forward(params, x, tape);
  std::vector<double> grad(params.size(), 0.0);
  net.backward(params, tape, c, 1.0, grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params;
    p[i] += h;
    const double up = objective(net, p, x, c);
    p[i] -= 2 * h;
    const double down = objective(net, p, x, c);
    CHECK(grad[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("batched passes agree with per-row passes") {
  Mlp net({3, 4, 2});
  std::vector<double> params(net.num_params());
  Rng rng(2);
  for (auto& p : params) p = rng.uniform(-1.0, 1.0);
  const int rows = 5;
  std::vector<double> xs(rows * 3), ds(rows * 2);
  for (auto& v : xs) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ds) v = rng.uniform(-1.0, 1.0);

  Mlp::BatchTape bt;
  net.forward_batch(params, xs, rows, bt);
  std::vector<double> g_batch(params.size(), 0.0), g_rows(params.size(), 0.0);
  net.backward_batch(params, bt, ds, g_batch);
  for (int r = 0; r < rows; ++r) {
    Mlp::Tape tape;
    net.forward(params, std::span<const double>(xs).subspan(r * 3, 3), tape);
    for (int j = 0; j < 2; ++j) CHECK(bt.values.back()[r * 2 + j] == doctest::Approx(tape.values.back()[j]));
    net.backward(params, tape, std::span<const double>(ds).subspan(r * 2, 2), 1.0, g_rows);
  }
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(g_batch[i] == doctest::Approx(g_rows[i]).epsilon(1e-12));
}

TEST_CASE("glorot init keeps weights in range and biases at zero") {
  Mlp net({10, 20});
  std::vector<double> params(net.num_params(), 1.0);
  Rng rng(3);
  net.init_glorot(params, rng);
  const double limit = std::sqrt(6.0 / 30.0);
  for (std::size_t i = 0; i < 200; ++i) CHECK(std::abs(params[i]) <= limit);
  for (std::size_t i = 200; i < params.size(); ++i) CHECK(params[i] == 0.0);
}
