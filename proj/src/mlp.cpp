#include "asmpg/mlp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "asmpg/errors.hpp"

namespace asmpg {

namespace {

// Batched products run on Eigen-owned (always aligned) matrices so the packet
// layout, and hence the rounding, never depends on caller buffer addresses.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMat to_mat(const double* p, int rows, int cols) {
  return Eigen::Map<const RowMat>(p, rows, cols);
}

// Single-row kernels are written as fixed-order axpy loops so results never depend on
// buffer alignment or vector width.
inline void axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* a, const double* b, int n) {
  constexpr int kLanes = 16;
  double s[kLanes] = {};
  int i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int k = 0; k < kLanes; ++k) s[k] += a[i + k] * b[i + k];
  }
  for (; i < n; ++i) s[0] += a[i] * b[i];
  for (int w = kLanes / 2; w > 0; w /= 2) {
    for (int k = 0; k < w; ++k) s[k] += s[k + w];
  }
  return s[0];
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("Mlp needs at least an input and an output layer");
  for (int s : sizes_) {
    if (s < 1) throw ConfigError("Mlp layer widths must be >= 1");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(num_params_);
    num_params_ += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
}

void Mlp::forward(std::span<const double> params, std::span<const double> input, Tape& tape) const {
  const std::size_t layers = sizes_.size() - 1;
  tape.values.resize(layers + 1);
  tape.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    const double* b = w + static_cast<std::size_t>(n_out) * n_in;
    const auto& x = tape.values[l];
    auto& y = tape.values[l + 1];
    y.assign(b, b + n_out);
    int nonzero = 0;
    for (double xi : x) nonzero += xi != 0.0;
    if (4 * nonzero <= n_in) {
      // One-hot style inputs: gather only the active columns.
      for (int i = 0; i < n_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (int o = 0; o < n_out; ++o) y[o] += w[static_cast<std::size_t>(o) * n_in + i] * xi;
      }
    } else {
      for (int o = 0; o < n_out; ++o) y[o] += dot(w + static_cast<std::size_t>(o) * n_in, x.data(), n_in);
    }
    if (l + 1 < layers) {
      for (auto& v : y) v = std::tanh(v);
    }
  }
}

void Mlp::backward(std::span<const double> params, const Tape& tape, std::span<const double> dlogits,
                   double scale, std::span<double> grad) const {
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (auto& d : delta) d *= scale;
  std::vector<double> upstream;
  for (std::size_t l = layers; l-- > 0;) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
    const auto& x = tape.values[l];
    axpy(1.0, delta.data(), gb, n_out);
    int nonzero = 0;
    for (double xi : x) nonzero += xi != 0.0;
    if (4 * nonzero <= n_in) {
      for (int i = 0; i < n_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (int o = 0; o < n_out; ++o) gw[static_cast<std::size_t>(o) * n_in + i] += delta[o] * xi;
      }
    } else {
      for (int o = 0; o < n_out; ++o) {
        if (delta[o] != 0.0) axpy(delta[o], x.data(), gw + static_cast<std::size_t>(o) * n_in, n_in);
      }
    }
    if (l == 0) break;
    upstream.assign(n_in, 0.0);
    for (int o = 0; o < n_out; ++o) {
      if (delta[o] != 0.0) axpy(delta[o], w + static_cast<std::size_t>(o) * n_in, upstream.data(), n_in);
    }
    // x = tanh(pre-activation) for every hidden layer.
    for (int i = 0; i < n_in; ++i) upstream[i] *= 1.0 - x[i] * x[i];
    delta.swap(upstream);
  }
}

void Mlp::forward_batch(std::span<const double> params, std::span<const double> inputs, int rows,
                        BatchTape& tape) const {
  const std::size_t layers = sizes_.size() - 1;
  tape.rows = rows;
  tape.values.resize(layers + 1);
  tape.values[0].assign(inputs.begin(), inputs.end());
  RowMat x = to_mat(inputs.data(), rows, sizes_[0]);
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const double* w = params.data() + offsets_[l];
    const RowMat wt = to_mat(w, n_out, n_in).transpose();
    const RowMat b = to_mat(w + static_cast<std::size_t>(n_out) * n_in, 1, n_out);
    RowMat y(rows, n_out);
    y.noalias() = x * wt;
    for (int r = 0; r < rows; ++r) {
      for (int o = 0; o < n_out; ++o) {
        double& v = y(r, o);
        v += b(0, o);
        if (l + 1 < layers) v = std::tanh(v);
      }
    }
    tape.values[l + 1].assign(y.data(), y.data() + y.size());
    x.swap(y);
  }
}

void Mlp::backward_batch(std::span<const double> params, const BatchTape& tape, std::span<const double> dlogits,
                         std::span<double> grad) const {
  const std::size_t layers = sizes_.size() - 1;
  const int rows = tape.rows;
  RowMat delta = to_mat(dlogits.data(), rows, sizes_.back());
  for (std::size_t l = layers; l-- > 0;) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    double* gw = grad.data() + offsets_[l];
    double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
    const RowMat x = to_mat(tape.values[l].data(), rows, n_in);
    RowMat g(n_out, n_in);
    g.noalias() = delta.transpose() * x;
    const double* gp = g.data();
    for (std::size_t k = 0; k < static_cast<std::size_t>(g.size()); ++k) gw[k] += gp[k];
    for (int r = 0; r < rows; ++r) {
      for (int o = 0; o < n_out; ++o) gb[o] += delta(r, o);
    }
    if (l == 0) break;
    const RowMat w = to_mat(params.data() + offsets_[l], n_out, n_in);
    RowMat up(rows, n_in);
    up.noalias() = delta * w;
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n_in; ++i) up(r, i) *= 1.0 - x(r, i) * x(r, i);
    }
    delta.swap(up);
  }
}

void Mlp::init_glorot(std::span<double> params, Rng& rng) const {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (n_in + n_out));
    double* w = params.data() + offsets_[l];
    const std::size_t n_w = static_cast<std::size_t>(n_out) * n_in;
    for (std::size_t i = 0; i < n_w; ++i) w[i] = rng.uniform(-limit, limit);
    for (int o = 0; o < n_out; ++o) w[n_w + o] = 0.0;
  }
}

}  // namespace asmpg
