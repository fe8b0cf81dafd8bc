#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace asmpg {

/// Dense row-major square matrix; the oracle only needs small symmetric ones.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// Ascending eigenvalues of the symmetric part of m.
std::vector<double> symmetric_eigenvalues(const SquareMatrix& m);

/// Largest absolute eigenvalue of the symmetric part of m.
double spectral_norm_symmetric(const SquareMatrix& m);

double l2_norm(std::span<const double> v);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace asmpg
