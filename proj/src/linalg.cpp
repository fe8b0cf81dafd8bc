#include "asmpg/linalg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace asmpg {

std::vector<double> symmetric_eigenvalues(const SquareMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.n);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

double spectral_norm_symmetric(const SquareMatrix& m) {
  if (m.n == 0) return 0.0;
  const auto ev = symmetric_eigenvalues(m);
  return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

double l2_norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace asmpg
