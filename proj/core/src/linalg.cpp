#include "dln/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dln {

Svd full_svd(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Svd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  const Index k = out.s.size();
  for (Index c = 0; c < out.U.cols(); ++c) {
    for (Index r = 0; r < out.U.rows(); ++r) {
      const double entry = out.U(r, c);
      if (std::abs(entry) > 1e-12) {
        if (entry < 0.0) {
          out.U.col(c) *= -1.0;
          if (c < k) out.V.col(c) *= -1.0;
        }
        break;
      }
    }
  }
  return out;
}

Index numerical_rank(const Vector& singular_values, double rel_tol) {
  if (singular_values.size() == 0) return 0;
  const double top = singular_values.maxCoeff();
  if (top <= 0.0) return 0;
  Index rank = 0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values(i) > rel_tol * top) ++rank;
  }
  return rank;
}

Index numerical_rank(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return numerical_rank(Vector(svd.singularValues()), rel_tol);
}

Matrix kernel_basis(const Matrix& a, double rel_tol) {
  const Index n = a.cols();
  if (a.rows() == 0 || n == 0) return Matrix::Identity(n, n);
  const Svd svd = full_svd(a);
  const Index rank = numerical_rank(svd.s, rel_tol);
  return svd.V.rightCols(n - rank);
}

Matrix range_basis(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return Matrix(a.rows(), 0);
  const Svd svd = full_svd(a);
  const Index rank = numerical_rank(svd.s, rel_tol);
  return svd.U.leftCols(rank);
}

double max_principal_angle(const Matrix& basis_a, const Matrix& basis_b) {
  if (basis_a.cols() != basis_b.cols()) return std::numbers::pi / 2.0;
  if (basis_a.cols() == 0) return 0.0;
  // sin of the principal angles = singular values of (I - P_a) B.
  const Matrix residual = basis_b - basis_a * (basis_a.transpose() * basis_b);
  Eigen::JacobiSVD<Matrix> svd(residual);
  const double largest = svd.singularValues().size() ? svd.singularValues().maxCoeff() : 0.0;
  return std::asin(std::clamp(largest, 0.0, 1.0));
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

Matrix gaussian_matrix(Index rows, Index cols, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  // Filled row by row.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

Matrix random_orthogonal(Index n, Rng& rng) {
  const Matrix g = gaussian_matrix(n, n, 1.0, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i) {
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  }
  return q;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace dln
