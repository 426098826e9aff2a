#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace dln {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Singular value decomposition A = U diag(s) V^T with full square U and V.
/// Singular values are sorted decreasing. Each left singular vector is
/// flipped so that its first nonzero entry is nonnegative (the matching
/// right vector is flipped with it), which makes the factors deterministic.
struct Svd {
  Matrix U;
  Vector s;
  Matrix V;
};

Svd full_svd(const Matrix& a);

/// Number of singular values strictly above rel_tol * max(singular values).
Index numerical_rank(const Vector& singular_values, double rel_tol = 1e-8);
Index numerical_rank(const Matrix& a, double rel_tol = 1e-8);

/// Orthonormal basis (columns) of ker(a); a has `cols` columns.
Matrix kernel_basis(const Matrix& a, double rel_tol = 1e-8);

/// Orthonormal basis of the column span of a.
Matrix range_basis(const Matrix& a, double rel_tol = 1e-8);

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases. Returns pi/2 when the dimensions differ.
double max_principal_angle(const Matrix& basis_a, const Matrix& basis_b);

/// Frobenius inner product <a, b> = tr(a^T b).
inline double frobenius_dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

bool all_finite(const Matrix& a);

// Random draws. All take an explicit engine so results depend only on the seed.

Matrix gaussian_matrix(Index rows, Index cols, double scale, Rng& rng);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q).
Matrix random_orthogonal(Index n, Rng& rng);

/// Stateless 64-bit mixer; used to derive per-trial seeds from a master seed.
std::uint64_t splitmix64(std::uint64_t x);

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace dln
