#pragma once

#include "dln/linalg.hpp"
#include "dln/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dln {

/// Index sets over the singular values are 0-based and kept sorted.
using IndexSet = std::vector<int>;

struct CriticalValueEntry {
  std::uint32_t mask = 0;  ///< bit i set iff sigma_i contributes to the value
  IndexSet subset;         ///< the same set, listed
  double value = 0.0;      ///< 1/2 sum_{i in subset} sigma_i^2

  /// The complement: singular values reproduced exactly at points with this value.
  IndexSet fitted(int d_y) const;
};

/// All 2^{d_y} critical values of the effective loss, sorted decreasing.
/// Entry 0 is 1/2 ||S_Y||^2 (nothing fitted, e.g. W = 0); the last entry is
/// 0 (global minima).
struct CriticalValueTable {
  Vector sigma;
  std::vector<CriticalValueEntry> entries;

  std::size_t size() const { return entries.size(); }
  double head() const { return entries.front().value; }
  /// Index of the entry whose subset is `subset`; throws IndexOutOfRange.
  std::size_t index_of(const IndexSet& subset) const;
  /// Index of the entry whose fitted set is `fitted`.
  std::size_t index_of_fitted(const IndexSet& fitted) const;
};

/// Throws DegenerateSpectrum when two values are within
/// separation_rel_tol * 1/2 ||S_Y||^2 of each other, and OutOfRange for d_y > 24.
CriticalValueTable critical_values(const Vector& sigma, double separation_rel_tol = 1e-6);

/// Residuals of the necessary conditions at a critical point, with
/// R = W_{H+1}...W_2 and W_1 = [W_{1,1} | W_{1,2}]:
///   R^T S_Y = R^T R W_{1,1},   R W_{1,2} = 0,   R W_{1,1} S_Y = R W_{1,1} W_{1,1}^T R^T.
struct CriticalConditions {
  double transpose_fit = 0.0;
  double tail = 0.0;
  double symmetric = 0.0;
  double grad_norm = 0.0;

  bool holds(double tol) const {
    return transpose_fit <= tol && tail <= tol && symmetric <= tol && grad_norm <= tol;
  }
};

CriticalConditions verify_critical_conditions(const WeightTuple& w, const Vector& sigma);

struct ClassifyOptions {
  double grad_tol = 1e-6;        ///< NotCritical above this gradient norm
  double rank_rel_tol = 1e-6;    ///< relative to the largest singular value of R
  double fitted_rel_tol = 1e-5;  ///< |M_ii| <= tol * sigma_i marks i as fitted
  double match_rel_tol = 1e-6;   ///< |L - value| <= tol * 1/2 ||S_Y||^2
};

struct CriticalPointReport {
  double grad_norm = 0.0;
  Index r = 0;          ///< rank of R = W_{H+1}...W_2
  Index r_Z = 0;        ///< rank of Z = W_H...W_2 (d_1 when H = 1)
  IndexSet fitted_subset;
  double loss = 0.0;
  std::size_t matched_index = 0;
  double matched_value = 0.0;
  double matched_distance = 0.0;
  double max_offdiagonal = 0.0;  ///< largest |M_ij|, i != j
  CriticalConditions conditions;
  /// |fitted| = r and the matched entry fits exactly `fitted_subset`.
  bool consistent = false;

  bool global_minimum() const { return consistent && matched_value == 0.0; }
};

/// Throws NotCritical when ||grad L|| > grad_tol, AmbiguousMatch when two
/// table values lie within the match tolerance.
CriticalPointReport classify_limit(const WeightTuple& w, const Vector& sigma, const CriticalValueTable& table,
                                   const ClassifyOptions& opts = {});

struct SaddleOptions {
  std::uint64_t seed = 0;
  /// Set the free blocks (B_2, C_2 and their deep analogues) to zero; with an
  /// empty subset this returns W = 0.
  bool zero_free_blocks = false;
};

/// An explicit critical point fitting exactly the singular values in `fitted`.
/// For H = 1 the blocks are, in the coordinates where the fitted indices come first,
///   W_{2,1} = [A | 0] V,  W_{1,1,1} = V^T [A^{-1} D; B_2],  W_{1,2} = V^T [0; C_2],
/// with D = diag(sigma_i, i in fitted) and all other blocks zero.
struct SaddleConstruction {
  WeightTuple weights;
  IndexSet fitted;
  Vector D;    ///< sigma restricted to `fitted`
  Matrix A;    ///< r x r, invertible
  Matrix V;    ///< d_1 x d_1 orthogonal
  Matrix B2;   ///< (d_1 - r) x r
  Matrix C2;   ///< (d_1 - r) x (d_x - d_y)
  int H = 1;

  Index r() const { return static_cast<Index>(fitted.size()); }
};

/// Throws SubsetTooLarge when |fitted| >= d_y, IndexOutOfRange for bad
/// indices, and BadConditioning if ten draws of A are all nearly singular.
SaddleConstruction construct_saddle(const Vector& sigma, const LayerDims& dims, const IndexSet& fitted,
                                    const SaddleOptions& opts = {});

/// Dimension of the H = 1 critical stratum of rank r, counted from its free
/// variations (a_1, a_2, b_2, c_2): r(2 d_1 - r) + (d_1 - r)(d_x - d_y).
/// Throws OutOfRange unless 0 <= r < d_y and H = 1.
Index stratum_dimension(Index r, const LayerDims& dims);

/// The alternative closed form r d_1 + (d_y - r) r + (d_y - r)(d_x - d_y),
/// kept for reporting next to stratum_dimension; the two differ in general.
Index printed_stratum_dimension(Index r, const LayerDims& dims);

/// Largest principal angle between ker(R^T) and ker(R W_{1,1}), both in R^{d_y}.
double kernel_identity_angle(const WeightTuple& w, double rank_rel_tol = 1e-8);

/// Parses a subset written as "{1,3}" or "1,3" (1-based) into 0-based indices.
IndexSet parse_subset(const std::string& text, int d_y);
std::string format_subset(const IndexSet& subset);

}  // namespace dln
