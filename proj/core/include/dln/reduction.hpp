#pragma once

#include "dln/linalg.hpp"
#include "dln/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dln {

/// Training data X (d_x x m) and targets Y (d_y x m).
struct RawProblem {
  Matrix X;
  Matrix Y;

  Index m() const { return X.cols(); }
  Index d_x() const { return X.rows(); }
  Index d_y() const { return Y.rows(); }
};

/// Thresholds for the four standing assumptions on (X, Y) and the architecture.
struct AssumptionTolerances {
  double rank_rel_tol = 1e-8;     ///< singular value counts iff > tol * largest
  double gap_rel_tol = 1e-6;      ///< singular-value gap, relative to sigma_1
  double separation_rel_tol = 1e-6;  ///< critical-value gap, relative to 1/2 ||S_Y||^2
};

/// Effective problem after the two SVD changes of variables:
///   X = U_X [S_X | 0] V_X^T,   Y V_X^1 = U_Y [S_Y | 0] V_Y^T,
/// so that the raw loss equals 1/2 ||Sigma_Y - W_{H+1}...W_1||^2 + offset in
/// the barred coordinates W_1 -> W_1 U_X S_X V_Y, W_{H+1} -> U_Y^T W_{H+1}.
struct ReducedProblem {
  Vector sigma;       ///< diagonal of S_Y, decreasing
  Matrix U_X;         ///< d_x x d_x
  Vector S_X;         ///< diagonal of S_X
  Matrix V_X1;        ///< m x d_x
  Matrix V_X2;        ///< m x (m - d_x)
  Matrix U_Y;         ///< d_y x d_y
  Matrix V_Y;         ///< d_x x d_x
  double offset = 0;  ///< 1/2 ||Y V_X^2||_F^2
  LayerDims dims;
  std::vector<std::string> warnings;  ///< non-fatal degenerate-spectrum findings

  Matrix target() const { return target_matrix(sigma, dims.d_x()); }
};

struct AssumptionReport {
  bool dimension_order = false;       ///< m >= d_x >= d_y, min hidden >= d_y
  bool full_rank = false;             ///< rank X = d_x, rank Y = d_y
  bool distinct_singular_values = false;
  bool distinct_critical_values = false;
  double min_singular_value = 0;      ///< min over X, Y of sigma_min / sigma_max
  double min_singular_gap = 0;        ///< min_i sigma_i - sigma_{i+1}; sigma_1 when d_y = 1
  double min_critical_gap = 0;        ///< smallest gap between distinct subset half-sums

  bool all_pass() const { return dimension_order && full_rank && distinct_singular_values && distinct_critical_values; }
};

/// Throws RankDeficient or DimensionOrder; degenerate spectra only add warnings.
ReducedProblem reduce_problem(const RawProblem& raw, const std::vector<Index>& hidden_dims,
                              const AssumptionTolerances& tol = {});

AssumptionReport check_assumptions(const RawProblem& raw, const ReducedProblem& reduced,
                                   const AssumptionTolerances& tol = {});

/// Spectrum-only checks (distinct singular values and distinct subset
/// half-sums) shared with the landscape module.
double min_singular_gap(const Vector& sigma);
double min_subset_halfsum_gap(const Vector& sigma);

/// X and Y with i.i.d. N(0, scale^2) entries. Throws DimensionOrder before
/// drawing when m >= d_x >= d_y fails, and AssumptionViolation if the draw
/// misses a margin.
RawProblem generate_problem(Index m, Index d_x, Index d_y, double scale, std::uint64_t seed,
                            const AssumptionTolerances& tol = {});

/// W_LS = Y X^T (X X^T)^{-1}, via a Cholesky solve of the normal equations.
Matrix least_squares_solution(const RawProblem& raw);

/// Raw loss 1/2 ||Y - W_{H+1}...W_1 X||_F^2.
double raw_loss(const RawProblem& raw, const WeightTuple& w);

/// W_1 -> W_1 U_X S_X V_Y and W_{H+1} -> U_Y^T W_{H+1}.
WeightTuple to_reduced_coordinates(const WeightTuple& raw_weights, const ReducedProblem& reduced);

/// Inverse map: W_1 = Wbar_1 V_Y^T S_X^{-1} U_X^T, W_{H+1} = U_Y Wbar_{H+1}.
WeightTuple to_raw_coordinates(const WeightTuple& reduced_weights, const ReducedProblem& reduced);

}  // namespace dln
