#include "dln/reduction.hpp"

#include "dln/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

namespace dln {

namespace {

void check_dimension_order(Index m, Index d_x, Index d_y, const std::vector<Index>& hidden) {
  if (!(m >= d_x && d_x >= d_y && d_y >= 1)) {
    std::ostringstream os;
    os << "assumption 1 (dimension condition) requires m >= d_x >= d_y >= 1, got m=" << m << ", d_x=" << d_x
       << ", d_y=" << d_y;
    throw Error(ErrorKind::DimensionOrder, os.str());
  }
  if (hidden.empty()) throw Error(ErrorKind::DimensionOrder, "at least one hidden layer is required");
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    if (hidden[j] < d_y) {
      std::ostringstream os;
      os << "assumption 1 (dimension condition) requires every hidden width >= d_y=" << d_y << ", but d_" << j + 1
         << "=" << hidden[j];
      throw Error(ErrorKind::DimensionOrder, os.str());
    }
  }
}

double relative_smallest(const Vector& s) {
  if (s.size() == 0 || s(0) <= 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

}  // namespace

double min_singular_gap(const Vector& sigma) {
  if (sigma.size() == 0) return 0.0;
  if (sigma.size() == 1) return sigma(0);
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < sigma.size(); ++i) gap = std::min(gap, sigma(i) - sigma(i + 1));
  return gap;
}

double min_subset_halfsum_gap(const Vector& sigma) {
  const auto n = static_cast<unsigned>(sigma.size());
  if (n == 0 || n > 24) return 0.0;
  std::vector<double> sums(std::size_t{1} << n, 0.0);
  for (std::size_t mask = 1; mask < sums.size(); ++mask) {
    const auto low = static_cast<unsigned>(std::countr_zero(mask));
    sums[mask] = sums[mask & (mask - 1)] + 0.5 * sigma(low) * sigma(low);
  }
  std::sort(sums.begin(), sums.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < sums.size(); ++i) gap = std::min(gap, sums[i] - sums[i - 1]);
  return gap;
}

ReducedProblem reduce_problem(const RawProblem& raw, const std::vector<Index>& hidden_dims,
                              const AssumptionTolerances& tol) {
  if (raw.Y.cols() != raw.X.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "X and Y must have the same number of columns");
  }
  check_dimension_order(raw.m(), raw.d_x(), raw.d_y(), hidden_dims);

  const Svd x_svd = full_svd(raw.X);
  if (numerical_rank(x_svd.s, tol.rank_rel_tol) < raw.d_x()) {
    throw Error(ErrorKind::RankDeficient, "X has numerical rank below d_x=" + std::to_string(raw.d_x()));
  }
  if (numerical_rank(raw.Y, tol.rank_rel_tol) < raw.d_y()) {
    throw Error(ErrorKind::RankDeficient, "Y has numerical rank below d_y=" + std::to_string(raw.d_y()));
  }

  ReducedProblem out;
  out.dims = LayerDims(raw.d_x(), hidden_dims, raw.d_y());
  out.U_X = x_svd.U;
  out.S_X = x_svd.s;
  out.V_X1 = x_svd.V.leftCols(raw.d_x());
  out.V_X2 = x_svd.V.rightCols(raw.m() - raw.d_x());
  out.offset = 0.5 * (raw.Y * out.V_X2).squaredNorm();

  const Matrix y_bar = raw.Y * out.V_X1;
  const Svd y_svd = full_svd(y_bar);
  out.sigma = y_svd.s;
  out.U_Y = y_svd.U;
  out.V_Y = y_svd.V;

  const double sigma1 = out.sigma(0);
  if (numerical_rank(out.sigma, tol.rank_rel_tol) < raw.d_y()) {
    out.warnings.push_back("DegenerateSpectrum: reduced target Y V_X^1 is rank deficient");
  }
  if (min_singular_gap(out.sigma) <= tol.gap_rel_tol * sigma1) {
    out.warnings.push_back("DegenerateSpectrum: singular values of the reduced target are not distinct");
  }
  if (min_subset_halfsum_gap(out.sigma) <= tol.separation_rel_tol * 0.5 * out.sigma.squaredNorm()) {
    out.warnings.push_back("DegenerateSpectrum: two subset half-sums of squared singular values coincide");
  }
  return out;
}

AssumptionReport check_assumptions(const RawProblem& raw, const ReducedProblem& reduced,
                                   const AssumptionTolerances& tol) {
  AssumptionReport report;
  const std::vector<Index> hidden = reduced.dims.hidden();
  report.dimension_order = raw.m() >= raw.d_x() && raw.d_x() >= raw.d_y() && raw.d_y() >= 1 && !hidden.empty() &&
                           *std::min_element(hidden.begin(), hidden.end()) >= raw.d_y();

  Eigen::JacobiSVD<Matrix> x_svd(raw.X);
  Eigen::JacobiSVD<Matrix> y_svd(raw.Y);
  const Vector sx = x_svd.singularValues();
  const Vector sy = y_svd.singularValues();
  report.min_singular_value = std::min(relative_smallest(sx), relative_smallest(sy));
  report.full_rank = numerical_rank(sx, tol.rank_rel_tol) == raw.d_x() &&
                     numerical_rank(sy, tol.rank_rel_tol) == raw.d_y() && sx.size() == raw.d_x() &&
                     sy.size() == raw.d_y();

  const Vector& sigma = reduced.sigma;
  report.min_singular_gap = min_singular_gap(sigma);
  const bool positive = sigma.size() > 0 && numerical_rank(sigma, tol.rank_rel_tol) == sigma.size();
  report.distinct_singular_values = positive && report.min_singular_gap > tol.gap_rel_tol * sigma(0);
  report.min_critical_gap = min_subset_halfsum_gap(sigma);
  report.distinct_critical_values =
      positive && report.min_critical_gap > tol.separation_rel_tol * 0.5 * sigma.squaredNorm();
  return report;
}

RawProblem generate_problem(Index m, Index d_x, Index d_y, double scale, std::uint64_t seed,
                            const AssumptionTolerances& tol) {
  check_dimension_order(m, d_x, d_y, {d_y});
  if (!(scale > 0.0)) throw Error(ErrorKind::ConfigInvalid, "scale must be positive");
  Rng rng(seed);
  RawProblem raw{gaussian_matrix(d_x, m, scale, rng), gaussian_matrix(d_y, m, scale, rng)};
  ReducedProblem reduced;
  try {
    reduced = reduce_problem(raw, {d_y}, tol);
  } catch (const Error& e) {
    throw Error(ErrorKind::AssumptionViolation, "seed " + std::to_string(seed) + ": " + e.what());
  }
  const AssumptionReport report = check_assumptions(raw, reduced, tol);
  if (!report.all_pass()) {
    std::ostringstream os;
    os << "seed " << seed << " misses a margin (singular gap " << report.min_singular_gap << ", critical gap "
       << report.min_critical_gap << ")";
    throw Error(ErrorKind::AssumptionViolation, os.str());
  }
  return raw;
}

Matrix least_squares_solution(const RawProblem& raw) {
  const Matrix gram = raw.X * raw.X.transpose();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || numerical_rank(raw.X) < raw.d_x()) {
    throw Error(ErrorKind::RankDeficient, "X X^T is not invertible");
  }
  // W (X X^T) = Y X^T  <=>  (X X^T) W^T = X Y^T.
  return llt.solve(raw.X * raw.Y.transpose()).transpose();
}

double raw_loss(const RawProblem& raw, const WeightTuple& w) {
  const Matrix product = pi_product(w, 1, w.H() + 1);
  if (product.cols() != raw.d_x() || product.rows() != raw.d_y()) {
    throw Error(ErrorKind::ShapeMismatch, "weights do not map R^d_x to R^d_y");
  }
  return 0.5 * (raw.Y - product * raw.X).squaredNorm();
}

WeightTuple to_reduced_coordinates(const WeightTuple& raw_weights, const ReducedProblem& reduced) {
  WeightTuple out = raw_weights;
  const int last = out.H() + 1;
  out.layer(1) = raw_weights.layer(1) * reduced.U_X * reduced.S_X.asDiagonal() * reduced.V_Y;
  out.layer(last) = reduced.U_Y.transpose() * raw_weights.layer(last);
  return out;
}

WeightTuple to_raw_coordinates(const WeightTuple& reduced_weights, const ReducedProblem& reduced) {
  WeightTuple out = reduced_weights;
  const int last = out.H() + 1;
  out.layer(1) =
      reduced_weights.layer(1) * reduced.V_Y.transpose() * reduced.S_X.cwiseInverse().asDiagonal() * reduced.U_X.transpose();
  out.layer(last) = reduced.U_Y * reduced_weights.layer(last);
  return out;
}

}  // namespace dln
