#pragma once

#include "dln/landscape.hpp"
#include "dln/linalg.hpp"
#include "dln/network.hpp"

#include <optional>

namespace dln {

enum class FormPath {
  Auto,        ///< shallow critical-point formula when H = 1 and the critical conditions hold at 1e-8
  General,     ///< layer recurrence, valid everywhere
  ShallowCritical,
};

/// Second-order Taylor coefficient H(xi) of L at w:
///   L(w + xi) = L(w) + first_variation(w, xi) + quadratic_form(w, xi) + O(|xi|^3).
/// With M = Sigma_Y - product and P_k the degree-k part of the perturbed
/// product, H = -<M, P_2> + 1/2 ||P_1||^2. At an H = 1 critical point this
/// reduces to -tr(w_2 w_{1,1} M~^T) + 1/2 ||w_2 W_{1,1} + W_2 w_{1,1}||^2
/// + 1/2 ||w_2 W_{1,2} + W_2 w_{1,2}||^2, M~ = S_Y - W_2 W_{1,1}.
double quadratic_form(const WeightTuple& w, const Direction& xi, const Vector& sigma,
                      FormPath path = FormPath::Auto);

/// Delta(xi) = -<M, P_1> = <grad L(w), xi>.
double first_variation(const WeightTuple& w, const Direction& xi, const Vector& sigma);

/// Largest state dimension accepted by hessian_matrix / spectrum.
inline constexpr Index kMaxHessianDimension = 2000;

/// The symmetric matrix A = grad^2 L in the flatten() order, so that
/// quadratic_form(w, xi) = 1/2 xi^T A xi. Entries come from polarization,
/// A_ij = 1/2 (H(e_i + e_j) - H(e_i - e_j)). Throws TooLarge.
Matrix hessian_matrix(const WeightTuple& w, const Vector& sigma, FormPath path = FormPath::General);

struct HessianSpectrum {
  Vector eigenvalues;   ///< nondecreasing
  Matrix eigenvectors;  ///< columns, matching eigenvalues
  Index negative = 0;
  Index zero = 0;
  Index positive = 0;
  double zero_tol = 0.0;  ///< absolute threshold actually applied

  Index kernel_dimension() const { return zero; }
  /// Orthonormal basis of the eigenvectors classed zero.
  Matrix kernel_basis() const;
};

/// Eigenvalues with |lambda| <= zero_rel_tol * max |lambda| count as zero.
HessianSpectrum spectrum(const WeightTuple& w, const Vector& sigma, double zero_rel_tol = 1e-7);
HessianSpectrum spectrum_of(const Matrix& hessian, double zero_rel_tol = 1e-7);

struct NegativeDirection {
  Direction direction;
  double value = 0.0;   ///< quadratic_form(w, direction) < 0
  double lambda = 0.0;  ///< weight of the input-layer part
  double mu = 1.0;      ///< weight of the output-layer part
  int row = 0;          ///< unfitted output index k carrying the output-layer part
};

struct NegativeDirectionOptions {
  double grad_tol = 1e-6;
  double rank_rel_tol = 1e-6;
};

/// At a critical point with rank Z > rank R, builds xi = (lambda v e_k^T, 0, ..., 0, mu e_k u^T)
/// with v in ker R, u = Z v / ||Z v||, so that H(xi) = -lambda mu c + mu^2 q / 2 with
/// c = ||Z v|| M_kk and q = ||u^T Z W_1||^2; mu = 1 and lambda = sign(c)(1 + q)/|c|
/// make the value -(1 + q/2). Returns nothing at global minima and when no
/// such v exists. Throws NotCritical.
std::optional<NegativeDirection> negative_direction(const WeightTuple& w, const Vector& sigma,
                                                    const NegativeDirectionOptions& opts = {});

/// Tangent vectors (as columns, flatten() order, unit length) of the H = 1
/// stratum through a constructed saddle, one per free entry of the
/// variations (a_1, a_2, b_2, c_2). The dependent blocks follow from
/// b_1 = -A^{-1}(a_1 A^{-1} D + a_2 B_2) and c_1 = -A^{-1} a_2 C_2.
Matrix stratum_tangent_basis(const SaddleConstruction& saddle);

struct TangentCheckOptions {
  double zero_rel_tol = 1e-7;       ///< eigenvalue classification
  double annihilation_tol = 1e-6;   ///< ||A xi|| for unit tangent xi
  double angle_tol = 1e-6;          ///< max principal angle, radians
};

struct TangentKernelReport {
  Index r = 0;
  Index kernel_dimension = 0;
  Index expected_dimension = 0;   ///< stratum_dimension(r)
  Index printed_dimension = 0;    ///< printed_stratum_dimension(r)
  Index tangent_rank = 0;
  double max_annihilation = 0.0;
  double max_angle = 0.0;
  Index negative = 0;
  Index positive = 0;

  bool dimension_ok() const { return kernel_dimension == expected_dimension; }
  bool passed = false;
};

/// Compares the Hessian kernel at `w` with the tangent space built from
/// `saddle`. Passing `w = saddle.weights` checks the saddle itself; any other
/// point serves as a control. Throws NotConstructedSaddle unless saddle is an
/// H = 1 construction shaped like w.
TangentKernelReport tangent_kernel_check(const WeightTuple& w, const SaddleConstruction& saddle, const Vector& sigma,
                                         const TangentCheckOptions& opts = {});

}  // namespace dln
