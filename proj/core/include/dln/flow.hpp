#pragma once

#include "dln/linalg.hpp"
#include "dln/network.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dln {

enum class IntegrationMethod {
  Rk45,          ///< adaptive Dormand-Prince 5(4), the default
  Rk4,           ///< classical fixed-step RK4
  DiscreteGd,    ///< W <- W - step * grad; no conservation laws hold exactly
};

std::string_view to_string(IntegrationMethod method);
IntegrationMethod integration_method_from_string(std::string_view name);

struct IntegratorConfig {
  IntegrationMethod method = IntegrationMethod::Rk45;
  double step = 1e-3;          ///< fixed step (Rk4) or learning rate (DiscreteGd); initial step for Rk45
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double t_max = 1e4;
  double grad_stop = 1e-8;
  int snapshot_stride = 100;   ///< keep the weights of every k-th accepted step
  long max_steps = 20'000'000;
  double min_step = 1e-14;     ///< Rk45 step size below which StepUnderflow is raised

  /// Throws ConfigInvalid.
  void validate() const;
};

enum class StopReason { Converged, Horizon, Diverged };
std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view name);

struct Snapshot {
  double t = 0.0;
  WeightTuple weights;
};

/// Record of one gradient-flow solution. Row k holds the state after the
/// k-th accepted step (row 0 is the initial condition).
struct Trajectory {
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<double> grad_norms;
  /// invariant_drifts[j-1][k] = ||C_j(t_k) - C_j(0)||_F with
  /// C_j = W_{j+1}^T W_{j+1} - W_j W_j^T.
  std::vector<std::vector<double>> invariant_drifts;
  std::vector<Snapshot> snapshots;
  WeightTuple terminal;
  StopReason stop_reason = StopReason::Horizon;
  IntegrationMethod method = IntegrationMethod::Rk45;
  long accepted_steps = 0;
  long rejected_steps = 0;

  /// Conservation laws hold only for the continuous-time flow.
  bool conserved() const { return method != IntegrationMethod::DiscreteGd; }
  std::size_t rows() const { return times.size(); }
};

/// C_j = W_{j+1}^T W_{j+1} - W_j W_j^T for j = 1..H.
std::vector<Matrix> layer_invariants(const WeightTuple& w);

/// Integrates dW/dt = -grad L(W) from w0 until ||grad L||_F <= grad_stop or
/// t = t_max. Throws StepUnderflow / NonFiniteState for the continuous
/// methods; DiscreteGd reports divergence through StopReason::Diverged.
Trajectory integrate(const WeightTuple& w0, const Vector& sigma, const IntegratorConfig& cfg);

/// max over snapshots of ||C_j(t) - C_j(0)||_F / (1 + ||C_j(0)||_F), per j.
std::vector<double> invariant_drift(const Trajectory& traj);

/// max over snapshots of |(||W_j||^2 - ||W_{H+1}||^2) - c_j| / (1 + |c_j|),
/// for j = 1..H: the trace form of the same conservation law.
std::vector<double> norm_invariant_drift(const Trajectory& traj);

/// Guaranteed exponential rate for pyramidal networks whose initial C_j
/// have at least d_{j+1} positive eigenvalues.
struct ExponentialPrediction {
  /// prod_l lambda_{d_l - d_{l+1} + 1}(C_l), eigenvalues in nondecreasing order.
  double alpha = 0.0;
  /// The single-layer reading lambda_{d_{j+1}}(C_j), one per j, kept for reference.
  std::vector<double> per_layer_alpha;
  /// The factors of `alpha`, one per layer.
  std::vector<double> product_factors;
};

std::optional<ExponentialPrediction> check_exponential_preconditions(const WeightTuple& w0,
                                                                     double rank_rel_tol = 1e-8);

enum class RateKind { Exponential, Polynomial, Undetermined };
std::string_view to_string(RateKind kind);

/// Fitted decay of L(t) - L_inf: exp(-2 rate t) or t^(-rate).
struct RateEstimate {
  RateKind kind = RateKind::Undetermined;
  double rate = 0.0;
  double fit_quality = 0.0;       ///< R^2 of the selected fit
  double exponential_r2 = 0.0;
  double polynomial_r2 = 0.0;
  double exponential_rate = 0.0;
  double polynomial_rate = 0.0;
  std::size_t points = 0;
};

struct RateFitOptions {
  std::size_t min_points = 20;
  double min_quality = 0.9;
  /// Samples with L - L_inf below noise_floor * max(1, |L_inf|) are dropped.
  double noise_floor = 1e-13;
};

/// Fits the later half (in time) of the record above the noise floor; throws
/// InsufficientDecay when fewer than min_points remain.
RateEstimate fit_rate(std::span<const double> times, std::span<const double> losses, double terminal_loss,
                      const RateFitOptions& opts = {});
RateEstimate fit_rate(const Trajectory& traj, double terminal_loss, const RateFitOptions& opts = {});

}  // namespace dln
