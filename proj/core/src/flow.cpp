#include "dln/flow.hpp"

#include "dln/errors.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dln {

namespace odeint = boost::numeric::odeint;

std::string_view to_string(IntegrationMethod method) {
  switch (method) {
    case IntegrationMethod::Rk45: return "rk45";
    case IntegrationMethod::Rk4: return "rk4";
    case IntegrationMethod::DiscreteGd: return "discrete";
  }
  return "rk45";
}

IntegrationMethod integration_method_from_string(std::string_view name) {
  if (name == "rk45") return IntegrationMethod::Rk45;
  if (name == "rk4") return IntegrationMethod::Rk4;
  if (name == "discrete") return IntegrationMethod::DiscreteGd;
  throw Error(ErrorKind::ConfigInvalid, "unknown integration method '" + std::string(name) + "'");
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Converged: return "converged";
    case StopReason::Horizon: return "horizon";
    case StopReason::Diverged: return "diverged";
  }
  return "horizon";
}

StopReason stop_reason_from_string(std::string_view name) {
  if (name == "converged") return StopReason::Converged;
  if (name == "horizon") return StopReason::Horizon;
  if (name == "diverged") return StopReason::Diverged;
  throw Error(ErrorKind::ParseError, "unknown stop reason '" + std::string(name) + "'");
}

std::string_view to_string(RateKind kind) {
  switch (kind) {
    case RateKind::Exponential: return "exponential";
    case RateKind::Polynomial: return "polynomial";
    case RateKind::Undetermined: return "undetermined";
  }
  return "undetermined";
}

void IntegratorConfig::validate() const {
  if (!(step > 0.0)) throw Error(ErrorKind::ConfigInvalid, "step must be positive");
  if (!(t_max > 0.0)) throw Error(ErrorKind::ConfigInvalid, "t_max must be positive");
  if (!(grad_stop > 0.0)) throw Error(ErrorKind::ConfigInvalid, "grad_stop must be positive");
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw Error(ErrorKind::ConfigInvalid, "tolerances must be positive");
  if (snapshot_stride < 1) throw Error(ErrorKind::ConfigInvalid, "snapshot_stride must be >= 1");
  if (max_steps < 1) throw Error(ErrorKind::ConfigInvalid, "max_steps must be >= 1");
}

std::vector<Matrix> layer_invariants(const WeightTuple& w) {
  std::vector<Matrix> c;
  for (int j = 1; j <= w.H(); ++j) {
    c.push_back(w.layer(j + 1).transpose() * w.layer(j + 1) - w.layer(j) * w.layer(j).transpose());
  }
  return c;
}

namespace {

using State = std::vector<double>;

/// Negative gradient field on the flattened state, with scratch storage so
/// that repeated evaluations do not allocate.
class GradientField {
 public:
  GradientField(const LayerDims& dims, const Vector& sigma)
      : dims_(dims), layers_(dims.H() + 1), target_(target_matrix(sigma, dims.d_x())) {
    for (int j = 1; j <= layers_; ++j) offsets_.push_back(offset_end_ += dims.width(j) * dims.width(j - 1));
    offsets_.insert(offsets_.begin(), 0);
    offsets_.pop_back();
    prefix_.resize(static_cast<std::size_t>(layers_ + 1));
    suffix_.resize(static_cast<std::size_t>(layers_ + 2));
  }

  Eigen::Map<const Matrix> layer(const State& x, int j) const {
    return {x.data() + offsets_[static_cast<std::size_t>(j - 1)], dims_.width(j), dims_.width(j - 1)};
  }

  void operator()(const State& x, State& dxdt, double /*t*/) {
    products(x);
    const Matrix m = target_ - prefix_[static_cast<std::size_t>(layers_)];
    for (int j = 1; j <= layers_; ++j) {
      Eigen::Map<Matrix> out(dxdt.data() + offsets_[static_cast<std::size_t>(j - 1)], dims_.width(j),
                             dims_.width(j - 1));
      const Matrix& after = suffix_[static_cast<std::size_t>(j + 1)];
      const Matrix& before = prefix_[static_cast<std::size_t>(j - 1)];
      out.noalias() = after.transpose() * m * before.transpose();
    }
  }

  double loss(const State& x) {
    Matrix p = layer(x, 1);
    for (int j = 2; j <= layers_; ++j) p = layer(x, j) * p;
    return 0.5 * (target_ - p).squaredNorm();
  }

  void invariant_drifts(const State& x, const std::vector<Matrix>& c0, std::vector<double>& out) const {
    out.resize(c0.size());
    for (int j = 1; j < layers_; ++j) {
      const auto wj = layer(x, j);
      const auto wn = layer(x, j + 1);
      out[static_cast<std::size_t>(j - 1)] =
          (wn.transpose() * wn - wj * wj.transpose() - c0[static_cast<std::size_t>(j - 1)]).norm();
    }
  }

  Index size() const { return offset_end_; }

 private:
  void products(const State& x) {
    prefix_[0] = Matrix::Identity(dims_.d_x(), dims_.d_x());
    for (int j = 1; j <= layers_; ++j) {
      prefix_[static_cast<std::size_t>(j)].noalias() = layer(x, j) * prefix_[static_cast<std::size_t>(j - 1)];
    }
    suffix_[static_cast<std::size_t>(layers_ + 1)] = Matrix::Identity(dims_.d_y(), dims_.d_y());
    for (int j = layers_; j >= 1; --j) {
      suffix_[static_cast<std::size_t>(j)].noalias() = suffix_[static_cast<std::size_t>(j + 1)] * layer(x, j);
    }
  }

  LayerDims dims_;
  int layers_;
  Matrix target_;
  std::vector<Index> offsets_;
  Index offset_end_ = 0;
  std::vector<Matrix> prefix_;
  std::vector<Matrix> suffix_;
};

double l2(const State& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

bool finite(const State& v) {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

class Recorder {
 public:
  Recorder(Trajectory& traj, GradientField& field, const std::vector<Matrix>& c0, const LayerDims& dims, int stride)
      : traj_(traj), field_(field), c0_(c0), dims_(dims), stride_(stride) {
    traj_.invariant_drifts.assign(c0.size(), {});
  }

  void row(double t, const State& x, double grad_norm, double loss) {
    traj_.times.push_back(t);
    traj_.losses.push_back(loss);
    traj_.grad_norms.push_back(grad_norm);
    field_.invariant_drifts(x, c0_, drift_);
    for (std::size_t j = 0; j < drift_.size(); ++j) traj_.invariant_drifts[j].push_back(drift_[j]);
    const auto k = static_cast<long>(traj_.times.size()) - 1;
    if (k % stride_ == 0) {
      traj_.snapshots.push_back({t, WeightTuple::unflatten(dims_, x)});
      last_snapshot_row_ = k;
    }
  }

  void finish(const State& x) {
    traj_.terminal = WeightTuple::unflatten(dims_, x);
    const auto last = static_cast<long>(traj_.times.size()) - 1;
    if (last_snapshot_row_ != last || traj_.snapshots.size() < 2) {
      traj_.snapshots.push_back({traj_.times.back(), traj_.terminal});
    }
  }

 private:
  Trajectory& traj_;
  GradientField& field_;
  const std::vector<Matrix>& c0_;
  LayerDims dims_;
  int stride_;
  std::vector<double> drift_;
  long last_snapshot_row_ = -1;
};

[[noreturn]] void non_finite(double t) {
  throw Error(ErrorKind::NonFiniteState, "state became non-finite at t=" + std::to_string(t));
}

}  // namespace

Trajectory integrate(const WeightTuple& w0, const Vector& sigma, const IntegratorConfig& cfg) {
  cfg.validate();
  check_shapes(w0, sigma);
  if (!w0.all_finite()) throw Error(ErrorKind::NonFiniteState, "initial state is not finite");

  const LayerDims dims = w0.dims();
  GradientField field(dims, sigma);
  const std::vector<Matrix> c0 = layer_invariants(w0);

  Trajectory traj;
  traj.method = cfg.method;
  Recorder rec(traj, field, c0, dims, cfg.snapshot_stride);

  State x = w0.flatten();
  State dxdt(x.size());
  double t = 0.0;
  field(x, dxdt, t);
  double grad_norm = l2(dxdt);
  rec.row(t, x, grad_norm, field.loss(x));

  const auto done = [&](double gn) { return gn <= cfg.grad_stop; };
  traj.stop_reason = StopReason::Horizon;
  if (done(grad_norm)) {
    traj.stop_reason = StopReason::Converged;
    rec.finish(x);
    return traj;
  }

  switch (cfg.method) {
    case IntegrationMethod::Rk45: {
      auto stepper = odeint::make_controlled(cfg.abs_tol, cfg.rel_tol, odeint::runge_kutta_dopri5<State>());
      double dt = cfg.step;
      while (t < cfg.t_max && traj.accepted_steps < cfg.max_steps) {
        dt = std::min(dt, cfg.t_max - t);
        const auto result = stepper.try_step(std::ref(field), x, dxdt, t, dt);
        if (result == odeint::fail) {
          ++traj.rejected_steps;
          if (dt < cfg.min_step) {
            throw Error(ErrorKind::StepUnderflow, "step size " + std::to_string(dt) + " at t=" + std::to_string(t));
          }
          continue;
        }
        ++traj.accepted_steps;
        if (!finite(x) || !finite(dxdt)) non_finite(t);
        grad_norm = l2(dxdt);
        rec.row(t, x, grad_norm, field.loss(x));
        if (done(grad_norm)) {
          traj.stop_reason = StopReason::Converged;
          break;
        }
      }
      break;
    }
    case IntegrationMethod::Rk4: {
      odeint::runge_kutta4<State> stepper;
      while (t < cfg.t_max && traj.accepted_steps < cfg.max_steps) {
        const double dt = std::min(cfg.step, cfg.t_max - t);
        stepper.do_step(std::ref(field), x, dxdt, t, dt);
        t += dt;
        ++traj.accepted_steps;
        if (!finite(x)) non_finite(t);
        field(x, dxdt, t);
        grad_norm = l2(dxdt);
        rec.row(t, x, grad_norm, field.loss(x));
        if (done(grad_norm)) {
          traj.stop_reason = StopReason::Converged;
          break;
        }
      }
      break;
    }
    case IntegrationMethod::DiscreteGd: {
      const auto steps = static_cast<long>(std::ceil(cfg.t_max / cfg.step));
      State prev;
      while (traj.accepted_steps < std::min(steps, cfg.max_steps)) {
        prev = x;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.step * dxdt[i];
        ++traj.accepted_steps;
        t = static_cast<double>(traj.accepted_steps) * cfg.step;
        field(x, dxdt, t);
        const double l = field.loss(x);
        if (!finite(x) || !finite(dxdt) || !std::isfinite(l) || l > 1e300) {
          traj.stop_reason = StopReason::Diverged;
          x = prev;
          break;
        }
        grad_norm = l2(dxdt);
        rec.row(t, x, grad_norm, l);
        if (done(grad_norm)) {
          traj.stop_reason = StopReason::Converged;
          break;
        }
      }
      break;
    }
  }
  rec.finish(x);
  return traj;
}

namespace {

void require_snapshots(const Trajectory& traj) {
  if (traj.snapshots.size() < 2) {
    throw Error(ErrorKind::TooFewSnapshots, "need at least 2 snapshots, have " + std::to_string(traj.snapshots.size()));
  }
}

}  // namespace

std::vector<double> invariant_drift(const Trajectory& traj) {
  require_snapshots(traj);
  const std::vector<Matrix> c0 = layer_invariants(traj.snapshots.front().weights);
  std::vector<double> drift(c0.size(), 0.0);
  for (const Snapshot& s : traj.snapshots) {
    const std::vector<Matrix> c = layer_invariants(s.weights);
    for (std::size_t j = 0; j < c.size(); ++j) {
      drift[j] = std::max(drift[j], (c[j] - c0[j]).norm() / (1.0 + c0[j].norm()));
    }
  }
  return drift;
}

std::vector<double> norm_invariant_drift(const Trajectory& traj) {
  require_snapshots(traj);
  const auto offsets = [](const WeightTuple& w) {
    std::vector<double> c;
    const double last = w.layer(w.H() + 1).squaredNorm();
    for (int j = 1; j <= w.H(); ++j) c.push_back(w.layer(j).squaredNorm() - last);
    return c;
  };
  const std::vector<double> c0 = offsets(traj.snapshots.front().weights);
  std::vector<double> drift(c0.size(), 0.0);
  for (const Snapshot& s : traj.snapshots) {
    const std::vector<double> c = offsets(s.weights);
    for (std::size_t j = 0; j < c.size(); ++j) drift[j] = std::max(drift[j], std::abs(c[j] - c0[j]) / (1.0 + std::abs(c0[j])));
  }
  return drift;
}

std::optional<ExponentialPrediction> check_exponential_preconditions(const WeightTuple& w0, double rank_rel_tol) {
  const LayerDims dims = w0.dims();
  if (!dims.pyramidal()) return std::nullopt;
  const std::vector<Matrix> c = layer_invariants(w0);
  ExponentialPrediction out;
  out.alpha = 1.0;
  for (int j = 1; j <= dims.H(); ++j) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c[static_cast<std::size_t>(j - 1)], Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();  // nondecreasing
    const double scale = ev.cwiseAbs().maxCoeff();
    if (scale <= 0.0) return std::nullopt;
    const Index positive = (ev.array() > rank_rel_tol * scale).count();
    const Index d_j = dims.width(j);
    const Index d_next = dims.width(j + 1);
    if (positive < d_next) return std::nullopt;
    const double factor = ev(d_j - d_next);
    out.product_factors.push_back(factor);
    out.per_layer_alpha.push_back(ev(d_next - 1));
    out.alpha *= factor;
  }
  return out;
}

namespace {

struct LineFit {
  double slope = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit fit;
  if (sxx <= 0.0 || syy <= 0.0) return fit;
  fit.slope = sxy / sxx;
  const double ss_res = syy - fit.slope * sxy;
  fit.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

}  // namespace

RateEstimate fit_rate(std::span<const double> times, std::span<const double> losses, double terminal_loss,
                      const RateFitOptions& opts) {
  if (times.size() != losses.size()) throw Error(ErrorKind::ShapeMismatch, "times and losses differ in length");
  const double floor = opts.noise_floor * std::max(1.0, std::abs(terminal_loss));
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (losses[i] - terminal_loss > floor) usable.push_back(i);
  }
  if (usable.size() < opts.min_points) {
    throw Error(ErrorKind::InsufficientDecay, std::to_string(usable.size()) + " samples above the noise floor");
  }
  // The window is the later half of the usable time span, widened to at least min_points samples.
  const double t_mid = 0.5 * (times[usable.front()] + times[usable.back()]);
  std::size_t first = 0;
  while (first < usable.size() && times[usable[first]] < t_mid) ++first;
  first = std::min(first, usable.size() - opts.min_points);

  std::vector<double> t, logt_x, logt_y, log_excess;
  for (std::size_t k = first; k < usable.size(); ++k) {
    const std::size_t i = usable[k];
    const double excess = std::log(losses[i] - terminal_loss);
    t.push_back(times[i]);
    log_excess.push_back(excess);
    if (times[i] > 0.0) {
      logt_x.push_back(std::log(times[i]));
      logt_y.push_back(excess);
    }
  }

  RateEstimate est;
  est.points = t.size();
  const LineFit exp_fit = fit_line(t, log_excess);
  est.exponential_r2 = exp_fit.r2;
  est.exponential_rate = -exp_fit.slope / 2.0;
  if (logt_x.size() >= 2) {
    const LineFit poly_fit = fit_line(logt_x, logt_y);
    est.polynomial_r2 = poly_fit.r2;
    est.polynomial_rate = -poly_fit.slope;
  }
  const bool exp_better = est.exponential_r2 >= est.polynomial_r2;
  est.fit_quality = exp_better ? est.exponential_r2 : est.polynomial_r2;
  est.rate = exp_better ? est.exponential_rate : est.polynomial_rate;
  if (est.fit_quality < opts.min_quality || est.rate <= 0.0) {
    est.kind = RateKind::Undetermined;
  } else {
    est.kind = exp_better ? RateKind::Exponential : RateKind::Polynomial;
  }
  return est;
}

RateEstimate fit_rate(const Trajectory& traj, double terminal_loss, const RateFitOptions& opts) {
  return fit_rate(traj.times, traj.losses, terminal_loss, opts);
}

}  // namespace dln
