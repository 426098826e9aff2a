#include "dln/hessian.hpp"

#include "dln/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dln {

namespace {

struct Expansion {
  Matrix m;   // Sigma_Y - W_{H+1}...W_1
  Matrix p1;  // first-order part of the perturbed product
  Matrix p2;  // second-order part
};

Expansion expand(const WeightTuple& w, const Direction& xi, const Vector& sigma) {
  check_shapes(w, sigma);
  if (!w.same_shape(xi)) throw Error(ErrorKind::ShapeMismatch, "direction does not match the weights");
  const Index dx = w.layer(1).cols();
  Matrix p0 = Matrix::Identity(dx, dx);
  Matrix p1 = Matrix::Zero(dx, dx);
  Matrix p2 = Matrix::Zero(dx, dx);
  for (int j = 1; j <= w.H() + 1; ++j) {
    const Matrix& a = w.layer(j);
    const Matrix& b = xi.layer(j);
    p2 = a * p2 + b * p1;
    p1 = a * p1 + b * p0;
    p0 = a * p0;
  }
  return {target_matrix(sigma, dx) - p0, std::move(p1), std::move(p2)};
}

double shallow_critical_form(const WeightTuple& w, const Direction& xi, const Vector& sigma) {
  check_shapes(w, sigma);
  if (w.H() != 1) throw Error(ErrorKind::ShapeMismatch, "the shallow critical-point form needs H = 1");
  if (!w.same_shape(xi)) throw Error(ErrorKind::ShapeMismatch, "direction does not match the weights");
  const Index dy = sigma.size();
  const Index tail = w.layer(1).cols() - dy;
  const Matrix& W2 = w.layer(2);
  const Matrix& w2 = xi.layer(2);
  const Matrix W11 = w.layer(1).leftCols(dy);
  const Matrix W12 = w.layer(1).rightCols(tail);
  const Matrix w11 = xi.layer(1).leftCols(dy);
  const Matrix w12 = xi.layer(1).rightCols(tail);
  const Matrix m = Matrix(sigma.asDiagonal()) - W2 * W11;
  return -frobenius_dot(w2 * w11, m) + 0.5 * (w2 * W11 + W2 * w11).squaredNorm() +
         0.5 * (w2 * W12 + W2 * w12).squaredNorm();
}

}  // namespace

double quadratic_form(const WeightTuple& w, const Direction& xi, const Vector& sigma, FormPath path) {
  if (path == FormPath::Auto) {
    path = (w.H() == 1 && verify_critical_conditions(w, sigma).holds(1e-8)) ? FormPath::ShallowCritical
                                                                            : FormPath::General;
  }
  if (path == FormPath::ShallowCritical) return shallow_critical_form(w, xi, sigma);
  const Expansion e = expand(w, xi, sigma);
  return -frobenius_dot(e.m, e.p2) + 0.5 * e.p1.squaredNorm();
}

double first_variation(const WeightTuple& w, const Direction& xi, const Vector& sigma) {
  const Expansion e = expand(w, xi, sigma);
  return -frobenius_dot(e.m, e.p1);
}

Matrix hessian_matrix(const WeightTuple& w, const Vector& sigma, FormPath path) {
  const Index n = w.size();
  if (n > kMaxHessianDimension) {
    throw Error(ErrorKind::TooLarge, "state dimension " + std::to_string(n) + " exceeds " +
                                         std::to_string(kMaxHessianDimension));
  }
  if (path == FormPath::Auto) {
    path = (w.H() == 1 && verify_critical_conditions(w, sigma).holds(1e-8)) ? FormPath::ShallowCritical
                                                                            : FormPath::General;
  }
  const LayerDims dims = w.dims();
  std::vector<double> flat(static_cast<std::size_t>(n), 0.0);
  const auto form = [&](Index i, double si, Index j, double sj) {
    flat[static_cast<std::size_t>(i)] += si;
    flat[static_cast<std::size_t>(j)] += sj;
    const double q = quadratic_form(w, Direction::unflatten(dims, flat), sigma, path);
    flat[static_cast<std::size_t>(i)] = 0.0;
    flat[static_cast<std::size_t>(j)] = 0.0;
    return q;
  };

  Matrix a(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, i) = 2.0 * form(i, 1.0, i, 0.0);
    for (Index j = i + 1; j < n; ++j) {
      a(i, j) = 0.5 * (form(i, 1.0, j, 1.0) - form(i, 1.0, j, -1.0));
      a(j, i) = a(i, j);
    }
  }
  return a;
}

Matrix HessianSpectrum::kernel_basis() const {
  Matrix k(eigenvectors.rows(), zero);
  Index c = 0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    if (std::abs(eigenvalues(i)) <= zero_tol) k.col(c++) = eigenvectors.col(i);
  }
  return k;
}

HessianSpectrum spectrum_of(const Matrix& hessian, double zero_rel_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::NonConverged, "symmetric eigensolver failed");
  HessianSpectrum s;
  s.eigenvalues = eig.eigenvalues();
  s.eigenvectors = eig.eigenvectors();
  const double scale = s.eigenvalues.size() ? s.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  s.zero_tol = zero_rel_tol * scale;
  for (Index i = 0; i < s.eigenvalues.size(); ++i) {
    const double l = s.eigenvalues(i);
    if (std::abs(l) <= s.zero_tol) {
      ++s.zero;
    } else if (l < 0.0) {
      ++s.negative;
    } else {
      ++s.positive;
    }
  }
  return s;
}

HessianSpectrum spectrum(const WeightTuple& w, const Vector& sigma, double zero_rel_tol) {
  return spectrum_of(hessian_matrix(w, sigma), zero_rel_tol);
}

std::optional<NegativeDirection> negative_direction(const WeightTuple& w, const Vector& sigma,
                                                    const NegativeDirectionOptions& opts) {
  check_shapes(w, sigma);
  const double grad_norm = gradient(w, sigma).norm();
  if (grad_norm > opts.grad_tol) {
    std::ostringstream os;
    os << "gradient norm " << grad_norm << " exceeds " << opts.grad_tol;
    throw Error(ErrorKind::NotCritical, os.str());
  }
  const int H = w.H();
  const Index dy = sigma.size();
  const Matrix m = residual(w, sigma);
  Index k = 0;
  m.leftCols(dy).diagonal().cwiseAbs().maxCoeff(&k);
  if (std::abs(m(k, k)) <= 1e-12 * sigma(0)) return std::nullopt;

  const Matrix r = pi_product(w, 2, H + 1);
  const Matrix z = pi_product(w, 2, H);
  const Matrix n = dln::kernel_basis(r, opts.rank_rel_tol);
  if (n.cols() == 0) return std::nullopt;
  Eigen::JacobiSVD<Matrix> svd(z * n, Eigen::ComputeFullV);
  const double top = svd.singularValues()(0);
  if (top <= opts.rank_rel_tol * std::max(z.norm(), 1e-300)) return std::nullopt;

  const Vector v = n * svd.matrixV().col(0);
  const Vector zv = z * v;
  const Vector u = zv / zv.norm();
  const double c = zv.norm() * m(k, k);
  const double q = (u.transpose() * z * w.layer(1)).squaredNorm();

  NegativeDirection out;
  out.row = static_cast<int>(k);
  out.mu = 1.0;
  out.lambda = (c > 0.0 ? 1.0 : -1.0) * (1.0 + q) / std::abs(c);
  out.direction = Direction::zeros(w.dims());
  out.direction.layer(1).col(k) = out.lambda * v;
  out.direction.layer(H + 1).row(k) = out.mu * u.transpose();
  out.value = quadratic_form(w, out.direction, sigma, FormPath::General);
  if (!(out.value < 0.0)) return std::nullopt;
  return out;
}

Matrix stratum_tangent_basis(const SaddleConstruction& saddle) {
  if (saddle.H != 1) throw Error(ErrorKind::NotConstructedSaddle, "tangent basis is defined for H = 1 saddles");
  const WeightTuple& w = saddle.weights;
  const Index dy = w.layer(2).rows();
  const Index d1 = w.layer(1).rows();
  const Index dx = w.layer(1).cols();
  const Index r = saddle.r();
  const Index tail = dx - dy;
  const Matrix a_inv = r > 0 ? Matrix(saddle.A.inverse()) : Matrix(0, 0);
  const Matrix b1 = r > 0 ? Matrix(a_inv * saddle.D.asDiagonal()) : Matrix(0, 0);

  std::vector<std::vector<double>> columns;
  const auto emit = [&](const Matrix& a1, const Matrix& a2, const Matrix& b2, const Matrix& c2) {
    Matrix a(r, d1);
    a << a1, a2;
    const Matrix w21 = a * saddle.V;
    Matrix b(d1, r);
    b.topRows(r) = -a_inv * (a1 * b1 + a2 * saddle.B2);
    b.bottomRows(d1 - r) = b2;
    const Matrix w111 = saddle.V.transpose() * b;
    Matrix c(d1, tail);
    c.topRows(r) = -a_inv * a2 * saddle.C2;
    c.bottomRows(d1 - r) = c2;

    Direction xi = Direction::zeros(w.dims());
    for (Index k = 0; k < r; ++k) {
      const int i = saddle.fitted[static_cast<std::size_t>(k)];
      xi.layer(2).row(i) = w21.row(k);
      xi.layer(1).col(i) = w111.col(k);
    }
    xi.layer(1).rightCols(tail) = saddle.V.transpose() * c;
    xi *= 1.0 / xi.norm();
    columns.push_back(xi.flatten());
  };

  const auto unit = [](Index rows, Index cols, Index idx) {
    Matrix e = Matrix::Zero(rows, cols);
    if (idx >= 0) e(idx % rows, idx / rows) = 1.0;
    return e;
  };
  const Index sizes[4] = {r * r, r * (d1 - r), (d1 - r) * r, (d1 - r) * tail};
  for (int block = 0; block < 4; ++block) {
    for (Index idx = 0; idx < sizes[block]; ++idx) {
      emit(unit(r, r, block == 0 ? idx : -1), unit(r, d1 - r, block == 1 ? idx : -1),
           unit(d1 - r, r, block == 2 ? idx : -1), unit(d1 - r, tail, block == 3 ? idx : -1));
    }
  }

  Matrix basis(w.size(), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    basis.col(static_cast<Index>(j)) = Eigen::Map<const Vector>(columns[j].data(), w.size());
  }
  return basis;
}

TangentKernelReport tangent_kernel_check(const WeightTuple& w, const SaddleConstruction& saddle, const Vector& sigma,
                                         const TangentCheckOptions& opts) {
  if (saddle.H != 1 || w.H() != 1 || !w.same_shape(saddle.weights)) {
    throw Error(ErrorKind::NotConstructedSaddle, "tangent check needs an H = 1 construction shaped like the point");
  }
  const LayerDims dims = w.dims();
  TangentKernelReport rep;
  rep.r = saddle.r();
  rep.expected_dimension = stratum_dimension(rep.r, dims);
  rep.printed_dimension = printed_stratum_dimension(rep.r, dims);

  const Matrix a = hessian_matrix(w, sigma);
  const HessianSpectrum sp = spectrum_of(a, opts.zero_rel_tol);
  rep.kernel_dimension = sp.kernel_dimension();
  rep.negative = sp.negative;
  rep.positive = sp.positive;

  const Matrix t = stratum_tangent_basis(saddle);
  rep.tangent_rank = numerical_rank(t);
  for (Index j = 0; j < t.cols(); ++j) rep.max_annihilation = std::max(rep.max_annihilation, (a * t.col(j)).norm());
  rep.max_angle = max_principal_angle(sp.kernel_basis(), range_basis(t));
  rep.passed = rep.dimension_ok() && rep.tangent_rank == rep.expected_dimension &&
               rep.max_annihilation <= opts.annihilation_tol && rep.max_angle <= opts.angle_tol;
  return rep;
}

}  // namespace dln
