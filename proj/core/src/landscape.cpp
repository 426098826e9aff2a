#include "dln/landscape.hpp"

#include "dln/errors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <sstream>

namespace dln {

IndexSet CriticalValueEntry::fitted(int d_y) const {
  IndexSet out;
  for (int i = 0; i < d_y; ++i) {
    if (!(mask & (1u << i))) out.push_back(i);
  }
  return out;
}

namespace {

std::uint32_t mask_of(const IndexSet& subset) {
  std::uint32_t m = 0;
  for (int i : subset) m |= 1u << i;
  return m;
}

Index rank_above(const Matrix& a, double rel_tol, double abs_floor) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector s = svd.singularValues();
  const double thr = std::max(rel_tol * s.maxCoeff(), abs_floor);
  return (s.array() > thr).count();
}

double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double low = s(s.size() - 1);
  return low > 0.0 ? s(0) / low : std::numeric_limits<double>::infinity();
}

constexpr double kMaxCondition = 1e6;
constexpr int kDraws = 10;

}  // namespace

std::size_t CriticalValueTable::index_of(const IndexSet& subset) const {
  const std::uint32_t m = mask_of(subset);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].mask == m) return k;
  }
  throw Error(ErrorKind::IndexOutOfRange, "subset " + format_subset(subset) + " is not in the table");
}

std::size_t CriticalValueTable::index_of_fitted(const IndexSet& fitted) const {
  const auto d_y = static_cast<int>(sigma.size());
  const std::uint32_t all = d_y >= 32 ? ~0u : ((1u << d_y) - 1u);
  const std::uint32_t m = all & ~mask_of(fitted);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (entries[k].mask == m) return k;
  }
  throw Error(ErrorKind::IndexOutOfRange, "fitted set " + format_subset(fitted) + " is not in the table");
}

CriticalValueTable critical_values(const Vector& sigma, double separation_rel_tol) {
  const auto n = static_cast<int>(sigma.size());
  if (n < 1 || n > 24) throw Error(ErrorKind::OutOfRange, "critical value table needs 1 <= d_y <= 24");
  CriticalValueTable table;
  table.sigma = sigma;
  const std::uint32_t count = 1u << n;
  table.entries.resize(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    CriticalValueEntry& e = table.entries[mask];
    e.mask = mask;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        e.subset.push_back(i);
        e.value += 0.5 * sigma(i) * sigma(i);
      }
    }
  }
  std::sort(table.entries.begin(), table.entries.end(), [](const auto& a, const auto& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.mask < b.mask;
  });
  const double tol = separation_rel_tol * 0.5 * sigma.squaredNorm();
  for (std::size_t k = 1; k < table.entries.size(); ++k) {
    if (table.entries[k - 1].value - table.entries[k].value <= tol) {
      std::ostringstream os;
      os << "critical values of " << format_subset(table.entries[k - 1].subset) << " and "
         << format_subset(table.entries[k].subset) << " coincide at " << table.entries[k].value;
      throw Error(ErrorKind::DegenerateSpectrum, os.str());
    }
  }
  return table;
}

CriticalConditions verify_critical_conditions(const WeightTuple& w, const Vector& sigma) {
  check_shapes(w, sigma);
  const Index d_y = sigma.size();
  const Matrix r = pi_product(w, 2, w.H() + 1);
  const Matrix& w1 = w.layer(1);
  const Matrix w11 = w1.leftCols(d_y);
  const Matrix w12 = w1.rightCols(w1.cols() - d_y);
  const auto s = sigma.asDiagonal();
  const Matrix rw11 = r * w11;

  CriticalConditions c;
  c.transpose_fit = (r.transpose() * s - r.transpose() * rw11).norm();
  c.tail = (r * w12).norm();
  c.symmetric = (rw11 * s - rw11 * rw11.transpose()).norm();
  c.grad_norm = gradient(w, sigma).norm();
  return c;
}

CriticalPointReport classify_limit(const WeightTuple& w, const Vector& sigma, const CriticalValueTable& table,
                                   const ClassifyOptions& opts) {
  CriticalPointReport rep;
  rep.conditions = verify_critical_conditions(w, sigma);
  rep.grad_norm = rep.conditions.grad_norm;
  if (rep.grad_norm > opts.grad_tol) {
    std::ostringstream os;
    os << "gradient norm " << rep.grad_norm << " exceeds " << opts.grad_tol;
    throw Error(ErrorKind::NotCritical, os.str());
  }

  const Index d_y = sigma.size();
  const double floor = 1e-12 * sigma(0);
  rep.r = rank_above(pi_product(w, 2, w.H() + 1), opts.rank_rel_tol, floor);
  rep.r_Z = rank_above(pi_product(w, 2, w.H()), opts.rank_rel_tol, floor);

  const Matrix m = residual(w, sigma);
  for (Index i = 0; i < d_y; ++i) {
    if (std::abs(m(i, i)) <= opts.fitted_rel_tol * sigma(i)) rep.fitted_subset.push_back(static_cast<int>(i));
  }
  Matrix off = m;
  off.leftCols(d_y).diagonal().setZero();
  rep.max_offdiagonal = off.cwiseAbs().maxCoeff();
  rep.loss = 0.5 * m.squaredNorm();

  const double tol = opts.match_rel_tol * table.head();
  std::size_t best = 0;
  int within = 0;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const double d = std::abs(rep.loss - table.entries[k].value);
    if (d < std::abs(rep.loss - table.entries[best].value)) best = k;
    if (d <= tol) ++within;
  }
  if (within > 1) {
    std::ostringstream os;
    os << "loss " << rep.loss << " lies within " << tol << " of " << within << " critical values";
    throw Error(ErrorKind::AmbiguousMatch, os.str());
  }
  rep.matched_index = best;
  rep.matched_value = table.entries[best].value;
  rep.matched_distance = std::abs(rep.loss - rep.matched_value);
  rep.consistent = within == 1 && rep.r == static_cast<Index>(rep.fitted_subset.size()) &&
                   table.entries[best].fitted(static_cast<int>(d_y)) == rep.fitted_subset;
  return rep;
}

namespace {

void check_subset(const IndexSet& fitted, Index d_y) {
  for (std::size_t k = 0; k < fitted.size(); ++k) {
    if (fitted[k] < 0 || fitted[k] >= d_y) {
      throw Error(ErrorKind::IndexOutOfRange, "subset index " + std::to_string(fitted[k] + 1) + " outside 1.." +
                                                  std::to_string(d_y));
    }
    if (k > 0 && fitted[k] <= fitted[k - 1]) {
      throw Error(ErrorKind::IndexOutOfRange, "subset must be strictly increasing");
    }
  }
  if (static_cast<Index>(fitted.size()) >= d_y) {
    throw Error(ErrorKind::SubsetTooLarge, "a saddle must leave at least one singular value unfitted");
  }
}

Matrix draw_well_conditioned(Index rows, Index cols, Rng& rng, const char* what) {
  for (int attempt = 0; attempt < kDraws; ++attempt) {
    Matrix a = gaussian_matrix(rows, cols, 1.0, rng);
    if (condition_number(a) <= kMaxCondition) return a;
  }
  throw Error(ErrorKind::BadConditioning, std::string(what) + " was nearly singular in " + std::to_string(kDraws) +
                                              " draws");
}

SaddleConstruction construct_shallow(const Vector& sigma, const LayerDims& dims, const IndexSet& fitted,
                                     const SaddleOptions& opts) {
  const Index d_y = dims.d_y();
  const Index d1 = dims.width(1);
  const Index dx = dims.d_x();
  const auto r = static_cast<Index>(fitted.size());
  Rng rng(opts.seed);

  SaddleConstruction out;
  out.H = 1;
  out.fitted = fitted;
  out.D.resize(r);
  for (Index k = 0; k < r; ++k) out.D(k) = sigma(fitted[static_cast<std::size_t>(k)]);
  out.A = r > 0 ? draw_well_conditioned(r, r, rng, "A") : Matrix(0, 0);
  if (r > 0) {
    // Rescale A so that |det A| = sqrt(prod D).
    const double det_a = std::abs(out.A.determinant());
    const double det_d = out.D.prod();
    out.A *= std::pow(det_d, 0.5 / static_cast<double>(r)) / std::pow(det_a, 1.0 / static_cast<double>(r));
  }
  out.V = random_orthogonal(d1, rng);
  out.B2 = gaussian_matrix(d1 - r, r, 1.0, rng);
  out.C2 = gaussian_matrix(d1 - r, dx - d_y, 1.0, rng);
  if (opts.zero_free_blocks) {
    out.B2.setZero();
    out.C2.setZero();
  }

  Matrix w21 = Matrix::Zero(r, d1);
  w21.leftCols(r) = out.A;
  w21 = w21 * out.V;
  Matrix b(d1, r);
  if (r > 0) b.topRows(r) = out.A.partialPivLu().solve(Matrix(out.D.asDiagonal()));
  b.bottomRows(d1 - r) = out.B2;
  const Matrix w111 = out.V.transpose() * b;
  Matrix c = Matrix::Zero(d1, dx - d_y);
  c.bottomRows(d1 - r) = out.C2;

  Matrix w2 = Matrix::Zero(d_y, d1);
  Matrix w1 = Matrix::Zero(d1, dx);
  for (Index k = 0; k < r; ++k) {
    const int i = fitted[static_cast<std::size_t>(k)];
    w2.row(i) = w21.row(k);
    w1.col(i) = w111.col(k);
  }
  w1.rightCols(dx - d_y) = out.V.transpose() * c;
  out.weights = WeightTuple({w1, w2});
  return out;
}

SaddleConstruction construct_deep(const Vector& sigma, const LayerDims& dims, const IndexSet& fitted,
                                  const SaddleOptions& opts) {
  const int H = dims.H();
  const Index d_y = dims.d_y();
  const Index d1 = dims.width(1);
  const Index dx = dims.d_x();
  const auto r = static_cast<Index>(fitted.size());
  Rng rng(opts.seed);

  std::vector<Matrix> layers(static_cast<std::size_t>(H + 1));
  Matrix z = Matrix::Identity(d1, d1);
  for (int j = 2; j <= H; ++j) {
    const Index in = dims.width(j - 1);
    layers[static_cast<std::size_t>(j - 1)] =
        draw_well_conditioned(dims.width(j), in, rng, "hidden factor") / std::sqrt(static_cast<double>(in));
    z = layers[static_cast<std::size_t>(j - 1)] * z;
  }
  const Index dH = dims.width(H);

  SaddleConstruction out;
  out.H = H;
  out.fitted = fitted;
  out.D.resize(r);
  for (Index k = 0; k < r; ++k) out.D(k) = sigma(fitted[static_cast<std::size_t>(k)]);

  // Fitted rows of the output layer, and the induced fitted rows of R.
  Matrix g(r, dH);
  Matrix rs(r, d1);
  for (int attempt = 0;; ++attempt) {
    g = gaussian_matrix(r, dH, 1.0, rng);
    rs = g * z;
    if (r == 0 || condition_number(rs) <= kMaxCondition) break;
    if (attempt + 1 == kDraws) {
      throw Error(ErrorKind::BadConditioning, "output factor was nearly singular in " + std::to_string(kDraws) +
                                                  " draws");
    }
  }
  const Matrix n = kernel_basis(rs);  // d1 x (d1 - r)
  Matrix b = gaussian_matrix(n.cols(), r, 1.0, rng);
  Matrix c = gaussian_matrix(n.cols(), dx - d_y, 1.0, rng);
  if (opts.zero_free_blocks) {
    b.setZero();
    c.setZero();
  }
  const Matrix pinv = r > 0 ? Matrix(rs.completeOrthogonalDecomposition().pseudoInverse()) : Matrix(d1, 0);

  Matrix w_out = Matrix::Zero(d_y, dH);
  Matrix w1 = Matrix::Zero(d1, dx);
  for (Index k = 0; k < r; ++k) {
    const int i = fitted[static_cast<std::size_t>(k)];
    w_out.row(i) = g.row(k);
    w1.col(i) = pinv.col(k) * out.D(k) + n * b.col(k);
  }
  w1.rightCols(dx - d_y) = n * c;
  layers.front() = w1;
  layers.back() = w_out;
  out.weights = WeightTuple(std::move(layers));
  return out;
}

}  // namespace

SaddleConstruction construct_saddle(const Vector& sigma, const LayerDims& dims, const IndexSet& fitted,
                                    const SaddleOptions& opts) {
  if (sigma.size() != dims.d_y()) throw Error(ErrorKind::ShapeMismatch, "S_Y size differs from d_y");
  for (Index d : dims.hidden()) {
    if (d < dims.d_y()) throw Error(ErrorKind::DimensionOrder, "hidden widths must be at least d_y");
  }
  if (dims.d_x() < dims.d_y()) throw Error(ErrorKind::DimensionOrder, "d_x must be at least d_y");
  check_subset(fitted, dims.d_y());
  return dims.H() == 1 ? construct_shallow(sigma, dims, fitted, opts) : construct_deep(sigma, dims, fitted, opts);
}

namespace {

void check_stratum_args(Index r, const LayerDims& dims) {
  if (dims.H() != 1) throw Error(ErrorKind::OutOfRange, "stratum dimension is defined for H = 1 only");
  if (r < 0 || r >= dims.d_y()) {
    throw Error(ErrorKind::OutOfRange, "rank " + std::to_string(r) + " outside 0.." + std::to_string(dims.d_y() - 1));
  }
}

}  // namespace

Index stratum_dimension(Index r, const LayerDims& dims) {
  check_stratum_args(r, dims);
  const Index d1 = dims.width(1);
  return r * (2 * d1 - r) + (d1 - r) * (dims.d_x() - dims.d_y());
}

Index printed_stratum_dimension(Index r, const LayerDims& dims) {
  check_stratum_args(r, dims);
  const Index d1 = dims.width(1);
  const Index dy = dims.d_y();
  return r * d1 + (dy - r) * r + (dy - r) * (dims.d_x() - dy);
}

double kernel_identity_angle(const WeightTuple& w, double rank_rel_tol) {
  const Index d_y = w.layer(w.H() + 1).rows();
  const Matrix r = pi_product(w, 2, w.H() + 1);
  const Matrix rw11 = r * w.layer(1).leftCols(d_y);
  if (r.norm() == 0.0) return 0.0;
  return max_principal_angle(kernel_basis(r.transpose(), rank_rel_tol), kernel_basis(rw11, rank_rel_tol));
}

IndexSet parse_subset(const std::string& text, int d_y) {
  std::string body;
  for (char ch : text) {
    if (ch != '{' && ch != '}' && ch != ' ') body.push_back(ch);
  }
  IndexSet out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad subset element '" + item + "'");
    }
    if (used != item.size()) throw Error(ErrorKind::ParseError, "bad subset element '" + item + "'");
    if (value < 1 || value > d_y) {
      throw Error(ErrorKind::IndexOutOfRange, "subset element " + item + " outside 1.." + std::to_string(d_y));
    }
    out.push_back(value - 1);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string format_subset(const IndexSet& subset) {
  std::string s = "{";
  for (std::size_t k = 0; k < subset.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(subset[k] + 1);
  }
  return s + "}";
}

}  // namespace dln
