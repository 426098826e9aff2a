#include "dln/network.hpp"

#include "dln/errors.hpp"

#include <cmath>
#include <string>

namespace dln {

LayerDims::LayerDims(Index d_x, std::vector<Index> hidden, Index d_y) {
  widths_.reserve(hidden.size() + 2);
  widths_.push_back(d_x);
  widths_.insert(widths_.end(), hidden.begin(), hidden.end());
  widths_.push_back(d_y);
  for (Index d : widths_) {
    if (d <= 0) throw Error(ErrorKind::DimensionOrder, "layer widths must be positive");
  }
}

LayerDims LayerDims::from_output_chain(std::span<const Index> chain) {
  if (chain.size() < 3) {
    throw Error(ErrorKind::DimensionOrder, "need at least (d_y, d_1, d_x), got " + std::to_string(chain.size()) + " widths");
  }
  std::vector<Index> hidden(chain.rbegin() + 1, chain.rend() - 1);
  return LayerDims(chain.back(), std::move(hidden), chain.front());
}

Index LayerDims::parameter_count() const {
  Index n = 0;
  for (std::size_t j = 1; j < widths_.size(); ++j) n += widths_[j] * widths_[j - 1];
  return n;
}

bool LayerDims::pyramidal() const {
  for (int j = 1; j < H(); ++j) {
    if (width(j) < width(j + 1)) return false;
  }
  return true;
}

LayerTuple::LayerTuple(std::vector<Matrix> layers) : layers_(std::move(layers)) {
  if (layers_.size() < 2) throw Error(ErrorKind::ShapeMismatch, "need at least two layers (H >= 1)");
  for (std::size_t j = 1; j < layers_.size(); ++j) {
    if (layers_[j].cols() != layers_[j - 1].rows()) {
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(j + 1) + " has " +
                                                std::to_string(layers_[j].cols()) + " columns, layer " +
                                                std::to_string(j) + " has " + std::to_string(layers_[j - 1].rows()) +
                                                " rows");
    }
  }
}

LayerTuple LayerTuple::zeros(const LayerDims& dims) {
  std::vector<Matrix> layers;
  for (int j = 1; j <= dims.H() + 1; ++j) layers.push_back(Matrix::Zero(dims.width(j), dims.width(j - 1)));
  return LayerTuple(std::move(layers));
}

LayerTuple LayerTuple::gaussian(const LayerDims& dims, std::span<const double> scales, Rng& rng) {
  if (scales.size() != static_cast<std::size_t>(dims.H() + 1)) {
    throw Error(ErrorKind::ShapeMismatch, "one scale per layer required");
  }
  std::vector<Matrix> layers;
  for (int j = 1; j <= dims.H() + 1; ++j) {
    layers.push_back(gaussian_matrix(dims.width(j), dims.width(j - 1), scales[static_cast<std::size_t>(j - 1)], rng));
  }
  return LayerTuple(std::move(layers));
}

LayerTuple LayerTuple::unflatten(const LayerDims& dims, std::span<const double> flat) {
  if (static_cast<Index>(flat.size()) != dims.parameter_count()) {
    throw Error(ErrorKind::ShapeMismatch, "flat vector length does not match the layer dimensions");
  }
  std::vector<Matrix> layers;
  std::size_t offset = 0;
  for (int j = 1; j <= dims.H() + 1; ++j) {
    const Index rows = dims.width(j);
    const Index cols = dims.width(j - 1);
    layers.push_back(Eigen::Map<const Matrix>(flat.data() + offset, rows, cols));
    offset += static_cast<std::size_t>(rows * cols);
  }
  return LayerTuple(std::move(layers));
}

LayerDims LayerTuple::dims() const {
  std::vector<Index> hidden;
  for (std::size_t j = 0; j + 1 < layers_.size(); ++j) hidden.push_back(layers_[j].rows());
  return LayerDims(layers_.front().cols(), std::move(hidden), layers_.back().rows());
}

const Matrix& LayerTuple::layer(int j) const {
  if (j < 1 || j > H() + 1) throw Error(ErrorKind::IndexOutOfRange, "layer index " + std::to_string(j));
  return layers_[static_cast<std::size_t>(j - 1)];
}

Matrix& LayerTuple::layer(int j) {
  if (j < 1 || j > H() + 1) throw Error(ErrorKind::IndexOutOfRange, "layer index " + std::to_string(j));
  return layers_[static_cast<std::size_t>(j - 1)];
}

std::vector<double> LayerTuple::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(size()));
  for (const Matrix& m : layers_) flat.insert(flat.end(), m.data(), m.data() + m.size());
  return flat;
}

Index LayerTuple::size() const {
  Index n = 0;
  for (const Matrix& m : layers_) n += m.size();
  return n;
}

double LayerTuple::squared_norm() const {
  double s = 0.0;
  for (const Matrix& m : layers_) s += m.squaredNorm();
  return s;
}

double LayerTuple::norm() const { return std::sqrt(squared_norm()); }

double LayerTuple::dot(const LayerTuple& other) const {
  if (!same_shape(other)) throw Error(ErrorKind::ShapeMismatch, "dot of tuples with different shapes");
  double s = 0.0;
  for (std::size_t j = 0; j < layers_.size(); ++j) s += frobenius_dot(layers_[j], other.layers_[j]);
  return s;
}

bool LayerTuple::all_finite() const {
  for (const Matrix& m : layers_)
    if (!m.allFinite()) return false;
  return true;
}

bool LayerTuple::same_shape(const LayerTuple& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    if (layers_[j].rows() != other.layers_[j].rows() || layers_[j].cols() != other.layers_[j].cols()) return false;
  }
  return true;
}

LayerTuple& LayerTuple::operator+=(const LayerTuple& other) {
  if (!same_shape(other)) throw Error(ErrorKind::ShapeMismatch, "sum of tuples with different shapes");
  for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j] += other.layers_[j];
  return *this;
}

LayerTuple& LayerTuple::operator-=(const LayerTuple& other) {
  if (!same_shape(other)) throw Error(ErrorKind::ShapeMismatch, "difference of tuples with different shapes");
  for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j] -= other.layers_[j];
  return *this;
}

LayerTuple& LayerTuple::operator*=(double s) {
  for (Matrix& m : layers_) m *= s;
  return *this;
}

Matrix target_matrix(const Vector& sigma, Index d_x) {
  Matrix t = Matrix::Zero(sigma.size(), d_x);
  t.leftCols(sigma.size()).diagonal() = sigma;
  return t;
}

void check_shapes(const WeightTuple& w, const Vector& sigma) {
  const Index d_y = w.layers().back().rows();
  const Index d_x = w.layers().front().cols();
  if (d_y != sigma.size() || d_x < d_y) {
    throw Error(ErrorKind::ShapeMismatch, "weights map R^" + std::to_string(d_x) + " -> R^" + std::to_string(d_y) +
                                              " but S_Y has " + std::to_string(sigma.size()) + " singular values");
  }
}

Matrix pi_product(const WeightTuple& w, int j, int k) {
  const int H = w.H();
  if (j < 1 || j > H + 2 || k < 0 || k > H + 1) {
    throw Error(ErrorKind::IndexOutOfRange, "(Pi W)_" + std::to_string(j) + "^" + std::to_string(k));
  }
  if (k < j) {
    const Index n = (j == 1) ? w.layer(1).cols() : w.layer(j - 1).rows();
    return Matrix::Identity(n, n);
  }
  Matrix p = w.layer(j);
  for (int i = j + 1; i <= k; ++i) p = w.layer(i) * p;
  return p;
}

Matrix residual(const WeightTuple& w, const Vector& sigma) {
  check_shapes(w, sigma);
  return target_matrix(sigma, w.layer(1).cols()) - pi_product(w, 1, w.H() + 1);
}

double loss(const WeightTuple& w, const Vector& sigma) { return 0.5 * residual(w, sigma).squaredNorm(); }

LossAndGradient loss_and_gradient(const WeightTuple& w, const Vector& sigma) {
  check_shapes(w, sigma);
  const int layers = w.H() + 1;
  // prefix[j] = W_j ... W_1 (prefix[0] = I), suffix[j] = W_{H+1} ... W_j (suffix[H+2] = I).
  std::vector<Matrix> prefix(static_cast<std::size_t>(layers + 1));
  prefix[0] = Matrix::Identity(w.layer(1).cols(), w.layer(1).cols());
  for (int j = 1; j <= layers; ++j) prefix[j] = w.layer(j) * prefix[j - 1];
  std::vector<Matrix> suffix(static_cast<std::size_t>(layers + 2));
  suffix[layers + 1] = Matrix::Identity(w.layer(layers).rows(), w.layer(layers).rows());
  for (int j = layers; j >= 1; --j) suffix[j] = suffix[j + 1] * w.layer(j);

  const Matrix m = target_matrix(sigma, w.layer(1).cols()) - prefix[layers];
  std::vector<Matrix> grads;
  grads.reserve(static_cast<std::size_t>(layers));
  for (int j = 1; j <= layers; ++j) grads.push_back(-(suffix[j + 1].transpose() * m * prefix[j - 1].transpose()));
  return {0.5 * m.squaredNorm(), GradientTuple(std::move(grads))};
}

GradientTuple gradient(const WeightTuple& w, const Vector& sigma) { return loss_and_gradient(w, sigma).gradient; }

WeightTuple apply_group_action(const WeightTuple& w, std::span<const Matrix> rotations,
                               std::span<const double> scales) {
  const int H = w.H();
  if (rotations.size() != static_cast<std::size_t>(H) || scales.size() != static_cast<std::size_t>(H + 1)) {
    throw Error(ErrorKind::ShapeMismatch, "group element needs H rotations and H+1 scales");
  }
  double product = 1.0;
  for (double mu : scales) {
    if (mu == 0.0) throw Error(ErrorKind::ProductNotOne, "scales must be nonzero");
    product *= mu;
  }
  if (std::abs(product - 1.0) > 1e-12) {
    throw Error(ErrorKind::ProductNotOne, "product of scales is " + std::to_string(product));
  }
  for (int j = 1; j <= H; ++j) {
    const Matrix& u = rotations[static_cast<std::size_t>(j - 1)];
    if (u.rows() != w.layer(j).rows() || u.cols() != u.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "rotation " + std::to_string(j) + " has the wrong size");
    }
    const double defect = (u.transpose() * u - Matrix::Identity(u.rows(), u.cols())).norm();
    if (defect > 1e-10) throw Error(ErrorKind::NotOrthogonal, "rotation " + std::to_string(j) + " defect " + std::to_string(defect));
  }
  std::vector<Matrix> out;
  for (int j = 1; j <= H + 1; ++j) {
    Matrix m = scales[static_cast<std::size_t>(j - 1)] * w.layer(j);
    if (j <= H) m = rotations[static_cast<std::size_t>(j - 1)].transpose() * m;
    if (j >= 2) m = m * rotations[static_cast<std::size_t>(j - 2)];
    out.push_back(std::move(m));
  }
  return WeightTuple(std::move(out));
}

}  // namespace dln
