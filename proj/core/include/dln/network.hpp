#pragma once

#include "dln/linalg.hpp"

#include <span>
#include <vector>

namespace dln {

/// Layer widths of a network with H hidden layers: d_0 = d_x (input),
/// d_1..d_H (hidden), d_{H+1} = d_y (output). Layer j maps d_{j-1} -> d_j.
class LayerDims {
 public:
  LayerDims() = default;
  LayerDims(Index d_x, std::vector<Index> hidden, Index d_y);

  /// From a chain listed output-to-input: (d_y, d_H, ..., d_1, d_x).
  static LayerDims from_output_chain(std::span<const Index> chain);

  int H() const { return static_cast<int>(widths_.size()) - 2; }
  Index d_x() const { return widths_.front(); }
  Index d_y() const { return widths_.back(); }
  Index width(int j) const { return widths_.at(static_cast<std::size_t>(j)); }
  std::vector<Index> hidden() const { return {widths_.begin() + 1, widths_.end() - 1}; }
  const std::vector<Index>& widths() const { return widths_; }

  /// Number of scalar weights, sum_j d_j * d_{j-1}.
  Index parameter_count() const;

  /// True when d_1 >= d_2 >= ... >= d_H.
  bool pyramidal() const;

  bool operator==(const LayerDims&) const = default;

 private:
  std::vector<Index> widths_;
};

/// An (H+1)-tuple of layer matrices (W_1, ..., W_{H+1}), W_j of shape
/// d_j x d_{j-1}. The same shape chain serves for gradients and for
/// variations (directions) around a point.
class LayerTuple {
 public:
  LayerTuple() = default;
  explicit LayerTuple(std::vector<Matrix> layers);

  static LayerTuple zeros(const LayerDims& dims);
  static LayerTuple gaussian(const LayerDims& dims, std::span<const double> scales, Rng& rng);

  /// Rebuilds a tuple from the flat vector produced by flatten().
  static LayerTuple unflatten(const LayerDims& dims, std::span<const double> flat);

  int H() const { return static_cast<int>(layers_.size()) - 1; }
  LayerDims dims() const;

  /// 1-based access: layer(1) = W_1, layer(H+1) = W_{H+1}.
  const Matrix& layer(int j) const;
  Matrix& layer(int j);

  const std::vector<Matrix>& layers() const { return layers_; }

  /// Layer-major, column-major within each layer, W_1 first. Since W_1's
  /// first d_y columns form W_{1,1}, this is also the order
  /// (W_{1,1}, W_{1,2}, W_2, ..., W_{H+1}).
  std::vector<double> flatten() const;
  Index size() const;

  double squared_norm() const;
  double norm() const;
  double dot(const LayerTuple& other) const;
  bool all_finite() const;
  bool same_shape(const LayerTuple& other) const;

  LayerTuple& operator+=(const LayerTuple& other);
  LayerTuple& operator-=(const LayerTuple& other);
  LayerTuple& operator*=(double s);
  friend LayerTuple operator+(LayerTuple a, const LayerTuple& b) { return a += b; }
  friend LayerTuple operator-(LayerTuple a, const LayerTuple& b) { return a -= b; }
  friend LayerTuple operator*(double s, LayerTuple a) { return a *= s; }

 private:
  std::vector<Matrix> layers_;
};

using WeightTuple = LayerTuple;
using GradientTuple = LayerTuple;
using Direction = LayerTuple;

/// Sigma_Y = [S_Y | 0] of shape d_y x d_x.
Matrix target_matrix(const Vector& sigma, Index d_x);

/// (Pi W)_j^k = W_k ... W_j for k >= j, identity of size d_{j-1} otherwise.
/// Accepts 1 <= j <= H+2 and 0 <= k <= H+1 so boundary products in the
/// gradient formula are well formed.
Matrix pi_product(const WeightTuple& w, int j, int k);

/// M = Sigma_Y - (Pi W)_1^{H+1}.
Matrix residual(const WeightTuple& w, const Vector& sigma);

/// L(W) = 1/2 ||M||_F^2.
double loss(const WeightTuple& w, const Vector& sigma);

/// grad_j L = -[(Pi W)_{j+1}^{H+1}]^T M [(Pi W)_1^{j-1}]^T.
GradientTuple gradient(const WeightTuple& w, const Vector& sigma);

struct LossAndGradient {
  double loss = 0.0;
  GradientTuple gradient;
};

LossAndGradient loss_and_gradient(const WeightTuple& w, const Vector& sigma);

/// Orthogonal/scaling symmetry of the loss:
/// (mu_{H+1} W_{H+1} U_H, mu_H U_H^T W_H U_{H-1}, ..., mu_1 U_1^T W_1).
/// `rotations` holds U_1..U_H (U_j of size d_j), `scales` mu_1..mu_{H+1}.
WeightTuple apply_group_action(const WeightTuple& w, std::span<const Matrix> rotations,
                               std::span<const double> scales);

/// Throws ShapeMismatch unless w's chain ends in d_y = sigma.size() and d_x >= d_y.
void check_shapes(const WeightTuple& w, const Vector& sigma);

}  // namespace dln
