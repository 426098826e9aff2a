#pragma once

#include <dln/linalg.hpp>
#include <dln/network.hpp>

#include <algorithm>
#include <random>
#include <vector>

namespace fixture {

using dln::Index;
using dln::LayerDims;
using dln::Rng;
using dln::Vector;
using dln::WeightTuple;

/// Random architecture with d_x >= d_y, hidden widths >= d_y, H in [1, max_h].
inline LayerDims random_dims(Rng& rng, int max_h = 3, Index max_width = 5) {
  std::uniform_int_distribution<Index> dy_dist(1, 3);
  std::uniform_int_distribution<int> h_dist(1, max_h);
  const Index d_y = dy_dist(rng);
  std::uniform_int_distribution<Index> wide(d_y, std::max(d_y, max_width));
  const int H = h_dist(rng);
  std::vector<Index> hidden;
  for (int j = 0; j < H; ++j) hidden.push_back(wide(rng));
  return LayerDims(wide(rng), hidden, d_y);
}

inline WeightTuple random_weights(const LayerDims& dims, Rng& rng, double scale = 1.0) {
  std::vector<double> scales(static_cast<std::size_t>(dims.H() + 1), scale);
  return WeightTuple::gaussian(dims, scales, rng);
}

/// Strictly decreasing positive singular values with generic separation.
inline Vector random_sigma(Index d_y, Rng& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::vector<double> s;
  for (Index i = 0; i < d_y; ++i) s.push_back(u(rng));
  std::sort(s.begin(), s.end(), std::greater<>());
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i - 1] - s[i] < 0.05) s[i] = s[i - 1] - 0.05 - 0.1 * u(rng);
  }
  Vector v(d_y);
  for (Index i = 0; i < d_y; ++i) v(i) = std::abs(s[static_cast<std::size_t>(i)]);
  return v;
}

inline Vector sigma_of(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

}  // namespace fixture
