#include <dln/errors.hpp>
#include <dln/network.hpp>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dln;

TEST(LayerDims, OutputChainOrder) {
  const std::vector<Index> chain{2, 3, 4};
  const LayerDims d = LayerDims::from_output_chain(chain);
  EXPECT_EQ(d.d_y(), 2);
  EXPECT_EQ(d.width(1), 3);
  EXPECT_EQ(d.d_x(), 4);
  EXPECT_EQ(d.H(), 1);
  EXPECT_EQ(d.parameter_count(), 3 * 4 + 2 * 3);

  const std::vector<Index> deep{2, 3, 5, 4};
  const LayerDims e = LayerDims::from_output_chain(deep);
  EXPECT_EQ(e.H(), 2);
  EXPECT_EQ(e.width(1), 5);
  EXPECT_EQ(e.width(2), 3);
}

TEST(PiProduct, EmptyRangeIsIdentity) {
  Rng rng(1);
  const LayerDims dims(4, {3, 5}, 2);
  const WeightTuple w = fixture::random_weights(dims, rng);
  for (int j = 1; j <= 3; ++j) {
    const Matrix id = pi_product(w, j, j - 1);
    EXPECT_EQ(id.rows(), dims.width(j - 1));
    EXPECT_TRUE(id.isIdentity(0.0));
  }
  EXPECT_THROW(pi_product(w, 0, 1), Error);
  EXPECT_THROW(pi_product(w, 1, 4), Error);
}

TEST(PiProduct, SmallHandCase) {
  Matrix w1(2, 1), w2(1, 2);
  w1 << 3, 4;
  w2 << 1, 2;
  const WeightTuple w({w1, w2});
  EXPECT_DOUBLE_EQ(pi_product(w, 1, 2)(0, 0), 11.0);
}

TEST(PiProduct, Associativity) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const LayerDims dims = fixture::random_dims(rng);
    const WeightTuple w = fixture::random_weights(dims, rng);
    const Matrix full = pi_product(w, 1, dims.H() + 1);
    EXPECT_LE((full - oracle::end_to_end(w)).norm(), 1e-12 * (1.0 + full.norm()));
    for (int j = 0; j <= dims.H() + 1; ++j) {
      const Matrix split = pi_product(w, j + 1, dims.H() + 1) * pi_product(w, 1, j);
      EXPECT_LE((split - full).norm(), 1e-12 * (1.0 + full.norm()));
    }
  }
}

TEST(Residual, ZeroAndExactFit) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const LayerDims dims(3, {2}, 2);
  const WeightTuple zero = WeightTuple::zeros(dims);
  EXPECT_EQ(residual(zero, sigma), target_matrix(sigma, 3));
  EXPECT_DOUBLE_EQ(loss(zero, sigma), 2.5);

  Matrix w1 = Matrix::Zero(2, 3);
  w1(0, 0) = 2.0;
  w1(1, 1) = 1.0;
  const WeightTuple fit({w1, Matrix::Identity(2, 2)});
  EXPECT_EQ(residual(fit, sigma).norm(), 0.0);
  EXPECT_EQ(loss(fit, sigma), 0.0);
  EXPECT_EQ(gradient(fit, sigma).norm(), 0.0);
}

TEST(Residual, MatchesDirectComputation) {
  Rng rng(3);
  const Vector sigma = fixture::sigma_of({1.5, 0.5});
  const WeightTuple w = fixture::random_weights(LayerDims(3, {4}, 2), rng);
  EXPECT_LE((residual(w, sigma) - oracle::residual(w, sigma)).norm(), 1e-13);
  EXPECT_GE(loss(w, sigma), 0.0);
}

TEST(Residual, ShapeMismatch) {
  const WeightTuple w = WeightTuple::zeros(LayerDims(3, {2}, 2));
  EXPECT_THROW(residual(w, fixture::sigma_of({1.0})), Error);
}

TEST(Gradient, VanishesAtOrigin) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const LayerDims dims = fixture::random_dims(rng);
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    EXPECT_EQ(gradient(WeightTuple::zeros(dims), sigma).norm(), 0.0);
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnDeepCase) {
  Rng rng(5);
  const LayerDims dims = LayerDims::from_output_chain(std::vector<Index>{2, 3, 3, 4});
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const WeightTuple w = fixture::random_weights(dims, rng);
  const GradientTuple g = gradient(w, sigma);
  const auto fd = oracle::fd_gradient(w, sigma, 1e-5);
  for (int j = 1; j <= dims.H() + 1; ++j) {
    const double err = (g.layer(j) - fd[static_cast<std::size_t>(j - 1)]).norm();
    EXPECT_LE(err, 1e-6 * (1.0 + fd[static_cast<std::size_t>(j - 1)].norm()));
  }
}

TEST(Gradient, FiniteDifferencePropertyOverRandomCases) {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const LayerDims dims = fixture::random_dims(rng);
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    const WeightTuple w = fixture::random_weights(dims, rng);
    const LossAndGradient lg = loss_and_gradient(w, sigma);
    EXPECT_NEAR(lg.loss, oracle::loss(w, sigma), 1e-12 * (1.0 + lg.loss));
    const auto fd = oracle::fd_gradient(w, sigma, 1e-5);
    for (int j = 1; j <= dims.H() + 1; ++j) {
      const Matrix& a = lg.gradient.layer(j);
      const Matrix& b = fd[static_cast<std::size_t>(j - 1)];
      for (Index k = 0; k < a.size(); ++k) {
        const double denom = std::max({1.0, std::abs(a(k)), std::abs(b(k))});
        worst = std::max(worst, std::abs(a(k) - b(k)) / denom);
      }
    }
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Gradient, DescentDirection) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const LayerDims dims = fixture::random_dims(rng);
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    const WeightTuple w = fixture::random_weights(dims, rng);
    const GradientTuple g = gradient(w, sigma);
    const double h = 1e-4 / (1.0 + g.norm());
    EXPECT_GE(loss(w, sigma) - loss(w - h * g, sigma), 0.0);
  }
}

TEST(GroupAction, IdentityLeavesWeights) {
  Rng rng(8);
  const LayerDims dims(4, {3, 3}, 2);
  const WeightTuple w = fixture::random_weights(dims, rng);
  const std::vector<Matrix> u{Matrix::Identity(3, 3), Matrix::Identity(3, 3)};
  const std::vector<double> mu{1.0, 1.0, 1.0};
  EXPECT_EQ((apply_group_action(w, u, mu) - w).norm(), 0.0);
}

TEST(GroupAction, ScalarsCancel) {
  Rng rng(9);
  const LayerDims dims(4, {3}, 2);
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const WeightTuple w = fixture::random_weights(dims, rng);
  const std::vector<Matrix> u{Matrix::Identity(3, 3)};
  const std::vector<double> mu{2.0, 0.5};
  const WeightTuple v = apply_group_action(w, u, mu);
  EXPECT_LE((pi_product(v, 1, 2) - pi_product(w, 1, 2)).norm(), 1e-14);
  EXPECT_NEAR(loss(v, sigma), loss(w, sigma), 1e-14);
}

TEST(GroupAction, LossInvariantUnderRandomElements) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const LayerDims dims = fixture::random_dims(rng);
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    const WeightTuple w = fixture::random_weights(dims, rng);
    std::vector<Matrix> u;
    for (int j = 1; j <= dims.H(); ++j) u.push_back(random_orthogonal(dims.width(j), rng));
    std::uniform_real_distribution<double> pos(0.5, 2.0);
    std::vector<double> mu;
    double prod = 1.0;
    for (int j = 1; j <= dims.H(); ++j) {
      mu.push_back(pos(rng) * (j % 2 ? 1.0 : -1.0));
      prod *= mu.back();
    }
    mu.push_back(1.0 / prod);
    const double l = loss(w, sigma);
    EXPECT_LE(std::abs(loss(apply_group_action(w, u, mu), sigma) - l), 1e-10 * (1.0 + l));
  }
}

TEST(GroupAction, Errors) {
  const LayerDims dims(4, {3}, 2);
  const WeightTuple w = WeightTuple::zeros(dims);
  try {
    apply_group_action(w, std::vector<Matrix>{Matrix::Identity(3, 3)}, std::vector<double>{2.0, 2.0});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProductNotOne);
  }
  try {
    apply_group_action(w, std::vector<Matrix>{2.0 * Matrix::Identity(3, 3)}, std::vector<double>{1.0, 1.0});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotOrthogonal);
  }
}

TEST(WeightTuple, FlattenRoundTripAndOrder) {
  Rng rng(11);
  const LayerDims dims(4, {3}, 2);
  const WeightTuple w = fixture::random_weights(dims, rng);
  const std::vector<double> flat = w.flatten();
  ASSERT_EQ(static_cast<Index>(flat.size()), dims.parameter_count());
  // Column-major within W_1, which comes first.
  EXPECT_EQ(flat[0], w.layer(1)(0, 0));
  EXPECT_EQ(flat[1], w.layer(1)(1, 0));
  EXPECT_EQ(flat[3], w.layer(1)(0, 1));
  EXPECT_EQ(flat[12], w.layer(2)(0, 0));
  EXPECT_EQ((WeightTuple::unflatten(dims, flat) - w).norm(), 0.0);
}

TEST(WeightTuple, ShapeChainValidated) {
  EXPECT_THROW(WeightTuple({Matrix::Zero(3, 4), Matrix::Zero(2, 2)}), Error);
  EXPECT_THROW(WeightTuple({Matrix::Zero(3, 4)}), Error);
}
