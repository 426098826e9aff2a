#include <dln/errors.hpp>
#include <dln/flow.hpp>
#include <dln/landscape.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dln;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no dln::Error thrown";
  return ErrorKind::ParseError;
}

std::vector<IndexSet> all_proper_subsets(int d_y) {
  std::vector<IndexSet> out;
  for (std::uint32_t mask = 0; mask < (1u << d_y); ++mask) {
    if (std::popcount(mask) == d_y) continue;
    IndexSet s;
    for (int i = 0; i < d_y; ++i)
      if (mask & (1u << i)) s.push_back(i);
    out.push_back(s);
  }
  return out;
}

double unfitted_halfsum(const Vector& sigma, const IndexSet& fitted) {
  double v = 0.0;
  for (Index i = 0; i < sigma.size(); ++i)
    if (std::find(fitted.begin(), fitted.end(), static_cast<int>(i)) == fitted.end()) v += 0.5 * sigma(i) * sigma(i);
  return v;
}

}  // namespace

TEST(CriticalValues, TwoByTwoTable) {
  const CriticalValueTable t = critical_values(fixture::sigma_of({2.0, 1.0}));
  ASSERT_EQ(t.size(), 4u);
  const std::vector<double> values{2.5, 2.0, 0.5, 0.0};
  const std::vector<IndexSet> subsets{{0, 1}, {0}, {1}, {}};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(t.entries[k].value, values[k]);
    EXPECT_EQ(t.entries[k].subset, subsets[k]);
  }
  EXPECT_EQ(t.entries[1].fitted(2), IndexSet{1});
  EXPECT_EQ(t.index_of({1}), 2u);
  EXPECT_EQ(t.index_of_fitted({}), 0u);
  EXPECT_EQ(t.index_of_fitted({0, 1}), 3u);
  EXPECT_DOUBLE_EQ(t.head(), 2.5);
}

TEST(CriticalValues, SingleValue) {
  const CriticalValueTable t = critical_values(fixture::sigma_of({3.0}));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t.entries[0].value, 4.5);
  EXPECT_DOUBLE_EQ(t.entries[1].value, 0.0);
}

TEST(CriticalValues, CollisionIsDegenerate) {
  EXPECT_EQ(kind_of([] { critical_values(fixture::sigma_of({std::sqrt(5.0), 2.0, 1.0})); }),
            ErrorKind::DegenerateSpectrum);
}

TEST(CriticalValues, MatchesBruteForceEnumeration) {
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> dy(1, 4);
    const Vector sigma = fixture::random_sigma(dy(rng), rng);
    const CriticalValueTable t = critical_values(sigma);
    const auto brute = oracle::subset_halfsums(sigma);
    ASSERT_EQ(t.size(), brute.size());
    for (std::size_t k = 0; k < brute.size(); ++k) {
      EXPECT_EQ(t.entries[k].value, brute[k].first);
      EXPECT_EQ(t.entries[k].subset, brute[k].second);
    }
    EXPECT_DOUBLE_EQ(t.head(), 0.5 * sigma.squaredNorm());
    EXPECT_EQ(t.entries.back().value, 0.0);
  }
}

TEST(CriticalConditions, HoldAtOriginAndGlobalFit) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const CriticalConditions zero = verify_critical_conditions(WeightTuple::zeros(LayerDims(4, {3}, 2)), sigma);
  EXPECT_EQ(zero.transpose_fit, 0.0);
  EXPECT_EQ(zero.tail, 0.0);
  EXPECT_EQ(zero.symmetric, 0.0);
  EXPECT_EQ(zero.grad_norm, 0.0);

  Matrix w1 = Matrix::Zero(3, 4);
  w1(0, 0) = 2.0;
  w1(1, 1) = 1.0;
  Matrix w2 = Matrix::Zero(2, 3);
  w2(0, 0) = 1.0;
  w2(1, 1) = 1.0;
  EXPECT_TRUE(verify_critical_conditions(WeightTuple({w1, w2}), sigma).holds(1e-15));
}

TEST(CriticalConditions, HoldAtConvergedTerminal) {
  Rng rng(52);
  const LayerDims dims(4, {3, 3}, 2);
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const WeightTuple w0 = fixture::random_weights(dims, rng, 0.5);
  const Trajectory traj = integrate(w0, sigma, IntegratorConfig{});
  ASSERT_EQ(traj.stop_reason, StopReason::Converged);
  EXPECT_TRUE(verify_critical_conditions(traj.terminal, sigma).holds(1e-6));
}

TEST(CriticalConditions, FailAwayFromCriticalPoints) {
  Rng rng(53);
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const WeightTuple w = fixture::random_weights(LayerDims(4, {3}, 2), rng);
  EXPECT_FALSE(verify_critical_conditions(w, sigma).holds(1e-3));
}

TEST(Classify, OriginIsRankZeroSaddle) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const CriticalValueTable t = critical_values(sigma);
  const CriticalPointReport rep = classify_limit(WeightTuple::zeros(LayerDims(4, {3}, 2)), sigma, t);
  EXPECT_EQ(rep.r, 0);
  EXPECT_TRUE(rep.fitted_subset.empty());
  EXPECT_DOUBLE_EQ(rep.loss, 2.5);
  EXPECT_EQ(rep.matched_index, 0u);
  EXPECT_TRUE(rep.consistent);
  EXPECT_FALSE(rep.global_minimum());
}

TEST(Classify, ConvergedRandomTrialIsGlobal) {
  Rng rng(54);
  const LayerDims dims(4, {3}, 2);
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const CriticalValueTable t = critical_values(sigma);
  const Trajectory traj = integrate(fixture::random_weights(dims, rng, 0.5), sigma, IntegratorConfig{});
  const CriticalPointReport rep = classify_limit(traj.terminal, sigma, t);
  EXPECT_EQ(rep.r, 2);
  EXPECT_EQ(rep.fitted_subset, (IndexSet{0, 1}));
  EXPECT_LT(rep.loss, 1e-12);
  EXPECT_TRUE(rep.global_minimum());
  EXPECT_GE(rep.r_Z, rep.r);
}

TEST(Classify, RejectsNonCriticalPoint) {
  Rng rng(55);
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const WeightTuple w = fixture::random_weights(LayerDims(4, {3}, 2), rng);
  EXPECT_EQ(kind_of([&] { classify_limit(w, sigma, critical_values(sigma)); }), ErrorKind::NotCritical);
}

TEST(Classify, LooseMatchToleranceIsAmbiguous) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  ClassifyOptions opts;
  opts.match_rel_tol = 0.5;
  EXPECT_EQ(kind_of([&] {
              classify_limit(WeightTuple::zeros(LayerDims(4, {3}, 2)), sigma, critical_values(sigma), opts);
            }),
            ErrorKind::AmbiguousMatch);
}

TEST(Saddle, FitFirstValue) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const LayerDims dims(4, {3}, 2);
  const SaddleConstruction s = construct_saddle(sigma, dims, {0}, {.seed = 7});
  EXPECT_NEAR(oracle::loss(s.weights, sigma), 0.5, 1e-12);
  EXPECT_LT(gradient(s.weights, sigma).norm(), 1e-12);
  const CriticalPointReport rep = classify_limit(s.weights, sigma, critical_values(sigma));
  EXPECT_EQ(rep.r, 1);
  EXPECT_EQ(rep.fitted_subset, IndexSet{0});
  EXPECT_TRUE(rep.consistent);
  EXPECT_EQ(rep.matched_index, 2u);
}

TEST(Saddle, FitSecondValue) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const LayerDims dims(4, {3}, 2);
  const SaddleConstruction s = construct_saddle(sigma, dims, {1}, {.seed = 8});
  EXPECT_NEAR(oracle::loss(s.weights, sigma), 2.0, 1e-12);
  EXPECT_LT(gradient(s.weights, sigma).norm(), 1e-12);
  const CriticalPointReport rep = classify_limit(s.weights, sigma, critical_values(sigma));
  EXPECT_EQ(rep.r, 1);
  EXPECT_EQ(rep.fitted_subset, IndexSet{1});
  EXPECT_EQ(rep.matched_index, 1u);
}

TEST(Saddle, EmptySubsetWithZeroBlocksIsOrigin) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const SaddleConstruction s = construct_saddle(sigma, LayerDims(4, {3}, 2), {}, {.seed = 1, .zero_free_blocks = true});
  EXPECT_EQ(s.weights.norm(), 0.0);
  const SaddleConstruction t = construct_saddle(sigma, LayerDims(4, {3}, 2), {}, {.seed = 1});
  EXPECT_GT(t.weights.norm(), 0.0);
  EXPECT_LT(gradient(t.weights, sigma).norm(), 1e-12);
  EXPECT_NEAR(oracle::loss(t.weights, sigma), 2.5, 1e-12);
}

TEST(Saddle, BlockStructureOfShallowConstruction) {
  const Vector sigma = fixture::sigma_of({3.0, 2.0, 1.0});
  const LayerDims dims(6, {4}, 3);
  const SaddleConstruction s = construct_saddle(sigma, dims, {0, 2}, {.seed = 3});
  EXPECT_EQ(s.r(), 2);
  EXPECT_EQ(s.A.rows(), 2);
  EXPECT_EQ(s.B2.rows(), 2);
  EXPECT_EQ(s.C2.cols(), 3);
  EXPECT_LE((s.V.transpose() * s.V - Matrix::Identity(4, 4)).norm(), 1e-12);
  // The unfitted output row of W_2 is zero.
  EXPECT_EQ(s.weights.layer(2).row(1).norm(), 0.0);
  // W_2 W_{1,1} reproduces D on the fitted coordinates.
  const Matrix p = oracle::matmul(s.weights.layer(2), s.weights.layer(1).leftCols(3));
  EXPECT_NEAR(p(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(p(2, 2), 1.0, 1e-12);
  EXPECT_NEAR(p(0, 2), 0.0, 1e-12);
}

TEST(Saddle, EveryShallowSubsetIsRecovered) {
  Rng rng(56);
  for (const LayerDims& dims : {LayerDims(4, {3}, 2), LayerDims(6, {4}, 3), LayerDims(5, {5}, 3)}) {
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    const CriticalValueTable t = critical_values(sigma);
    for (const IndexSet& s : all_proper_subsets(static_cast<int>(dims.d_y()))) {
      const SaddleConstruction sc = construct_saddle(sigma, dims, s, {.seed = 11});
      EXPECT_TRUE(verify_critical_conditions(sc.weights, sigma).holds(1e-10));
      const CriticalPointReport rep = classify_limit(sc.weights, sigma, t);
      EXPECT_TRUE(rep.consistent);
      EXPECT_EQ(rep.fitted_subset, s);
      EXPECT_EQ(rep.r, static_cast<Index>(s.size()));
      EXPECT_NEAR(rep.loss, unfitted_halfsum(sigma, s), 1e-10);
      EXPECT_LT(kernel_identity_angle(sc.weights), 1e-8);
    }
  }
}

TEST(Saddle, DeepConstructionsAreCritical) {
  Rng rng(57);
  for (const LayerDims& dims : {LayerDims(4, {3, 3}, 2), LayerDims(5, {4, 3, 4}, 3), LayerDims(4, {2, 2}, 2)}) {
    const Vector sigma = fixture::random_sigma(dims.d_y(), rng);
    const CriticalValueTable t = critical_values(sigma);
    for (const IndexSet& s : all_proper_subsets(static_cast<int>(dims.d_y()))) {
      const SaddleConstruction sc = construct_saddle(sigma, dims, s, {.seed = 12});
      EXPECT_EQ(sc.H, dims.H());
      EXPECT_LT(gradient(sc.weights, sigma).norm(), 1e-10);
      EXPECT_TRUE(verify_critical_conditions(sc.weights, sigma).holds(1e-10));
      const CriticalPointReport rep = classify_limit(sc.weights, sigma, t);
      EXPECT_TRUE(rep.consistent);
      EXPECT_EQ(rep.fitted_subset, s);
      EXPECT_NEAR(rep.loss, unfitted_halfsum(sigma, s), 1e-10);
      EXPECT_GE(rep.r_Z, rep.r);
    }
  }
}

TEST(Saddle, DeterministicPerSeed) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const LayerDims dims(4, {3}, 2);
  const SaddleConstruction a = construct_saddle(sigma, dims, {0}, {.seed = 5});
  const SaddleConstruction b = construct_saddle(sigma, dims, {0}, {.seed = 5});
  const SaddleConstruction c = construct_saddle(sigma, dims, {0}, {.seed = 6});
  EXPECT_EQ((a.weights - b.weights).norm(), 0.0);
  EXPECT_GT((a.weights - c.weights).norm(), 0.0);
}

TEST(Saddle, Errors) {
  const Vector sigma = fixture::sigma_of({2.0, 1.0});
  const LayerDims dims(4, {3}, 2);
  EXPECT_EQ(kind_of([&] { construct_saddle(sigma, dims, {0, 1}); }), ErrorKind::SubsetTooLarge);
  EXPECT_EQ(kind_of([&] { construct_saddle(sigma, dims, {2}); }), ErrorKind::IndexOutOfRange);
}

TEST(StratumDimension, ShallowCounts) {
  const LayerDims dims(4, {3}, 2);
  EXPECT_EQ(stratum_dimension(0, dims), 6);
  EXPECT_EQ(stratum_dimension(1, dims), 9);
  EXPECT_EQ(printed_stratum_dimension(0, dims), 4);
  EXPECT_EQ(printed_stratum_dimension(1, dims), 6);
  EXPECT_EQ(kind_of([&] { stratum_dimension(2, dims); }), ErrorKind::OutOfRange);
  EXPECT_EQ(kind_of([&] { stratum_dimension(0, LayerDims(4, {3, 3}, 2)); }), ErrorKind::OutOfRange);
}

TEST(StratumDimension, OriginStratumCountsFreeTailEntries) {
  // At r = 0 only W_{1,2} is free: d_1 (d_x - d_y) entries.
  for (Index d1 : {2, 3, 5})
    for (Index dx : {3, 4, 6}) EXPECT_EQ(stratum_dimension(0, LayerDims(dx, {d1}, 2)), d1 * (dx - 2));
}

TEST(Subsets, ParseAndFormat) {
  EXPECT_EQ(parse_subset("{1,3}", 3), (IndexSet{0, 2}));
  EXPECT_EQ(parse_subset("2", 3), IndexSet{1});
  EXPECT_EQ(parse_subset("{}", 3), IndexSet{});
  EXPECT_EQ(parse_subset("{3, 1}", 3), (IndexSet{0, 2}));
  EXPECT_EQ(format_subset({0, 2}), "{1,3}");
  EXPECT_EQ(format_subset({}), "{}");
  EXPECT_EQ(kind_of([] { parse_subset("{4}", 3); }), ErrorKind::IndexOutOfRange);
  EXPECT_EQ(kind_of([] { parse_subset("{a}", 3); }), ErrorKind::ParseError);
}
