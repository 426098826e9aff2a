#include <dln/errors.hpp>
#include <dln/experiments.hpp>

#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dln;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dln_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_config(int trials) {
  ExperimentConfig cfg;
  cfg.problem.m = 6;
  cfg.problem.d_x = 4;
  cfg.problem.d_y = 2;
  cfg.problem.hidden_dims = {3};
  cfg.problem.seed = 3;
  cfg.trials = trials;
  cfg.master_seed = 42;
  return cfg;
}

}  // namespace

TEST(Config, JsonRoundTripAndHash) {
  ExperimentConfig cfg = small_config(7);
  cfg.init_scale = 0.3;
  cfg.integrator.method = IntegrationMethod::Rk4;
  cfg.integrator.step = 1e-2;
  cfg.classify.fitted_rel_tol = 1e-4;
  const ExperimentConfig back = config_from_json(Json::parse(config_to_json(cfg).dump()));
  EXPECT_EQ(back.trials, 7);
  EXPECT_EQ(back.init_scale, 0.3);
  EXPECT_EQ(back.integrator.method, IntegrationMethod::Rk4);
  EXPECT_EQ(back.integrator.step, 1e-2);
  EXPECT_EQ(back.classify.fitted_rel_tol, 1e-4);
  EXPECT_EQ(back.problem.hidden_dims, cfg.problem.hidden_dims);
  EXPECT_EQ(config_hash(back), config_hash(cfg));

  ExperimentConfig other = cfg;
  other.jobs = 8;
  other.output = "/tmp/somewhere";
  other.resume = true;
  EXPECT_EQ(config_hash(other), config_hash(cfg));
  other.master_seed = 43;
  EXPECT_NE(config_hash(other), config_hash(cfg));
}

TEST(Config, EmptyJsonGivesDefaults) {
  const ExperimentConfig cfg = config_from_json(Json::object());
  EXPECT_EQ(cfg.trials, 1);
  EXPECT_EQ(cfg.init, InitKind::Gaussian);
  EXPECT_EQ(cfg.integrator.method, IntegrationMethod::Rk45);
}

TEST(Config, Validation) {
  ExperimentConfig cfg = small_config(0);
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config(1);
  cfg.init = InitKind::Fixed;
  try {
    cfg.validate();
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigInvalid);
  }
  EXPECT_THROW(config_from_json(Json::parse(R"({"init": "uniform"})")), Error);
}

TEST(Ovf, SmallShallowCampaignReachesGlobalMinima) {
  const CampaignResult res = run_ovf(small_config(20));
  ASSERT_EQ(res.records.size(), 20u);
  EXPECT_EQ(res.kind, "ovf");
  EXPECT_DOUBLE_EQ(res.global_fraction(), 1.0);
  int total = 0;
  for (const auto& [idx, count] : res.stratum_counts()) total += count;
  EXPECT_EQ(total, 20);
  for (std::size_t k = 0; k < res.records.size(); ++k) {
    const TrialRecord& r = res.records[k];
    EXPECT_EQ(r.trial, static_cast<int>(k));
    EXPECT_EQ(r.seed, derive_seed(42, k));
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.r, 2);
    EXPECT_EQ(r.matched_index, 3);
    EXPECT_LT(r.terminal_loss, 1e-8);
    EXPECT_FALSE(r.escaped.has_value());
  }
}

TEST(Ovf, FixedOriginStaysAtRankZeroSaddle) {
  ExperimentConfig cfg = small_config(1);
  cfg.init = InitKind::Fixed;
  cfg.initial_weights = WeightTuple::zeros(LayerDims(4, {3}, 2));
  const CampaignResult res = run_ovf(cfg);
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].status, "ok");
  EXPECT_EQ(res.records[0].r, 0);
  EXPECT_EQ(res.records[0].matched_index, 0);
  EXPECT_TRUE(res.records[0].fitted.empty());
  EXPECT_DOUBLE_EQ(res.global_fraction(), 0.0);
}

TEST(Ovf, FixedInitShapeMismatchIsRejected) {
  ExperimentConfig cfg = small_config(1);
  cfg.init = InitKind::Fixed;
  cfg.initial_weights = WeightTuple::zeros(LayerDims(4, {2}, 2));
  EXPECT_THROW(run_ovf(cfg), Error);
}

TEST(Ovf, HorizonTrialsAreRecordedNotThrown) {
  ExperimentConfig cfg = small_config(3);
  cfg.integrator.t_max = 0.01;
  const CampaignResult res = run_ovf(cfg);
  for (const auto& r : res.records) {
    EXPECT_EQ(r.status, "NonConverged");
    EXPECT_EQ(r.matched_index, -1);
    EXPECT_EQ(r.stop_reason, "horizon");
  }
  EXPECT_EQ(res.stratum_counts().at(-1), 3);
}

TEST(Ovf, DeepCampaignReportsFraction) {
  ExperimentConfig cfg = small_config(10);
  cfg.problem.hidden_dims = {3, 3};
  const CampaignResult res = run_ovf(cfg);
  ASSERT_EQ(res.records.size(), 10u);
  EXPECT_GE(res.global_fraction(), 0.0);
  EXPECT_LE(res.global_fraction(), 1.0);
}

TEST(Ovf, ReproducibleAcrossRunsAndThreadCounts) {
  ExperimentConfig cfg = small_config(12);
  cfg.problem.hidden_dims = {3, 3};
  const CampaignResult a = run_ovf(cfg);
  cfg.jobs = 4;
  const CampaignResult b = run_ovf(cfg);
  ASSERT_EQ(a.records.size(), b.records.size());
  EXPECT_EQ(a.config_hash, b.config_hash);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].seed, b.records[k].seed);
    EXPECT_EQ(a.records[k].matched_index, b.records[k].matched_index);
    EXPECT_EQ(a.records[k].r, b.records[k].r);
    EXPECT_EQ(a.records[k].fitted, b.records[k].fitted);
    EXPECT_EQ(a.records[k].terminal_loss, b.records[k].terminal_loss);
  }
}

TEST(Ovf, PersistAndResume) {
  const fs::path dir = scratch_dir("resume");
  ExperimentConfig cfg = small_config(4);
  cfg.output = (dir / "camp").string();
  const CampaignResult first = run_ovf(cfg);
  EXPECT_TRUE(fs::exists(dir / "camp.json"));
  EXPECT_TRUE(fs::exists(dir / "camp.csv"));
  const std::string csv = read_text_file(dir / "camp.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "trial,seed,terminal_loss,matched_index,r,escaped,runtime_s");

  const CampaignResult loaded = read_campaign(dir / "camp.json");
  EXPECT_EQ(loaded.config_hash, first.config_hash);
  ASSERT_EQ(loaded.records.size(), 4u);
  EXPECT_EQ(loaded.records[2].terminal_loss, first.records[2].terminal_loss);

  // An interrupted campaign: only the first two records were stored.
  CampaignResult partial = first;
  partial.records.resize(2);
  write_campaign(partial, cfg.output);
  cfg.resume = true;
  const CampaignResult resumed = run_ovf(cfg);
  ASSERT_EQ(resumed.records.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(resumed.records[k].trial, static_cast<int>(k));
    EXPECT_EQ(resumed.records[k].terminal_loss, first.records[k].terminal_loss);
  }
  EXPECT_EQ(resumed.records[0].runtime_s, first.records[0].runtime_s);
  EXPECT_EQ(read_campaign(dir / "camp.json").records.size(), 4u);
}

TEST(Ovf, ResumeSkipsExistingTrials) {
  const fs::path dir = scratch_dir("skip");
  ExperimentConfig cfg = small_config(3);
  cfg.output = (dir / "camp").string();
  const CampaignResult first = run_ovf(cfg);
  cfg.resume = true;
  const CampaignResult again = run_ovf(cfg);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(again.records[k].runtime_s, first.records[k].runtime_s);
}

TEST(Ovf, ResumeWithDifferentConfigIsRejected) {
  const fs::path dir = scratch_dir("mismatch");
  ExperimentConfig cfg = small_config(2);
  cfg.output = (dir / "camp").string();
  run_ovf(cfg);
  cfg.resume = true;
  cfg.master_seed = 99;
  try {
    run_ovf(cfg);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigInvalid);
  }
}

TEST(Escape, ZeroEpsilonStaysAtSaddle) {
  const CampaignResult res = run_saddle_escape(small_config(3), {0}, 0.0);
  EXPECT_EQ(res.kind, "escape");
  ASSERT_TRUE(res.escape_fraction().has_value());
  EXPECT_DOUBLE_EQ(*res.escape_fraction(), 0.0);
  for (const auto& r : res.records) {
    EXPECT_NEAR(r.terminal_loss, res.saddle_loss, 1e-12);
    EXPECT_EQ(r.r, 1);
  }
}

TEST(Escape, SmallAmbientPerturbationsEscape) {
  const ResolvedProblem p = resolve_problem(small_config(1).problem);
  for (const IndexSet& s : {IndexSet{}, IndexSet{0}, IndexSet{1}}) {
    const CampaignResult res = run_saddle_escape(small_config(10), p, s, 1e-3);
    ASSERT_TRUE(res.escape_fraction().has_value());
    EXPECT_DOUBLE_EQ(*res.escape_fraction(), 1.0);
    const std::size_t idx = p.table.index_of_fitted(s);
    EXPECT_NEAR(res.saddle_loss, p.table.entries[idx].value, 1e-10);
    EXPECT_NEAR(res.escape_threshold,
                p.table.entries[idx].value - 0.5 * (p.table.entries[idx].value - p.table.entries[idx + 1].value), 1e-10);
  }
}

TEST(Escape, TangentPerturbationStaysNearStratumOnShortHorizon) {
  ExperimentConfig cfg = small_config(5);
  cfg.integrator.t_max = 2.0;
  const CampaignResult res = run_saddle_escape(cfg, {0}, 1e-3, Perturbation::Tangent);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.escaped.has_value());
    EXPECT_FALSE(*r.escaped);
    EXPECT_NEAR(r.terminal_loss, res.saddle_loss, 1e-4);
  }
}

TEST(Escape, SubsetTooLarge) {
  EXPECT_THROW(run_saddle_escape(small_config(1), {0, 1}, 1e-3), Error);
}

TEST(LeastSquares, ExactGlobalFitMatches) {
  Rng rng(91);
  const RawProblem raw{gaussian_matrix(4, 8, 1.0, rng), gaussian_matrix(2, 8, 1.0, rng)};
  const ReducedProblem red = reduce_problem(raw, {3});
  Matrix w1 = Matrix::Zero(3, 4);
  w1(0, 0) = red.sigma(0);
  w1(1, 1) = red.sigma(1);
  Matrix w2 = Matrix::Zero(2, 3);
  w2(0, 0) = 1.0;
  w2(1, 1) = 1.0;
  EXPECT_LE(compare_least_squares(raw, WeightTuple({w1, w2}), red), 1e-8);
}

TEST(LeastSquares, IdentityDataConvergedTrial) {
  Matrix y = Matrix::Zero(2, 2);
  y(0, 0) = 3.0;
  y(1, 1) = 1.0;
  const RawProblem raw{Matrix::Identity(2, 2), y};
  const ReducedProblem red = reduce_problem(raw, {2});
  Rng rng(92);
  const Trajectory traj = integrate(fixture::random_weights(red.dims, rng, 0.5), red.sigma, IntegratorConfig{});
  EXPECT_LE(compare_least_squares(raw, traj.terminal, red), 1e-6);
  const WeightTuple back = to_raw_coordinates(traj.terminal, red);
  EXPECT_LE((oracle::end_to_end(back) - y).norm(), 1e-6);
}

TEST(LeastSquares, ConvergedDeepTrialsMatch) {
  Rng rng(93);
  const RawProblem raw{gaussian_matrix(4, 9, 1.0, rng), gaussian_matrix(2, 9, 1.0, rng)};
  for (std::vector<Index> hidden : {std::vector<Index>{3}, std::vector<Index>{3, 3}, std::vector<Index>{2, 3, 2}}) {
    const ReducedProblem red = reduce_problem(raw, hidden);
    const Trajectory traj = integrate(fixture::random_weights(red.dims, rng, 0.6), red.sigma, IntegratorConfig{});
    if (traj.losses.back() > 1e-8) continue;
    EXPECT_LE(compare_least_squares(raw, traj.terminal, red), 1e-6);
  }
}

TEST(LeastSquares, SaddleIsNotGlobal) {
  Rng rng(94);
  const RawProblem raw{gaussian_matrix(4, 8, 1.0, rng), gaussian_matrix(2, 8, 1.0, rng)};
  const ReducedProblem red = reduce_problem(raw, {3});
  const SaddleConstruction sc = construct_saddle(red.sigma, red.dims, {0});
  try {
    compare_least_squares(raw, sc.weights, red);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotGlobalMinimum);
  }
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(5, 2, [](int i) {
                 if (i == 3) throw Error(ErrorKind::NonConverged, "x");
               }),
               Error);
}

TEST(Build, IdentifierNamesTool) { EXPECT_EQ(build_identifier().rfind("dlnlab ", 0), 0u); }
