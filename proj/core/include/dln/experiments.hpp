#pragma once

#include "dln/flow.hpp"
#include "dln/io.hpp"
#include "dln/landscape.hpp"
#include "dln/network.hpp"
#include "dln/reduction.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dln {

enum class InitKind {
  Gaussian,  ///< i.i.d. N(0, scale^2) per layer
  Fixed,     ///< every trial starts from `initial_weights`
};

/// Where the problem comes from: a file, or a seeded draw.
struct ProblemSource {
  std::string path;  ///< problem JSON; when empty the fields below are used
  Index m = 6;
  Index d_x = 4;
  Index d_y = 2;
  std::vector<Index> hidden_dims{3};
  double scale = 1.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  ProblemSource problem;
  int trials = 1;
  InitKind init = InitKind::Gaussian;
  /// Per-layer Gaussian scale; 0 selects 1/sqrt(fan-in).
  double init_scale = 0.0;
  std::optional<WeightTuple> initial_weights;
  IntegratorConfig integrator;
  ClassifyOptions classify;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  /// Campaign files are written as <output>.json and <output>.csv when non-empty.
  std::string output;
  bool resume = false;

  /// Throws ConfigInvalid.
  void validate() const;
};

Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const Json& j);
/// FNV-1a of the canonical JSON of the result-determining fields (not output, jobs, resume).
std::string config_hash(const ExperimentConfig& cfg);

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  ///< "ok" or an error kind such as NonConverged
  std::string stop_reason;
  double terminal_loss = 0.0;
  double grad_norm = 0.0;
  int matched_index = -1;     ///< -1 when unclassified
  int r = -1;
  IndexSet fitted;
  bool global_minimum = false;
  std::optional<bool> escaped;
  double runtime_s = 0.0;
};

struct CampaignResult {
  std::string kind;  ///< "ovf" or "escape"
  std::string config_hash;
  std::string build;
  Json config;
  std::vector<TrialRecord> records;  ///< sorted by trial index
  /// Escape campaigns: the saddle and its threshold.
  IndexSet saddle_fitted;
  double saddle_loss = 0.0;
  double escape_threshold = 0.0;
  double epsilon = 0.0;

  double global_fraction() const;
  std::optional<double> escape_fraction() const;
  /// Counts keyed by matched table index; unclassified trials under -1.
  std::map<int, int> stratum_counts() const;
};

struct ResolvedProblem {
  RawProblem raw;
  ReducedProblem reduced;
  CriticalValueTable table;
};

/// Loads or draws the problem, reduces it and builds the critical-value table.
ResolvedProblem resolve_problem(const ProblemSource& source);

/// Integrates `cfg.trials` trials from the configured initialization and
/// classifies each terminal. Per-trial failures are recorded, never thrown.
CampaignResult run_ovf(const ExperimentConfig& cfg);
CampaignResult run_ovf(const ExperimentConfig& cfg, const ResolvedProblem& problem);

enum class Perturbation {
  Ambient,  ///< uniform on the unit sphere of the full state space
  Tangent,  ///< uniform on the unit sphere of the stratum tangent space (H = 1)
};

/// Starts every trial at construct_saddle(fitted) + epsilon * u and records
/// escape iff the terminal loss falls below L(saddle) - delta, delta being
/// half the gap to the next lower critical value.
CampaignResult run_saddle_escape(const ExperimentConfig& cfg, const ResolvedProblem& problem, const IndexSet& fitted,
                                 double epsilon, Perturbation perturbation = Perturbation::Ambient);
CampaignResult run_saddle_escape(const ExperimentConfig& cfg, const IndexSet& fitted, double epsilon,
                                 Perturbation perturbation = Perturbation::Ambient);

/// Maps the reduced-coordinate terminal back to raw coordinates and returns
/// ||W_total - W_LS||_F / ||W_LS||_F. Throws NotGlobalMinimum when the
/// effective loss at the terminal exceeds loss_tol.
double compare_least_squares(const RawProblem& raw, const WeightTuple& terminal, const ReducedProblem& reduced,
                             double loss_tol = 1e-8);

/// Initial weights of trial `index` (seed derived from the master seed).
WeightTuple trial_initialization(const ExperimentConfig& cfg, const LayerDims& dims, std::uint64_t seed);

Json campaign_to_json(const CampaignResult& result);
CampaignResult campaign_from_json(const Json& j);
/// Columns trial, seed, terminal_loss, matched_index, r, escaped, runtime_s.
std::string campaign_to_csv(const CampaignResult& result);
CampaignResult read_campaign(const std::filesystem::path& json_path);
/// Writes <output>.json and <output>.csv; returns the two paths.
std::vector<std::filesystem::path> write_campaign(const CampaignResult& result, const std::string& output);

/// Runs fn(0..count-1) on up to `jobs` threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

/// "dlnlab <version>".
std::string build_identifier();

}  // namespace dln
