#include "dln/experiments.hpp"

#include "dln/errors.hpp"
#include "dln/hessian.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef DLN_VERSION
#define DLN_VERSION "0.0.0"
#endif

namespace dln {

namespace fs = std::filesystem;

std::string build_identifier() { return std::string("dlnlab ") + DLN_VERSION; }

void ExperimentConfig::validate() const {
  if (trials < 1) throw Error(ErrorKind::ConfigInvalid, "trials must be >= 1");
  if (init_scale < 0.0 || !std::isfinite(init_scale)) throw Error(ErrorKind::ConfigInvalid, "init_scale must be >= 0");
  if (init == InitKind::Fixed && !initial_weights) {
    throw Error(ErrorKind::ConfigInvalid, "fixed initialization needs initial weights");
  }
  if (jobs < 0) throw Error(ErrorKind::ConfigInvalid, "jobs must be >= 0");
  integrator.validate();
}

namespace {

Json integrator_to_json(const IntegratorConfig& c) {
  return Json{{"method", std::string(to_string(c.method))},
              {"step", c.step},
              {"abs_tol", c.abs_tol},
              {"rel_tol", c.rel_tol},
              {"t_max", c.t_max},
              {"grad_stop", c.grad_stop},
              {"snapshot_stride", c.snapshot_stride},
              {"max_steps", c.max_steps},
              {"min_step", c.min_step}};
}

IntegratorConfig integrator_from_json(const Json& j) {
  IntegratorConfig c;
  c.method = integration_method_from_string(j.value("method", std::string(to_string(c.method))));
  c.step = j.value("step", c.step);
  c.abs_tol = j.value("abs_tol", c.abs_tol);
  c.rel_tol = j.value("rel_tol", c.rel_tol);
  c.t_max = j.value("t_max", c.t_max);
  c.grad_stop = j.value("grad_stop", c.grad_stop);
  c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.min_step = j.value("min_step", c.min_step);
  return c;
}

Json classify_to_json(const ClassifyOptions& c) {
  return Json{{"grad_tol", c.grad_tol},
              {"rank_rel_tol", c.rank_rel_tol},
              {"fitted_rel_tol", c.fitted_rel_tol},
              {"match_rel_tol", c.match_rel_tol}};
}

ClassifyOptions classify_from_json(const Json& j) {
  ClassifyOptions c;
  c.grad_tol = j.value("grad_tol", c.grad_tol);
  c.rank_rel_tol = j.value("rank_rel_tol", c.rank_rel_tol);
  c.fitted_rel_tol = j.value("fitted_rel_tol", c.fitted_rel_tol);
  c.match_rel_tol = j.value("match_rel_tol", c.match_rel_tol);
  return c;
}

Json result_fields(const ExperimentConfig& cfg) {
  Json j = config_to_json(cfg);
  j.erase("output");
  j.erase("jobs");
  j.erase("resume");
  return j;
}


}  // namespace

Json config_to_json(const ExperimentConfig& cfg) {
  Json j{{"problem",
          {{"path", cfg.problem.path},
           {"m", cfg.problem.m},
           {"d_x", cfg.problem.d_x},
           {"d_y", cfg.problem.d_y},
           {"hidden_dims", cfg.problem.hidden_dims},
           {"scale", cfg.problem.scale},
           {"seed", cfg.problem.seed}}},
         {"trials", cfg.trials},
         {"init", cfg.init == InitKind::Gaussian ? "gaussian" : "fixed"},
         {"init_scale", cfg.init_scale},
         {"integrator", integrator_to_json(cfg.integrator)},
         {"classify", classify_to_json(cfg.classify)},
         {"master_seed", cfg.master_seed},
         {"jobs", cfg.jobs},
         {"output", cfg.output},
         {"resume", cfg.resume}};
  if (cfg.initial_weights) j["initial_weights"] = weights_to_json(*cfg.initial_weights);
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  try {
    ExperimentConfig cfg;
    if (j.contains("problem")) {
      const Json& p = j.at("problem");
      cfg.problem.path = p.value("path", cfg.problem.path);
      cfg.problem.m = p.value("m", cfg.problem.m);
      cfg.problem.d_x = p.value("d_x", cfg.problem.d_x);
      cfg.problem.d_y = p.value("d_y", cfg.problem.d_y);
      cfg.problem.hidden_dims = p.value("hidden_dims", cfg.problem.hidden_dims);
      cfg.problem.scale = p.value("scale", cfg.problem.scale);
      cfg.problem.seed = p.value("seed", cfg.problem.seed);
    }
    cfg.trials = j.value("trials", cfg.trials);
    const std::string init = j.value("init", std::string("gaussian"));
    if (init == "gaussian") {
      cfg.init = InitKind::Gaussian;
    } else if (init == "fixed") {
      cfg.init = InitKind::Fixed;
    } else {
      throw Error(ErrorKind::ConfigInvalid, "unknown init '" + init + "'");
    }
    cfg.init_scale = j.value("init_scale", cfg.init_scale);
    if (j.contains("initial_weights")) cfg.initial_weights = weights_from_json(j.at("initial_weights"));
    if (j.contains("integrator")) cfg.integrator = integrator_from_json(j.at("integrator"));
    if (j.contains("classify")) cfg.classify = classify_from_json(j.at("classify"));
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.output = j.value("output", cfg.output);
    cfg.resume = j.value("resume", cfg.resume);
    return cfg;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("experiment config: ") + e.what());
  }
}

std::string config_hash(const ExperimentConfig& cfg) { return content_hash(result_fields(cfg).dump()); }

double CampaignResult::global_fraction() const {
  if (records.empty()) return 0.0;
  int hits = 0;
  for (const auto& r : records) hits += r.global_minimum ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::optional<double> CampaignResult::escape_fraction() const {
  if (kind != "escape" || records.empty()) return std::nullopt;
  int hits = 0;
  for (const auto& r : records) hits += (r.escaped && *r.escaped) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::map<int, int> CampaignResult::stratum_counts() const {
  std::map<int, int> counts;
  for (const auto& r : records) ++counts[r.matched_index];
  return counts;
}

ResolvedProblem resolve_problem(const ProblemSource& source) {
  ResolvedProblem p;
  std::vector<Index> hidden = source.hidden_dims;
  if (!source.path.empty()) {
    ProblemFile file = read_problem(source.path);
    p.raw = std::move(file.raw);
    hidden = std::move(file.hidden_dims);
  } else {
    p.raw = generate_problem(source.m, source.d_x, source.d_y, source.scale, source.seed);
  }
  p.reduced = reduce_problem(p.raw, hidden);
  p.table = critical_values(p.reduced.sigma);
  return p;
}

WeightTuple trial_initialization(const ExperimentConfig& cfg, const LayerDims& dims, std::uint64_t seed) {
  if (cfg.init == InitKind::Fixed) {
    if (!cfg.initial_weights) throw Error(ErrorKind::ConfigInvalid, "fixed initialization needs initial weights");
    if (!(cfg.initial_weights->dims() == dims)) {
      throw Error(ErrorKind::ShapeMismatch, "initial weights do not match the problem dimensions");
    }
    return *cfg.initial_weights;
  }
  std::vector<double> scales;
  for (int j = 1; j <= dims.H() + 1; ++j) {
    scales.push_back(cfg.init_scale > 0.0 ? cfg.init_scale
                                          : 1.0 / std::sqrt(static_cast<double>(dims.width(j - 1))));
  }
  Rng rng(seed);
  return WeightTuple::gaussian(dims, scales, rng);
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, count);
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

TrialRecord run_trial(int index, std::uint64_t seed, const WeightTuple& w0, const ResolvedProblem& problem,
                      const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  TrialRecord rec;
  rec.trial = index;
  rec.seed = seed;
  try {
    const Trajectory traj = integrate(w0, problem.reduced.sigma, cfg.integrator);
    rec.stop_reason = std::string(to_string(traj.stop_reason));
    rec.terminal_loss = traj.losses.back();
    rec.grad_norm = traj.grad_norms.back();
    if (traj.stop_reason != StopReason::Converged) {
      rec.status = std::string(to_string(ErrorKind::NonConverged));
    } else {
      const CriticalPointReport rep = classify_limit(traj.terminal, problem.reduced.sigma, problem.table, cfg.classify);
      rec.r = static_cast<int>(rep.r);
      rec.fitted = rep.fitted_subset;
      if (rep.consistent) {
        rec.matched_index = static_cast<int>(rep.matched_index);
        rec.global_minimum = rep.global_minimum();
      } else {
        rec.status = "Inconsistent";
      }
    }
  } catch (const Error& e) {
    rec.status = std::string(to_string(e.kind()));
  }
  rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Runs the missing trials of a campaign, resuming from and persisting to cfg.output.
CampaignResult run_campaign(const ExperimentConfig& cfg, CampaignResult result,
                            const std::function<TrialRecord(int)>& trial) {
  result.config_hash = content_hash(result.config.dump());
  result.build = build_identifier();

  std::vector<std::optional<TrialRecord>> slots(static_cast<std::size_t>(cfg.trials));
  if (cfg.resume && !cfg.output.empty() && fs::exists(cfg.output + ".json")) {
    const CampaignResult previous = read_campaign(cfg.output + ".json");
    if (previous.config_hash != result.config_hash) {
      throw Error(ErrorKind::ConfigInvalid, "cannot resume " + cfg.output + ".json: config hash " +
                                                previous.config_hash + " differs from " + result.config_hash);
    }
    for (const auto& r : previous.records) {
      if (r.trial >= 0 && r.trial < cfg.trials) slots[static_cast<std::size_t>(r.trial)] = r;
    }
  }
  std::vector<int> pending;
  for (int i = 0; i < cfg.trials; ++i) {
    if (!slots[static_cast<std::size_t>(i)]) pending.push_back(i);
  }
  parallel_for(static_cast<int>(pending.size()), cfg.jobs, [&](int k) {
    const int i = pending[static_cast<std::size_t>(k)];
    slots[static_cast<std::size_t>(i)] = trial(i);
  });
  for (auto& s : slots) result.records.push_back(std::move(*s));
  if (!cfg.output.empty()) write_campaign(result, cfg.output);
  return result;
}

}  // namespace

CampaignResult run_ovf(const ExperimentConfig& cfg, const ResolvedProblem& problem) {
  cfg.validate();
  CampaignResult result;
  result.kind = "ovf";
  result.config = result_fields(cfg);
  const LayerDims dims = problem.reduced.dims;
  return run_campaign(cfg, std::move(result), [&](int i) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
    return run_trial(i, seed, trial_initialization(cfg, dims, seed), problem, cfg);
  });
}

CampaignResult run_ovf(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_ovf(cfg, resolve_problem(cfg.problem));
}

CampaignResult run_saddle_escape(const ExperimentConfig& cfg, const ResolvedProblem& problem, const IndexSet& fitted,
                                 double epsilon, Perturbation perturbation) {
  cfg.validate();
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::ConfigInvalid, "epsilon must be >= 0");
  const LayerDims dims = problem.reduced.dims;
  const Vector& sigma = problem.reduced.sigma;
  const SaddleConstruction saddle = construct_saddle(sigma, dims, fitted, {cfg.master_seed, false});

  CampaignResult result;
  result.kind = "escape";
  result.epsilon = epsilon;
  result.saddle_fitted = fitted;
  const std::size_t idx = problem.table.index_of_fitted(fitted);
  result.saddle_loss = loss(saddle.weights, sigma);
  const double lower = problem.table.entries[idx + 1].value;
  result.escape_threshold = result.saddle_loss - 0.5 * (problem.table.entries[idx].value - lower);

  Matrix tangent;
  if (perturbation == Perturbation::Tangent) tangent = range_basis(stratum_tangent_basis(saddle));

  result.config = result_fields(cfg);
  Json escape{{"fitted", Json::array()},
              {"epsilon", epsilon},
              {"perturbation", perturbation == Perturbation::Ambient ? "ambient" : "tangent"}};
  for (int i : fitted) escape["fitted"].push_back(i + 1);
  result.config["escape"] = escape;

  return run_campaign(cfg, std::move(result), [&](int i) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
    Rng rng(seed);
    Vector u;
    if (perturbation == Perturbation::Tangent) {
      u = tangent * gaussian_matrix(tangent.cols(), 1, 1.0, rng);
    } else {
      u = gaussian_matrix(saddle.weights.size(), 1, 1.0, rng);
    }
    if (u.norm() > 0.0) u /= u.norm();
    const std::vector<double> flat(u.data(), u.data() + u.size());
    const WeightTuple w0 = saddle.weights + epsilon * Direction::unflatten(dims, flat);
    TrialRecord rec = run_trial(i, seed, w0, problem, cfg);
    if (rec.status == "ok" || rec.status == to_string(ErrorKind::NonConverged) || rec.status == "Inconsistent") {
      rec.escaped = rec.terminal_loss < result.escape_threshold;
    }
    return rec;
  });
}

CampaignResult run_saddle_escape(const ExperimentConfig& cfg, const IndexSet& fitted, double epsilon,
                                 Perturbation perturbation) {
  cfg.validate();
  return run_saddle_escape(cfg, resolve_problem(cfg.problem), fitted, epsilon, perturbation);
}

double compare_least_squares(const RawProblem& raw, const WeightTuple& terminal, const ReducedProblem& reduced,
                             double loss_tol) {
  const double l = loss(terminal, reduced.sigma);
  if (l > loss_tol) {
    std::ostringstream os;
    os << "effective loss " << l << " exceeds " << loss_tol;
    throw Error(ErrorKind::NotGlobalMinimum, os.str());
  }
  const WeightTuple w = to_raw_coordinates(terminal, reduced);
  const Matrix total = pi_product(w, 1, w.H() + 1);
  const Matrix ls = least_squares_solution(raw);
  return (total - ls).norm() / ls.norm();
}

namespace {

Json record_to_json(const TrialRecord& r) {
  Json fitted = Json::array();
  for (int i : r.fitted) fitted.push_back(i + 1);
  Json j{{"trial", r.trial},
         {"seed", r.seed},
         {"status", r.status},
         {"stop_reason", r.stop_reason},
         {"terminal_loss", r.terminal_loss},
         {"grad_norm", r.grad_norm},
         {"matched_index", r.matched_index},
         {"r", r.r},
         {"fitted", std::move(fitted)},
         {"global_minimum", r.global_minimum},
         {"runtime_s", r.runtime_s}};
  j["escaped"] = r.escaped ? Json(*r.escaped) : Json(nullptr);
  return j;
}

TrialRecord record_from_json(const Json& j) {
  TrialRecord r;
  r.trial = j.at("trial").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.stop_reason = j.at("stop_reason").get<std::string>();
  r.terminal_loss = j.at("terminal_loss").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.matched_index = j.at("matched_index").get<int>();
  r.r = j.at("r").get<int>();
  for (const Json& v : j.at("fitted")) r.fitted.push_back(v.get<int>() - 1);
  r.global_minimum = j.at("global_minimum").get<bool>();
  if (!j.at("escaped").is_null()) r.escaped = j.at("escaped").get<bool>();
  r.runtime_s = j.at("runtime_s").get<double>();
  return r;
}

}  // namespace

Json campaign_to_json(const CampaignResult& result) {
  Json records = Json::array();
  for (const auto& r : result.records) records.push_back(record_to_json(r));
  Json counts = Json::object();
  for (const auto& [index, count] : result.stratum_counts()) {
    counts[index < 0 ? std::string("unclassified") : std::to_string(index)] = count;
  }
  Json aggregate{{"trials", result.records.size()},
                 {"global_fraction", result.global_fraction()},
                 {"stratum_counts", std::move(counts)}};
  if (auto f = result.escape_fraction()) aggregate["escape_fraction"] = *f;
  Json j{{"kind", result.kind},
         {"config_hash", result.config_hash},
         {"build", result.build},
         {"config", result.config},
         {"aggregate", std::move(aggregate)},
         {"records", std::move(records)}};
  if (result.kind == "escape") {
    Json fitted = Json::array();
    for (int i : result.saddle_fitted) fitted.push_back(i + 1);
    j["saddle"] = Json{{"fitted", std::move(fitted)},
                       {"loss", result.saddle_loss},
                       {"escape_threshold", result.escape_threshold},
                       {"epsilon", result.epsilon}};
  }
  return j;
}

CampaignResult campaign_from_json(const Json& j) {
  try {
    CampaignResult c;
    c.kind = j.at("kind").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.build = j.at("build").get<std::string>();
    c.config = j.at("config");
    for (const Json& r : j.at("records")) c.records.push_back(record_from_json(r));
    if (j.contains("saddle")) {
      const Json& s = j.at("saddle");
      for (const Json& v : s.at("fitted")) c.saddle_fitted.push_back(v.get<int>() - 1);
      c.saddle_loss = s.at("loss").get<double>();
      c.escape_threshold = s.at("escape_threshold").get<double>();
      c.epsilon = s.at("epsilon").get<double>();
    }
    return c;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("campaign: ") + e.what());
  }
}

std::string campaign_to_csv(const CampaignResult& result) {
  std::ostringstream os;
  os << std::setprecision(17) << "trial,seed,terminal_loss,matched_index,r,escaped,runtime_s\n";
  for (const auto& r : result.records) {
    os << r.trial << ',' << r.seed << ',' << r.terminal_loss << ',' << r.matched_index << ',' << r.r << ',';
    if (r.escaped) os << (*r.escaped ? 1 : 0);
    os << ',' << r.runtime_s << '\n';
  }
  return os.str();
}

CampaignResult read_campaign(const fs::path& json_path) {
  try {
    return campaign_from_json(Json::parse(read_text_file(json_path)));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, json_path.string() + ": " + e.what());
  }
}

std::vector<fs::path> write_campaign(const CampaignResult& result, const std::string& output) {
  const fs::path json_path = output + ".json";
  const fs::path csv_path = output + ".csv";
  write_text_file(json_path, campaign_to_json(result).dump(2) + "\n");
  write_text_file(csv_path, campaign_to_csv(result));
  return {json_path, csv_path};
}

}  // namespace dln
