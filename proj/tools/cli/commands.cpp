#include "commands.hpp"

#include "cli.hpp"
#include "output.hpp"

#include <dln/errors.hpp>
#include <dln/hessian.hpp>
#include <dln/io.hpp>
#include <dln/landscape.hpp>
#include <dln/reduction.hpp>

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace dln::cli {

namespace fs = std::filesystem;

namespace {

ResolvedProblem load_problem(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::ConfigInvalid, "a problem file is required");
  ProblemSource source;
  source.path = resolve_input(path).string();
  return resolve_problem(source);
}

fs::path with_suffix(const fs::path& prefix, const std::string& suffix) {
  return fs::path(prefix.string() + suffix);
}

RunManifest start_manifest(const std::string& command, const std::string& hash) {
  RunManifest m;
  m.command = command;
  m.config_hash = hash;
  m.started = utc_timestamp();
  m.version = build_identifier();
  return m;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

fs::path resolve_input(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute() || fs::exists(p)) return p;
  const fs::path alt = resolve_output(path);
  return fs::exists(alt) ? alt : p;
}

std::vector<Index> parse_dims(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != token.size() || v < 1) {
      throw Error(ErrorKind::ConfigInvalid, "bad dimension '" + token + "' in --dims " + text);
    }
    out.push_back(static_cast<Index>(v));
  }
  if (out.size() < 3) throw Error(ErrorKind::ConfigInvalid, "--dims needs d_y, at least one hidden width, and d_x");
  return out;
}

int cmd_gen(const GenOptions& opts, std::ostream& out) {
  const std::vector<Index> chain = parse_dims(opts.dims);
  const LayerDims dims = LayerDims::from_output_chain(chain);
  const std::vector<Index> hidden = dims.hidden();
  const Index m = opts.m > 0 ? opts.m : 2 * dims.d_x();

  RunManifest manifest = start_manifest("gen", "");
  constexpr int kMaxAttempts = 100;
  std::uint64_t seed = opts.seed;
  std::optional<RawProblem> drawn;
  for (int attempt = 0; !drawn; ++attempt, ++seed) {
    try {
      drawn = generate_problem(m, dims.d_x(), dims.d_y(), opts.scale, seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::AssumptionViolation || attempt + 1 >= kMaxAttempts) throw;
      out << "seed " << seed << " rejected (" << e.what() << "), retrying with seed " << seed + 1 << "\n";
    }
  }
  --seed;
  const RawProblem& raw = *drawn;
  const ReducedProblem reduced = reduce_problem(raw, hidden);
  const AssumptionReport report = check_assumptions(raw, reduced);

  Json j = problem_to_json({raw, hidden});
  j["dims"] = chain;
  j["m"] = m;
  j["scale"] = opts.scale;
  j["seed"] = seed;
  j["requested_seed"] = opts.seed;
  j["sigma"] = vector_to_json(reduced.sigma);
  j["offset"] = reduced.offset;
  j["assumption_report"] = assumption_report_to_json(report);
  const std::string text = j.dump(2) + "\n";
  manifest.config_hash = content_hash(text);

  const fs::path path = resolve_output(opts.output);
  write_text_file(path, text);
  manifest.outputs.push_back(path);
  write_manifest(manifest, path);

  out << "wrote " << path.string() << "\n";
  out << "singular values:";
  for (Index i = 0; i < reduced.sigma.size(); ++i) out << " " << format_double(reduced.sigma(i));
  out << "\nassumptions: " << (report.all_pass() ? "all pass" : "violated") << " (singular gap "
      << format_double(report.min_singular_gap) << ", critical gap " << format_double(report.min_critical_gap)
      << ")\n";
  return report.all_pass() ? kExitOk : kExitValidation;
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& out) {
  const ResolvedProblem problem = load_problem(opts.problem);
  const Vector& sigma = problem.reduced.sigma;
  const LayerDims dims = problem.reduced.dims;

  WeightTuple w0;
  Json init;
  if (!opts.init_file.empty()) {
    w0 = read_weights(resolve_input(opts.init_file));
    if (!(w0.dims() == dims)) throw Error(ErrorKind::ShapeMismatch, "initial weights do not match the problem");
    init = Json{{"file", opts.init_file}};
  } else {
    ExperimentConfig cfg;
    cfg.init_scale = opts.init_scale;
    w0 = trial_initialization(cfg, dims, opts.seed);
    init = Json{{"seed", opts.seed}, {"scale", opts.init_scale}};
  }

  RunManifest manifest = start_manifest("simulate", "");
  const Trajectory traj = integrate(w0, sigma, opts.integrator);
  const double terminal_loss = traj.losses.back();

  out << "stop_reason: " << to_string(traj.stop_reason) << "\n";
  out << "method: " << to_string(traj.method) << ", accepted steps " << traj.accepted_steps << ", t = "
      << format_double(traj.times.back()) << "\n";
  out << "terminal loss: " << format_double(terminal_loss) << " (raw loss "
      << format_double(terminal_loss + problem.reduced.offset) << "), gradient norm "
      << format_double(traj.grad_norms.back()) << "\n";

  Json result{{"init", init}, {"integrator", Json::object()}};
  result["integrator"] = {{"method", to_string(opts.integrator.method)},
                          {"step", opts.integrator.step},
                          {"abs_tol", opts.integrator.abs_tol},
                          {"rel_tol", opts.integrator.rel_tol},
                          {"t_max", opts.integrator.t_max},
                          {"grad_stop", opts.integrator.grad_stop}};

  if (traj.conserved()) {
    const auto drift = invariant_drift(traj);
    const auto norm_drift = norm_invariant_drift(traj);
    const double worst = drift.empty() ? 0.0 : *std::max_element(drift.begin(), drift.end());
    const double worst_norm = norm_drift.empty() ? 0.0 : *std::max_element(norm_drift.begin(), norm_drift.end());
    out << "invariant drift: " << format_double(worst) << " (norm form " << format_double(worst_norm) << ")\n";
    result["invariant_drift"] = drift;
    result["norm_invariant_drift"] = norm_drift;
  } else {
    out << "invariant drift: not conserved in discrete mode\n";
    result["invariant_drift"] = nullptr;
  }

  if (const auto pred = check_exponential_preconditions(w0)) {
    out << "exponential-rate precondition holds: predicted rate " << format_double(pred->alpha) << "\n";
    result["exponential_prediction"] = {{"alpha", pred->alpha},
                                        {"per_layer_alpha", pred->per_layer_alpha},
                                        {"product_factors", pred->product_factors}};
  }

  result["report"] = nullptr;
  if (traj.stop_reason != StopReason::Diverged) {
    try {
      const CriticalPointReport rep = classify_limit(traj.terminal, sigma, problem.table);
      result["report"] = report_to_json(rep);
      out << "matched critical value: index " << rep.matched_index << ", value " << format_double(rep.matched_value)
          << ", fitted " << format_subset(rep.fitted_subset) << ", r = " << rep.r << "\n";
      out << "global minimum: " << (rep.global_minimum() ? "yes" : "no") << "\n";
      try {
        const RateEstimate rate = fit_rate(traj, rep.matched_value);
        result["rate"] = {{"kind", to_string(rate.kind)},
                          {"rate", rate.rate},
                          {"fit_quality", rate.fit_quality},
                          {"exponential_rate", rate.exponential_rate},
                          {"exponential_r2", rate.exponential_r2},
                          {"polynomial_rate", rate.polynomial_rate},
                          {"polynomial_r2", rate.polynomial_r2}};
        out << "decay: " << to_string(rate.kind) << ", rate " << format_double(rate.rate) << ", R^2 "
            << format_double(rate.fit_quality) << "\n";
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InsufficientDecay) throw;
        out << "decay: not fitted (" << e.what() << ")\n";
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotCritical && e.kind() != ErrorKind::AmbiguousMatch) throw;
      out << "classification: " << e.what() << "\n";
    }
  }

  const fs::path prefix = resolve_output(opts.output);
  const fs::path csv = with_suffix(prefix, ".csv");
  const fs::path json = with_suffix(prefix, ".json");
  write_text_file(csv, trajectory_to_csv(traj));
  result["trajectory"] = trajectory_to_json(traj);
  const std::string text = result.dump() + "\n";
  write_text_file(json, text);
  manifest.config_hash = content_hash(result["init"].dump() + result["integrator"].dump());
  manifest.outputs = {json, csv};
  write_manifest(manifest, json);
  out << "wrote " << csv.string() << " and " << json.string() << "\n";
  return traj.stop_reason == StopReason::Diverged ? kExitNumeric : kExitOk;
}

int cmd_landscape(const LandscapeOptions& opts, std::ostream& out) {
  const ResolvedProblem problem = load_problem(opts.problem);
  RunManifest manifest = start_manifest("landscape", "");
  out << table_to_text(problem.table);

  Json j{{"table", table_to_json(problem.table)},
         {"offset", problem.reduced.offset},
         {"assumption_report", assumption_report_to_json(check_assumptions(problem.raw, problem.reduced))}};
  const fs::path prefix = resolve_output(opts.output);
  const fs::path csv = with_suffix(prefix, ".csv");
  const fs::path json = with_suffix(prefix, ".json");
  write_text_file(csv, table_to_csv(problem.table));
  write_text_file(json, j.dump(2) + "\n");
  manifest.config_hash = content_hash(j["table"].dump());
  manifest.outputs = {json, csv};
  write_manifest(manifest, json);
  out << "wrote " << csv.string() << " and " << json.string() << "\n";
  return kExitOk;
}

int cmd_hessian(const HessianOptions& opts, std::ostream& out) {
  const ResolvedProblem problem = load_problem(opts.problem);
  const Vector& sigma = problem.reduced.sigma;
  const LayerDims dims = problem.reduced.dims;
  RunManifest manifest = start_manifest("hessian", "");
  const fs::path prefix = resolve_output(opts.output);

  std::optional<SaddleConstruction> saddle;
  WeightTuple w;
  Json j;
  if (!opts.saddle.empty()) {
    const IndexSet fitted = parse_subset(opts.saddle, static_cast<int>(dims.d_y()));
    saddle = construct_saddle(sigma, dims, fitted, {opts.seed, false});
    w = saddle->weights;
    const fs::path weights_path = with_suffix(prefix, "_saddle.json");
    write_text_file(weights_path, weights_to_json(w).dump() + "\n");
    manifest.outputs.push_back(weights_path);
    j["saddle"] = {{"fitted", format_subset(fitted)}, {"seed", opts.seed}};
  } else if (!opts.weights.empty()) {
    w = read_weights(resolve_input(opts.weights));
    if (!(w.dims() == dims)) throw Error(ErrorKind::ShapeMismatch, "weights do not match the problem");
    j["weights"] = opts.weights;
  } else {
    throw Error(ErrorKind::ConfigInvalid, "hessian needs --saddle or --weights");
  }

  const HessianSpectrum sp = spectrum(w, sigma, opts.zero_tol);
  j["spectrum"] = spectrum_to_json(sp);
  out << "state dimension " << sp.eigenvalues.size() << ": negative " << sp.negative << ", zero " << sp.zero
      << ", positive " << sp.positive << "\n";

  std::optional<CriticalPointReport> report;
  try {
    report = classify_limit(w, sigma, problem.table);
    j["report"] = report_to_json(*report);
    out << "critical point: r = " << report->r << ", r_Z = " << report->r_Z << ", fitted "
        << format_subset(report->fitted_subset) << ", loss " << format_double(report->loss) << "\n";
    const auto nd = negative_direction(w, sigma);
    if (nd) {
      j["negative_direction"] = {{"value", nd->value}, {"lambda", nd->lambda}, {"mu", nd->mu}, {"row", nd->row + 1}};
      out << "negative direction: form value " << format_double(nd->value) << "\n";
    } else {
      j["negative_direction"] = nullptr;
      out << "negative direction: none\n";
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotCritical && e.kind() != ErrorKind::AmbiguousMatch) throw;
    out << "classification: " << e.what() << "\n";
  }

  if (saddle && dims.H() == 1) {
    const TangentKernelReport tk = tangent_kernel_check(w, *saddle, sigma, {.zero_rel_tol = opts.zero_tol});
    j["tangent_check"] = tangent_report_to_json(tk);
    out << "kernel dimension " << tk.kernel_dimension << " vs d(r) = " << tk.expected_dimension
        << " (closed-form alternative " << tk.printed_dimension << "): "
        << (tk.dimension_ok() ? "match" : "mismatch") << "\n";
    out << "tangent check: " << (tk.passed ? "passed" : "failed") << " (rank " << tk.tangent_rank
        << ", max annihilation " << format_double(tk.max_annihilation) << ", max angle "
        << format_double(tk.max_angle) << ")\n";
  } else if (report && dims.H() == 1 && report->r < dims.d_y()) {
    const Index d = stratum_dimension(report->r, dims);
    out << "kernel dimension " << sp.kernel_dimension() << " vs d(r) = " << d << " (closed-form alternative "
        << printed_stratum_dimension(report->r, dims) << ")\n";
  }

  const fs::path csv = with_suffix(prefix, "_spectrum.csv");
  const fs::path json = with_suffix(prefix, ".json");
  write_text_file(csv, spectrum_to_csv(sp));
  write_text_file(json, j.dump(2) + "\n");
  manifest.config_hash = content_hash(j.contains("saddle") ? j["saddle"].dump() : opts.weights);
  manifest.outputs.insert(manifest.outputs.begin(), {json, csv});
  write_manifest(manifest, json);
  out << "wrote " << csv.string() << " and " << json.string() << "\n";
  return kExitOk;
}

namespace {

void print_campaign(const CampaignResult& res, std::ostream& out) {
  int failures = 0;
  for (const auto& r : res.records) failures += r.status == "ok" ? 0 : 1;
  out << "trials: " << res.records.size() << ", not classified: " << failures << "\n";
  for (const auto& [idx, count] : res.stratum_counts()) {
    if (idx < 0) continue;
    out << "  critical value #" << idx << ": " << count << "\n";
  }
}

}  // namespace

int cmd_ovf(ExperimentConfig cfg, std::ostream& out) {
  if (cfg.output.empty()) cfg.output = "ovf";
  const fs::path prefix = resolve_output(cfg.output);
  cfg.output = prefix.string();
  if (!cfg.problem.path.empty()) cfg.problem.path = resolve_input(cfg.problem.path).string();
  RunManifest manifest = start_manifest("ovf", "");
  const CampaignResult res = run_ovf(cfg);
  manifest.config_hash = res.config_hash;
  print_campaign(res, out);
  int hits = 0;
  for (const auto& r : res.records) hits += r.global_minimum ? 1 : 0;
  out << "global-minimum fraction: " << format_double(res.global_fraction()) << " (" << hits << "/"
      << res.records.size() << ")\n";
  manifest.outputs = {with_suffix(prefix, ".json"), with_suffix(prefix, ".csv")};
  write_manifest(manifest, manifest.outputs.front());
  out << "wrote " << manifest.outputs[0].string() << " and " << manifest.outputs[1].string() << "\n";
  return kExitOk;
}

int cmd_escape(ExperimentConfig cfg, const EscapeOptions& opts, std::ostream& out) {
  if (cfg.output.empty()) cfg.output = "escape";
  const fs::path prefix = resolve_output(cfg.output);
  cfg.output = prefix.string();
  if (!cfg.problem.path.empty()) cfg.problem.path = resolve_input(cfg.problem.path).string();
  if (opts.saddle.empty()) throw Error(ErrorKind::ConfigInvalid, "escape needs --saddle");
  RunManifest manifest = start_manifest("escape", "");
  const ResolvedProblem problem = resolve_problem(cfg.problem);
  const IndexSet fitted = parse_subset(opts.saddle, static_cast<int>(problem.reduced.dims.d_y()));
  const CampaignResult res = run_saddle_escape(cfg, problem, fitted, opts.epsilon,
                                               opts.tangent ? Perturbation::Tangent : Perturbation::Ambient);
  manifest.config_hash = res.config_hash;
  out << "saddle " << format_subset(fitted) << ": loss " << format_double(res.saddle_loss) << ", threshold "
      << format_double(res.escape_threshold) << ", epsilon " << format_double(res.epsilon) << "\n";
  print_campaign(res, out);
  int hits = 0;
  for (const auto& r : res.records) hits += (r.escaped && *r.escaped) ? 1 : 0;
  out << "escape fraction: " << format_double(res.escape_fraction().value_or(0.0)) << " (" << hits << "/"
      << res.records.size() << ")\n";
  manifest.outputs = {with_suffix(prefix, ".json"), with_suffix(prefix, ".csv")};
  write_manifest(manifest, manifest.outputs.front());
  out << "wrote " << manifest.outputs[0].string() << " and " << manifest.outputs[1].string() << "\n";
  return kExitOk;
}

int cmd_defaults(std::ostream& out) {
  const ClassifyOptions classify;
  const TangentCheckOptions tangent;
  const RateFitOptions rate;
  const NegativeDirectionOptions negative;
  const GenOptions gen;
  const EscapeOptions escape;
  Json j;
  j["experiment"] = config_to_json(ExperimentConfig{});
  j["classify"] = {{"grad_tol", classify.grad_tol},
                   {"rank_rel_tol", classify.rank_rel_tol},
                   {"fitted_rel_tol", classify.fitted_rel_tol},
                   {"match_rel_tol", classify.match_rel_tol}};
  j["critical_values"] = {{"separation_rel_tol", 1e-6}};
  j["hessian"] = {{"zero_rel_tol", HessianOptions{}.zero_tol},
                  {"max_dimension", kMaxHessianDimension},
                  {"tangent_annihilation_tol", tangent.annihilation_tol},
                  {"tangent_angle_tol", tangent.angle_tol},
                  {"negative_direction_grad_tol", negative.grad_tol},
                  {"negative_direction_rank_rel_tol", negative.rank_rel_tol}};
  j["rate_fit"] = {{"min_points", rate.min_points}, {"min_quality", rate.min_quality}, {"noise_floor", rate.noise_floor}};
  j["gen"] = {{"m", "2 * d_x"}, {"scale", gen.scale}, {"seed", gen.seed}};
  j["escape"] = {{"epsilon", escape.epsilon}};
  j["output_dir_variable"] = "DLNLAB_OUTPUT_DIR";
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace dln::cli
