#include "cli.hpp"

#include "commands.hpp"

#include <dln/errors.hpp>
#include <dln/io.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <ostream>

namespace dln::cli {

namespace {

struct IntegratorFlags {
  std::string method;
  double step = 0;
  double abs_tol = 0;
  double rel_tol = 0;
  double t_max = 0;
  double grad_stop = 0;
  int stride = 0;
  long max_steps = 0;
  bool discrete = false;
  double lr = 0;

  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts.clear();
    opts.push_back(app->add_option("--method", method, "rk45, rk4 or discrete"));
    opts.push_back(app->add_option("--step", step, "fixed step, learning rate, or initial adaptive step"));
    opts.push_back(app->add_option("--abs-tol", abs_tol, "adaptive absolute tolerance"));
    opts.push_back(app->add_option("--rel-tol", rel_tol, "adaptive relative tolerance"));
    opts.push_back(app->add_option("--tmax", t_max, "time horizon"));
    opts.push_back(app->add_option("--grad-stop", grad_stop, "stop once the gradient norm falls below this"));
    opts.push_back(app->add_option("--stride", stride, "keep the weights of every k-th accepted step"));
    opts.push_back(app->add_option("--max-steps", max_steps, "cap on accepted steps"));
    opts.push_back(app->add_flag("--discrete", discrete, "plain gradient descent instead of the flow"));
    opts.push_back(app->add_option("--lr", lr, "gradient-descent learning rate (implies --discrete)"));
  }

  void apply(IntegratorConfig& cfg) const {
    auto given = [this](std::size_t i) { return opts[i]->count() > 0; };
    if (given(0)) cfg.method = integration_method_from_string(method);
    if (given(1)) cfg.step = step;
    if (given(2)) cfg.abs_tol = abs_tol;
    if (given(3)) cfg.rel_tol = rel_tol;
    if (given(4)) cfg.t_max = t_max;
    if (given(5)) cfg.grad_stop = grad_stop;
    if (given(6)) cfg.snapshot_stride = stride;
    if (given(7)) cfg.max_steps = max_steps;
    if (given(8) && discrete) cfg.method = IntegrationMethod::DiscreteGd;
    if (given(9)) {
      cfg.method = IntegrationMethod::DiscreteGd;
      cfg.step = lr;
    }
  }
};

struct CampaignFlags {
  std::string config_file;
  std::string problem;
  int trials = 0;
  std::uint64_t seed = 0;
  int jobs = 0;
  double init_scale = 0;
  bool resume = false;
  std::string output;

  CLI::Option* trials_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* scale_opt = nullptr;
  CLI::Option* output_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("problem", problem, "problem JSON (defaults to a seeded draw)");
    app->add_option("--config", config_file, "campaign configuration JSON");
    trials_opt = app->add_option("--trials", trials, "number of trials");
    seed_opt = app->add_option("--seed", seed, "master seed");
    jobs_opt = app->add_option("--jobs", jobs, "worker threads");
    scale_opt = app->add_option("--init-scale", init_scale, "Gaussian initialization scale (0: 1/sqrt(fan-in))");
    app->add_flag("--resume", resume, "continue an interrupted campaign");
    output_opt = app->add_option("-o,--output", output, "output prefix");
  }

  ExperimentConfig build(const IntegratorFlags& integrator) const {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = config_from_json(Json::parse(read_text_file(resolve_input(config_file))));
    if (!problem.empty()) cfg.problem.path = problem;
    if (trials_opt->count() > 0) cfg.trials = trials;
    if (seed_opt->count() > 0) cfg.master_seed = seed;
    if (jobs_opt->count() > 0) cfg.jobs = jobs;
    if (scale_opt->count() > 0) cfg.init_scale = init_scale;
    if (output_opt->count() > 0) cfg.output = output;
    if (resume) cfg.resume = true;
    integrator.apply(cfg.integrator);
    return cfg;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient-flow laboratory for deep linear networks", "dlnlab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_identifier());

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "draw a random regression problem");
  gen_cmd->add_option("--dims", gen.dims, "widths output-to-input: d_y,d_H,...,d_1,d_x")->required();
  gen_cmd->add_option("--m", gen.m, "number of samples (default 2 d_x)");
  gen_cmd->add_option("--scale", gen.scale, "entry standard deviation");
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("-o,--output", gen.output, "problem file");

  SimulateOptions sim;
  IntegratorFlags sim_integrator;
  auto* sim_cmd = app.add_subcommand("simulate", "integrate the gradient flow from one initialization");
  sim_cmd->add_option("problem", sim.problem, "problem JSON")->required();
  sim_cmd->add_option("--seed", sim.seed, "initialization seed");
  sim_cmd->add_option("--init-scale", sim.init_scale, "Gaussian initialization scale (0: 1/sqrt(fan-in))");
  sim_cmd->add_option("--init-file", sim.init_file, "initial weights JSON");
  sim_cmd->add_option("-o,--output", sim.output, "output prefix");
  sim_integrator.add(sim_cmd);

  LandscapeOptions land;
  auto* land_cmd = app.add_subcommand("landscape", "list the critical values of the problem");
  land_cmd->add_option("problem", land.problem, "problem JSON")->required();
  land_cmd->add_option("-o,--output", land.output, "output prefix");

  HessianOptions hess;
  auto* hess_cmd = app.add_subcommand("hessian", "Hessian spectrum at a saddle or at given weights");
  hess_cmd->add_option("problem", hess.problem, "problem JSON")->required();
  auto* saddle_opt = hess_cmd->add_option("--saddle", hess.saddle, "fitted subset, 1-based, e.g. '{1}'");
  auto* weights_opt = hess_cmd->add_option("--weights", hess.weights, "weights JSON");
  saddle_opt->excludes(weights_opt);
  hess_cmd->add_option("--seed", hess.seed, "seed for the saddle's free blocks");
  hess_cmd->add_option("--zero-tol", hess.zero_tol, "relative zero threshold for eigenvalues");
  hess_cmd->add_option("-o,--output", hess.output, "output prefix");

  CampaignFlags ovf_flags;
  IntegratorFlags ovf_integrator;
  auto* ovf_cmd = app.add_subcommand("ovf", "fraction of random initializations that reach a global minimum");
  ovf_flags.add(ovf_cmd);
  ovf_integrator.add(ovf_cmd);

  CampaignFlags esc_flags;
  IntegratorFlags esc_integrator;
  EscapeOptions esc;
  auto* esc_cmd = app.add_subcommand("escape", "perturb a constructed saddle and record escapes");
  esc_flags.add(esc_cmd);
  esc_integrator.add(esc_cmd);
  esc_cmd->add_option("--saddle", esc.saddle, "fitted subset, 1-based, e.g. '{1}'")->required();
  esc_cmd->add_option("--epsilon", esc.epsilon, "perturbation radius");
  esc_cmd->add_flag("--tangent", esc.tangent, "perturb within the stratum tangent space");

  auto* defaults_cmd = app.add_subcommand("defaults", "print every numeric default as JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*sim_cmd) {
      sim_integrator.apply(sim.integrator);
      return cmd_simulate(sim, out);
    }
    if (*land_cmd) return cmd_landscape(land, out);
    if (*hess_cmd) return cmd_hessian(hess, out);
    if (*ovf_cmd) return cmd_ovf(ovf_flags.build(ovf_integrator), out);
    if (*esc_cmd) return cmd_escape(esc_flags.build(esc_integrator), esc, out);
    if (*defaults_cmd) return cmd_defaults(out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? kExitValidation : kExitNumeric;
  } catch (const Json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitValidation;
}

}  // namespace dln::cli
