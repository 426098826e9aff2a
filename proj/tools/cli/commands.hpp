#pragma once

#include <dln/experiments.hpp>
#include <dln/flow.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dln::cli {

struct GenOptions {
  std::string dims;  ///< output-to-input chain "d_y,d_1,...,d_H,d_x"
  Index m = 0;       ///< 0 selects 2 d_x samples
  double scale = 1.0;
  std::uint64_t seed = 0;
  std::string output = "problem.json";
};

struct SimulateOptions {
  std::string problem;
  std::uint64_t seed = 0;
  double init_scale = 0.0;
  std::string init_file;
  IntegratorConfig integrator;
  std::string output = "trajectory";
};

struct LandscapeOptions {
  std::string problem;
  std::string output = "landscape";
};

struct HessianOptions {
  std::string problem;
  std::string saddle;
  std::string weights;
  std::uint64_t seed = 0;
  double zero_tol = 1e-7;
  std::string output = "hessian";
};

struct EscapeOptions {
  std::string saddle;
  double epsilon = 1e-3;
  bool tangent = false;
};

/// Inputs given as relative paths are looked up in the working directory
/// first and then under $DLNLAB_OUTPUT_DIR.
std::filesystem::path resolve_input(const std::string& path);

/// "2,3,4" -> {2, 3, 4}; throws ConfigInvalid.
std::vector<Index> parse_dims(const std::string& text);

// Each command returns its exit code; dln::Error escapes to the caller.
int cmd_gen(const GenOptions& opts, std::ostream& out);
int cmd_simulate(const SimulateOptions& opts, std::ostream& out);
int cmd_landscape(const LandscapeOptions& opts, std::ostream& out);
int cmd_hessian(const HessianOptions& opts, std::ostream& out);
int cmd_ovf(ExperimentConfig cfg, std::ostream& out);
int cmd_escape(ExperimentConfig cfg, const EscapeOptions& opts, std::ostream& out);
int cmd_defaults(std::ostream& out);

}  // namespace dln::cli
