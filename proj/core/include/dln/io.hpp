#pragma once

#include "dln/flow.hpp"
#include "dln/hessian.hpp"
#include "dln/landscape.hpp"
#include "dln/linalg.hpp"
#include "dln/network.hpp"
#include "dln/reduction.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dln {

using Json = nlohmann::json;

// Plain text. Writers create missing parent directories; readers throw ParseError.

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
std::string content_hash(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// One row per line, comma-separated, no header, 17 significant digits.
std::string matrix_to_csv(const Matrix& m);
Matrix matrix_from_csv(const std::string& text);
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

/// {"X": [[...]], "Y": [[...]], "hidden_dims": [...]}; other keys are ignored on read.
struct ProblemFile {
  RawProblem raw;
  std::vector<Index> hidden_dims;
};

Json problem_to_json(const ProblemFile& p);
ProblemFile problem_from_json(const Json& j);
ProblemFile read_problem(const std::filesystem::path& path);

Json assumption_report_to_json(const AssumptionReport& r);

/// {"H": n, "weights": [W_1, ..., W_{H+1}]}, each W_j as nested rows.
Json weights_to_json(const WeightTuple& w);
WeightTuple weights_from_json(const Json& j);
WeightTuple read_weights(const std::filesystem::path& path);

/// Columns t, loss, grad_norm, drift_1..drift_H; the drift columns are named
/// drift_j_nonconserved for the discrete method.
std::string trajectory_to_csv(const Trajectory& traj);
Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& j);

Json table_to_json(const CriticalValueTable& table);
/// Columns index, subset, fitted, value (subsets 1-based, space separated).
std::string table_to_csv(const CriticalValueTable& table);
/// Aligned human-readable listing.
std::string table_to_text(const CriticalValueTable& table);

Json report_to_json(const CriticalPointReport& r);
CriticalPointReport report_from_json(const Json& j);

/// One eigenvalue per line.
std::string spectrum_to_csv(const HessianSpectrum& s);
Json spectrum_to_json(const HessianSpectrum& s);
Json tangent_report_to_json(const TangentKernelReport& r);

}  // namespace dln
