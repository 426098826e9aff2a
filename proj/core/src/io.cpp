#include "dln/io.hpp"

#include "dln/errors.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dln {

namespace fs = std::filesystem;

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ParseError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::ParseError, "write failed for " + path.string());
}

std::string matrix_to_csv(const Matrix& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
  return os.str();
}

Matrix matrix_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ParseError, "bad matrix entry '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::ParseError, "ragged matrix rows in CSV");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

Matrix read_matrix_csv(const fs::path& path) { return matrix_from_csv(read_text_file(path)); }

void write_matrix_csv(const fs::path& path, const Matrix& m) { write_text_file(path, matrix_to_csv(m)); }

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::ParseError, "matrix must be an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j.front().size()) : 0;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorKind::ParseError, "ragged matrix rows in JSON");
    }
    for (Index c = 0; c < cols; ++c) {
      const Json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorKind::ParseError, "matrix entries must be numbers");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

Json vector_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

namespace {

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, what + ": " + e.what());
  }
}

template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ParseError, what + ": " + e.what());
  }
}

}  // namespace

Json problem_to_json(const ProblemFile& p) {
  return Json{{"X", matrix_to_json(p.raw.X)}, {"Y", matrix_to_json(p.raw.Y)}, {"hidden_dims", p.hidden_dims}};
}

ProblemFile problem_from_json(const Json& j) {
  return guarded("problem", [&] {
    ProblemFile p;
    p.raw.X = matrix_from_json(j.at("X"));
    p.raw.Y = matrix_from_json(j.at("Y"));
    p.hidden_dims = j.at("hidden_dims").get<std::vector<Index>>();
    return p;
  });
}

ProblemFile read_problem(const fs::path& path) {
  return problem_from_json(parse_json(read_text_file(path), path.string()));
}

Json assumption_report_to_json(const AssumptionReport& r) {
  return Json{{"dimension_order", r.dimension_order},
              {"full_rank", r.full_rank},
              {"distinct_singular_values", r.distinct_singular_values},
              {"distinct_critical_values", r.distinct_critical_values},
              {"min_singular_value", r.min_singular_value},
              {"min_singular_gap", r.min_singular_gap},
              {"min_critical_gap", r.min_critical_gap},
              {"all_pass", r.all_pass()}};
}

Json weights_to_json(const WeightTuple& w) {
  Json layers = Json::array();
  for (const Matrix& m : w.layers()) layers.push_back(matrix_to_json(m));
  return Json{{"H", w.H()}, {"weights", std::move(layers)}};
}

WeightTuple weights_from_json(const Json& j) {
  return guarded("weights", [&] {
    std::vector<Matrix> layers;
    for (const Json& m : j.at("weights")) layers.push_back(matrix_from_json(m));
    WeightTuple w(std::move(layers));
    if (j.contains("H") && j.at("H").get<int>() != w.H()) {
      throw Error(ErrorKind::ParseError, "H does not match the number of layers");
    }
    return w;
  });
}

WeightTuple read_weights(const fs::path& path) {
  return weights_from_json(parse_json(read_text_file(path), path.string()));
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream os;
  os << std::setprecision(17) << "t,loss,grad_norm";
  const char* suffix = traj.conserved() ? "" : "_nonconserved";
  for (std::size_t j = 0; j < traj.invariant_drifts.size(); ++j) os << ",drift_" << j + 1 << suffix;
  os << '\n';
  for (std::size_t k = 0; k < traj.rows(); ++k) {
    os << traj.times[k] << ',' << traj.losses[k] << ',' << traj.grad_norms[k];
    for (const auto& d : traj.invariant_drifts) os << ',' << d[k];
    os << '\n';
  }
  return os.str();
}

Json trajectory_to_json(const Trajectory& traj) {
  Json snaps = Json::array();
  for (const Snapshot& s : traj.snapshots) snaps.push_back(Json{{"t", s.t}, {"weights", weights_to_json(s.weights)}});
  return Json{{"method", std::string(to_string(traj.method))},
              {"stop_reason", std::string(to_string(traj.stop_reason))},
              {"conserved", traj.conserved()},
              {"accepted_steps", traj.accepted_steps},
              {"rejected_steps", traj.rejected_steps},
              {"times", traj.times},
              {"losses", traj.losses},
              {"grad_norms", traj.grad_norms},
              {"invariant_drifts", traj.invariant_drifts},
              {"snapshots", std::move(snaps)},
              {"terminal", weights_to_json(traj.terminal)}};
}

Trajectory trajectory_from_json(const Json& j) {
  return guarded("trajectory", [&] {
    Trajectory t;
    t.method = integration_method_from_string(j.at("method").get<std::string>());
    t.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    t.accepted_steps = j.at("accepted_steps").get<long>();
    t.rejected_steps = j.at("rejected_steps").get<long>();
    t.times = j.at("times").get<std::vector<double>>();
    t.losses = j.at("losses").get<std::vector<double>>();
    t.grad_norms = j.at("grad_norms").get<std::vector<double>>();
    t.invariant_drifts = j.at("invariant_drifts").get<std::vector<std::vector<double>>>();
    for (const Json& s : j.at("snapshots")) t.snapshots.push_back({s.at("t").get<double>(), weights_from_json(s.at("weights"))});
    t.terminal = weights_from_json(j.at("terminal"));
    return t;
  });
}

namespace {

std::string plain_subset(const IndexSet& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += ' ';
    out += std::to_string(s[k] + 1);
  }
  return out;
}

Json one_based(const IndexSet& s) {
  Json a = Json::array();
  for (int i : s) a.push_back(i + 1);
  return a;
}

IndexSet zero_based(const Json& j) {
  IndexSet s;
  for (const Json& v : j) s.push_back(v.get<int>() - 1);
  return s;
}

}  // namespace

Json table_to_json(const CriticalValueTable& table) {
  const auto d_y = static_cast<int>(table.sigma.size());
  Json entries = Json::array();
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& e = table.entries[k];
    entries.push_back(Json{{"index", k}, {"subset", one_based(e.subset)}, {"fitted", one_based(e.fitted(d_y))},
                           {"value", e.value}});
  }
  return Json{{"sigma", vector_to_json(table.sigma)}, {"entries", std::move(entries)}};
}

std::string table_to_csv(const CriticalValueTable& table) {
  const auto d_y = static_cast<int>(table.sigma.size());
  std::ostringstream os;
  os << std::setprecision(17) << "index,subset,fitted,value\n";
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& e = table.entries[k];
    os << k << ',' << plain_subset(e.subset) << ',' << plain_subset(e.fitted(d_y)) << ',' << e.value << '\n';
  }
  return os.str();
}

std::string table_to_text(const CriticalValueTable& table) {
  const auto d_y = static_cast<int>(table.sigma.size());
  std::ostringstream os;
  os << std::left << std::setw(7) << "index" << std::setw(16) << "unfitted" << std::setw(16) << "fitted"
     << "value\n";
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& e = table.entries[k];
    os << std::left << std::setw(7) << k << std::setw(16) << format_subset(e.subset) << std::setw(16)
       << format_subset(e.fitted(d_y)) << std::setprecision(12) << e.value << '\n';
  }
  return os.str();
}

Json report_to_json(const CriticalPointReport& r) {
  return Json{{"grad_norm", r.grad_norm},
              {"r", r.r},
              {"r_Z", r.r_Z},
              {"fitted_subset", one_based(r.fitted_subset)},
              {"loss", r.loss},
              {"matched_index", r.matched_index},
              {"matched_value", r.matched_value},
              {"matched_distance", r.matched_distance},
              {"max_offdiagonal", r.max_offdiagonal},
              {"condition_residuals",
               {{"transpose_fit", r.conditions.transpose_fit},
                {"tail", r.conditions.tail},
                {"symmetric", r.conditions.symmetric}}},
              {"consistent", r.consistent},
              {"global_minimum", r.global_minimum()}};
}

CriticalPointReport report_from_json(const Json& j) {
  return guarded("report", [&] {
    CriticalPointReport r;
    r.grad_norm = j.at("grad_norm").get<double>();
    r.r = j.at("r").get<Index>();
    r.r_Z = j.at("r_Z").get<Index>();
    r.fitted_subset = zero_based(j.at("fitted_subset"));
    r.loss = j.at("loss").get<double>();
    r.matched_index = j.at("matched_index").get<std::size_t>();
    r.matched_value = j.at("matched_value").get<double>();
    r.matched_distance = j.at("matched_distance").get<double>();
    r.max_offdiagonal = j.at("max_offdiagonal").get<double>();
    const Json& c = j.at("condition_residuals");
    r.conditions.transpose_fit = c.at("transpose_fit").get<double>();
    r.conditions.tail = c.at("tail").get<double>();
    r.conditions.symmetric = c.at("symmetric").get<double>();
    r.conditions.grad_norm = r.grad_norm;
    r.consistent = j.at("consistent").get<bool>();
    return r;
  });
}

std::string spectrum_to_csv(const HessianSpectrum& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < s.eigenvalues.size(); ++i) os << s.eigenvalues(i) << '\n';
  return os.str();
}

Json spectrum_to_json(const HessianSpectrum& s) {
  return Json{{"eigenvalues", vector_to_json(s.eigenvalues)},
              {"negative", s.negative},
              {"zero", s.zero},
              {"positive", s.positive},
              {"zero_tol", s.zero_tol},
              {"kernel_dimension", s.kernel_dimension()}};
}

Json tangent_report_to_json(const TangentKernelReport& r) {
  return Json{{"r", r.r},
              {"kernel_dimension", r.kernel_dimension},
              {"stratum_dimension", r.expected_dimension},
              {"closed_form_alternative", r.printed_dimension},
              {"tangent_rank", r.tangent_rank},
              {"max_annihilation", r.max_annihilation},
              {"max_angle", r.max_angle},
              {"negative", r.negative},
              {"positive", r.positive},
              {"passed", r.passed}};
}

}  // namespace dln
