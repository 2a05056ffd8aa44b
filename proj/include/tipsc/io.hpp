#pragma once

// File formats.
//
// Dataset container (docs/FORMATS.md): an ASCII header of "key value" lines
// opened by "tipsc-dataset 1" and closed by "end", followed by a binary
// payload of little-endian IEEE-754 values:
//   labels        N x int8 (+1 / -1)
//   points        N x columns float64, row-major (later coordinates are zero)
//   coefficients  N x d float64, row-major (only when "coefficients 1")

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "tipsc/data.hpp"
#include "tipsc/errors.hpp"
#include "tipsc/graph.hpp"
#include "tipsc/harness.hpp"
#include "tipsc/metrics.hpp"
#include "tipsc/spectral.hpp"
#include "tipsc/theory.hpp"

namespace tipsc::io {

inline constexpr const char* kDatasetMagic = "tipsc-dataset";
inline constexpr int kDatasetVersion = 1;

namespace detail {

inline void write_f64(std::ostream& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double read_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw FormatError("dataset: truncated payload");
  }
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

/// Shortest text that parses back to the same double.
inline std::string exact(double value) { return fmt::format("{}", value); }

}  // namespace detail

struct DatasetWriteOptions {
  bool include_coefficients = false;
};

inline void write_dataset(std::ostream& out, const Dataset& data,
                          const DatasetWriteOptions& options = {}) {
  const auto& spec = data.spec;
  const bool coeffs = options.include_coefficients && data.coefficients.has_value();
  out << kDatasetMagic << ' ' << kDatasetVersion << '\n';
  out << "d " << spec.d() << '\n';
  out << "n " << spec.n() << '\n';
  out << "s " << spec.s() << '\n';
  out << "N " << data.size() << '\n';
  out << "sigma " << detail::exact(data.sigma) << '\n';
  out << "seed " << data.seed << '\n';
  out << "noise_seed " << data.noise_seed << '\n';
  out << "canonical " << (spec.canonical() ? 1 : 0) << '\n';
  if (!spec.canonical()) {
    out << "spectrum";
    for (double lambda : spec.spectrum()) out << ' ' << detail::exact(lambda);
    out << '\n';
  }
  out << "columns " << data.active_columns << '\n';
  out << "coefficients " << (coeffs ? 1 : 0) << '\n';
  out << "encoding float64-le\n";
  out << "end\n";
  for (int label : data.labels) out.put(static_cast<char>(static_cast<std::int8_t>(label)));
  for (int i = 0; i < data.size(); ++i)
    for (int k = 0; k < data.active_columns; ++k) detail::write_f64(out, data.points(i, k));
  if (coeffs) {
    const auto& a = *data.coefficients;
    for (int i = 0; i < data.size(); ++i)
      for (int k = 0; k < spec.d(); ++k) detail::write_f64(out, a(i, k));
  }
  if (!out) throw FormatError("dataset: write failed");
}

inline Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: empty input");
  {
    std::istringstream magic(line);
    std::string word;
    int version = 0;
    magic >> word >> version;
    if (word != kDatasetMagic) throw FormatError("dataset: bad magic line");
    if (version != kDatasetVersion) {
      throw FormatError(fmt::format("dataset: unsupported version {}", version));
    }
  }
  std::map<std::string, std::string> header;
  bool closed = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      closed = true;
      break;
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) throw FormatError("dataset: malformed header line");
    header[line.substr(0, space)] = line.substr(space + 1);
  }
  if (!closed) throw FormatError("dataset: header not terminated by 'end'");
  auto field = [&](const char* key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw FormatError(fmt::format("dataset: missing header field '{}'", key));
    return it->second;
  };
  auto integer = [&](const char* key) {
    try {
      return std::stoll(field(key));
    } catch (const std::logic_error&) {
      throw FormatError(fmt::format("dataset: field '{}' is not an integer", key));
    }
  };
  if (header.contains("encoding") && field("encoding") != "float64-le") {
    throw FormatError("dataset: unsupported encoding");
  }

  const int d = static_cast<int>(integer("d"));
  const int n = static_cast<int>(integer("n"));
  const int s = static_cast<int>(integer("s"));
  const int N = static_cast<int>(integer("N"));
  const int columns = static_cast<int>(integer("columns"));
  const bool coeffs = integer("coefficients") != 0;

  Dataset data;
  if (integer("canonical") != 0) {
    data.spec = make_bases(d, s, n);
  } else {
    std::istringstream values(field("spectrum"));
    std::vector<double> spectrum;
    double lambda = 0.0;
    while (values >> lambda) spectrum.push_back(lambda);
    data.spec = make_bases(d, std::move(spectrum), n);
  }
  if (N < 0 || columns < 0 || columns > n) throw FormatError("dataset: bad dimensions");
  data.sigma = std::stod(field("sigma"));
  data.seed = std::stoull(field("seed"));
  data.noise_seed = header.contains("noise_seed") ? std::stoull(field("noise_seed")) : 0;
  data.active_columns = columns;
  data.labels.resize(N);
  for (int i = 0; i < N; ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError("dataset: truncated labels");
    data.labels[i] = static_cast<std::int8_t>(c);
    if (data.labels[i] != 1 && data.labels[i] != -1) throw FormatError("dataset: bad label");
  }
  data.points = RowMatrix::Zero(N, n);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < columns; ++k) data.points(i, k) = detail::read_f64(in);
  if (coeffs) {
    RowMatrix a(N, d);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < d; ++k) a(i, k) = detail::read_f64(in);
    data.coefficients = std::move(a);
  }
  return data;
}

inline void save_dataset(const std::string& path, const Dataset& data,
                         const DatasetWriteOptions& options = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path));
  write_dataset(out, data, options);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open dataset '{}'", path));
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// Adjacency export: "i j" per edge (0-based, i < j) plus a JSON sidecar.

inline void write_edge_list(std::ostream& out, const AdjacencyMatrix& A) {
  for (int i = 0; i < A.size(); ++i)
    for (int j = i + 1; j < A.size(); ++j)
      if (A(i, j)) out << i << ' ' << j << '\n';
}

inline nlohmann::json adjacency_sidecar(const AdjacencyMatrix& A) {
  return {{"N", A.size()}, {"tau", A.tau()}, {"edges", A.edge_count()}};
}

inline AdjacencyMatrix read_edge_list(std::istream& edges, const nlohmann::json& sidecar) {
  const int N = sidecar.at("N").get<int>();
  std::vector<std::uint8_t> entries(static_cast<std::size_t>(N) * N, 0);
  int i = 0, j = 0;
  while (edges >> i >> j) {
    if (i < 0 || j < 0 || i >= N || j >= N || i >= j) {
      throw FormatError(fmt::format("edge list: invalid pair ({}, {})", i, j));
    }
    entries[static_cast<std::size_t>(i) * N + j] = 1;
    entries[static_cast<std::size_t>(j) * N + i] = 1;
  }
  if (!edges.eof()) throw FormatError("edge list: malformed line");
  return AdjacencyMatrix::from_entries(N, std::move(entries), sidecar.at("tau").get<double>());
}

// ---------------------------------------------------------------------------
// Embedding dump: eigenvalues, gap, then w one value per line.

inline void write_embedding(std::ostream& out, const SpectralEmbedding& embedding,
                            const ClusterAssignment& assignment) {
  out << "eigenvalues";
  for (Eigen::Index i = 0; i < embedding.eigenvalues.size(); ++i)
    out << ' ' << detail::exact(embedding.eigenvalues[i]);
  out << "\ngap " << detail::exact(assignment.gap) << "\nw\n";
  for (Eigen::Index i = 0; i < assignment.w.size(); ++i) out << detail::exact(assignment.w[i]) << '\n';
}

// ---------------------------------------------------------------------------
// CSV. Numbers are printed in shortest round-trip form; NaN prints as "nan".

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

inline std::string flag(bool b) { return b ? "1" : "0"; }

inline std::string join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  return line;
}

}  // namespace detail

inline const std::vector<std::string>& trial_csv_columns() {
  static const std::vector<std::string> columns = {
      "trial_index", "seed", "master_seed", "d", "n", "s", "N", "sigma", "tau",
      "gamma", "p_hat", "q_hat", "lambda1_hat", "lambda2_hat", "lambda3_hat", "gap",
      "max_residual", "event_norm", "event_overlap", "event_inner", "event_t",
      "event_norm_ok", "event_overlap_ok", "event_inner_ok", "p_lower", "p_upper",
      "q_lower", "q_upper", "lambda3_bound", "theorem_bound", "lemma_pq_stat",
      "row_sum_p95", "degenerate", "gap_warning"};
  return columns;
}

inline std::string trial_csv_row(const TrialResult& r) {
  using detail::flag;
  using detail::num;
  return detail::join({std::to_string(r.trial_index), std::to_string(r.seed),
                       std::to_string(r.master_seed), std::to_string(r.d), std::to_string(r.n),
                       std::to_string(r.s), std::to_string(r.N), num(r.sigma), num(r.tau),
                       num(r.gamma), num(r.p_hat), num(r.q_hat), num(r.lambda1_hat),
                       num(r.lambda2_hat), num(r.lambda3_hat), num(r.gap), num(r.max_residual),
                       num(r.events.norm_deviation), num(r.events.overlap_deviation),
                       num(r.events.max_inner_product), num(r.events.t), flag(r.events.norm_ok),
                       flag(r.events.overlap_ok), flag(r.events.inner_ok), num(r.p_lower),
                       num(r.p_upper), num(r.q_lower), num(r.q_upper), num(r.lambda3_bound),
                       num(r.theorem_bound), num(r.lemma_pq_stat), num(r.row_sum_p95),
                       flag(r.degenerate), flag(r.gap_warning)});
}

inline void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& results) {
  out << detail::join(trial_csv_columns()) << '\n';
  for (const auto& r : results) out << trial_csv_row(r) << '\n';
}

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> columns = {
      "sweep_parameter", "grid_value", "d", "n", "s", "rho", "N", "sigma", "snr_db",
      "target_rate", "tau", "tolerance", "trials", "master_seed", "aff", "kappa",
      "mean_gamma", "std_gamma", "mean_p_hat", "std_p_hat", "mean_q_hat", "std_q_hat",
      "mean_rate", "mean_gap", "std_gap", "gap_positive_fraction", "mean_lambda1",
      "mean_lambda2", "mean_lambda3", "std_lambda3", "mean_lambda3_bound",
      "lambda3_coverage", "p_coverage", "q_coverage", "mean_lemma_pq_stat",
      "mean_row_sum_p95", "theory_bound", "theory_applicable", "degenerate_trials"};
  return columns;
}

inline std::string sweep_csv_row(const SweepRow& row) {
  using detail::num;
  const auto& c = row.config;
  const auto& s = row.summary;
  // The configured value when given, so the row reproduces the same sigma bit for bit.
  const double snr = c.snr_db                ? *c.snr_db
                     : row.sigma > 0.0 ? sigma_to_snr(row.sigma)
                                       : std::numeric_limits<double>::quiet_NaN();
  return detail::join(
      {row.parameter, num(row.value), std::to_string(c.d), std::to_string(c.n),
       std::to_string(c.s), num(c.rho), std::to_string(row.N), num(row.sigma), num(snr),
       c.target_rate ? num(*c.target_rate) : "nan", num(row.tau), num(c.rate_tolerance),
       std::to_string(c.trials), std::to_string(c.master_seed), num(row.aff), num(row.kappa),
       num(s.gamma.mean), num(s.gamma.stddev), num(s.p_hat.mean), num(s.p_hat.stddev),
       num(s.q_hat.mean), num(s.q_hat.stddev), num(0.5 * (s.p_hat.mean + s.q_hat.mean)),
       num(s.gap.mean), num(s.gap.stddev), num(s.gap_positive_fraction),
       num(s.lambda1_hat.mean), num(s.lambda2_hat.mean), num(s.lambda3_hat.mean),
       num(s.lambda3_hat.stddev), num(s.lambda3_bound.mean), num(row.lambda3_coverage),
       num(row.p_coverage), num(row.q_coverage), num(row.mean_lemma_pq_stat),
       num(row.mean_row_sum_p95), num(row.theorem_bound), detail::flag(row.theorem_applicable),
       std::to_string(s.degenerate_trials)});
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << detail::join(sweep_csv_columns()) << '\n';
  for (const auto& row : rows) out << sweep_csv_row(row) << '\n';
}

/// Splits one CSV file into its header and rows (no quoting; fields never contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError(fmt::format("csv: missing column '{}'", name));
  }
};

inline CsvTable read_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream s(line);
    std::string f;
    while (std::getline(s, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
  };
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: empty input");
  table.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != table.header.size()) throw FormatError("csv: ragged row");
    table.rows.push_back(std::move(fields));
  }
  return table;
}

// ---------------------------------------------------------------------------
// JSON views.

inline nlohmann::json to_json(const theory::TheoryReport& r) {
  auto nan_safe = [](double v) -> nlohmann::json {
    if (std::isnan(v) || std::isinf(v)) return nullptr;
    return v;
  };
  nlohmann::json j;
  j["d"] = r.d;
  j["n"] = r.n;
  j["s"] = r.s;
  j["N"] = r.N;
  j["rho"] = r.rho;
  j["sigma"] = r.sigma;
  j["tau"] = r.tau;
  j["aff"] = r.aff;
  j["kappa"] = r.kappa;
  j["pq_gap_scale"] = r.kappa;
  j["t"] = r.t;
  j["p_reference"] = r.p_reference;
  j["phi_tau"] = r.phi_tau;
  j["p_lower"] = r.phi_tau;
  j["p_upper"] = r.p_upper;
  j["q_applicable"] = r.q_applicable;
  j["q_lower"] = r.q_applicable ? nlohmann::json(r.q_lower) : nlohmann::json(nullptr);
  j["q_upper"] = r.q_applicable ? nlohmann::json(r.q_upper) : nlohmann::json(nullptr);
  j["slack"] = r.slack;
  j["lambda1_target"] = r.lambda1_target;
  j["lambda2_target"] = r.lambda2_target;
  j["lambda3_bound"] = r.lambda3_bound;
  j["applicability"] = r.theorem_applicable;
  j["applicability_threshold"] = r.applicability_threshold;
  j["theorem_bound"] = nan_safe(r.theorem_bound);
  j["constants"] = {{"c1", r.constants.c1},
                    {"c2", r.constants.c2},
                    {"c_eig", r.constants.c_eig},
                    {"c_kappa", r.constants.c_kappa},
                    {"C", r.constants.C}};
  return j;
}

inline nlohmann::json to_json(const SweepRow& row) {
  nlohmann::json j;
  const auto& columns = sweep_csv_columns();
  const std::string csv = sweep_csv_row(row);
  std::istringstream s(csv);
  std::string field;
  std::size_t i = 0;
  while (std::getline(s, field, ',') && i < columns.size()) {
    if (field == "nan") {
      j[columns[i]] = nullptr;
    } else if (i == 0) {
      j[columns[i]] = field;
    } else {
      j[columns[i]] = std::stod(field);
    }
    ++i;
  }
  return j;
}

}  // namespace tipsc::io
