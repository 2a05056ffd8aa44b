#pragma once

// Seeded experiment engine: config resolution, tau calibration (once per
// configuration), end-to-end trials and parameter sweeps.
//
// Trial i of a configuration uses seed derive_seed(master_seed, i), so results
// depend only on (config, trial index) and never on scheduling. Grid points of
// a sweep share trial seeds (common random numbers across the grid).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "tipsc/data.hpp"
#include "tipsc/errors.hpp"
#include "tipsc/graph.hpp"
#include "tipsc/metrics.hpp"
#include "tipsc/spectral.hpp"
#include "tipsc/theory.hpp"

namespace tipsc {

enum class SweepParameter { affinity, rho, connection_rate, snr_db, tau };

inline const char* to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::affinity: return "s";
    case SweepParameter::rho: return "rho";
    case SweepParameter::connection_rate: return "rate";
    case SweepParameter::snr_db: return "snr_db";
    case SweepParameter::tau: return "tau";
  }
  return "?";
}

inline SweepParameter parse_sweep_parameter(const std::string& name) {
  if (name == "s" || name == "affinity" || name == "aff") return SweepParameter::affinity;
  if (name == "rho") return SweepParameter::rho;
  if (name == "rate" || name == "connection_rate" || name == "target_rate")
    return SweepParameter::connection_rate;
  if (name == "snr_db" || name == "snr") return SweepParameter::snr_db;
  if (name == "tau") return SweepParameter::tau;
  throw ParameterError(fmt::format("unknown sweep parameter '{}'", name));
}

struct Sweep {
  SweepParameter parameter = SweepParameter::affinity;
  std::vector<double> grid;
};

struct ExperimentConfig {
  int d = 100;
  int n = 5000;
  int s = 50;
  double rho = 1.0;
  std::optional<double> sigma;
  std::optional<double> snr_db;
  std::optional<double> target_rate = 0.2;  // cleared when tau is set
  std::optional<double> tau;
  double rate_tolerance = 0.005;
  int trials = 20;
  std::uint64_t master_seed = 1;
  std::optional<Sweep> sweep;
  /// 0 selects std::thread::hardware_concurrency().
  int workers = 0;
  theory::Constants constants;
  CalibrationOptions calibration;
  SolverOptions solver;

  /// Two clusters of round(rho d) points each.
  int N() const { return 2 * static_cast<int>(std::lround(rho * d)); }

  double noise_sigma() const {
    if (sigma) return *sigma;
    if (snr_db) return snr_to_sigma(*snr_db);
    return 0.0;
  }

  void validate() const {
    if (target_rate && tau) throw ParameterError("config: set exactly one of rate and tau");
    if (!target_rate && !tau) throw ParameterError("config: one of rate or tau is required");
    if (sigma && snr_db) throw ParameterError("config: set at most one of sigma and snr_db");
    if (sigma && *sigma < 0.0) throw ParameterError("config: sigma must be >= 0");
    if (trials < 2) throw ParameterError("config: trials must be >= 2");
    if (!(rho > 0.0)) throw ParameterError("config: rho must be positive");
    if (N() < 4) throw ParameterError(fmt::format("config: derived N = {} is below 4", N()));
    if (tau) check_tau(*tau);
    if (target_rate && !(*target_rate > 0.0 && *target_rate < 1.0))
      throw ParameterError("config: rate must lie in (0, 1)");
    if (sweep && sweep->grid.empty()) throw ParameterError("config: sweep grid is empty");
    // Dimension constraints are checked by make_bases.
    (void)make_bases(d, s, n);
  }

  /// The configuration at one grid value of the sweep (sweep removed).
  ExperimentConfig at_grid_value(double value) const {
    ExperimentConfig c = *this;
    c.sweep.reset();
    if (!sweep) return c;
    switch (sweep->parameter) {
      case SweepParameter::affinity: c.s = static_cast<int>(std::lround(value)); break;
      case SweepParameter::rho: c.rho = value; break;
      case SweepParameter::connection_rate:
        c.target_rate = value;
        c.tau.reset();
        break;
      case SweepParameter::snr_db:
        c.snr_db = value;
        c.sigma.reset();
        break;
      case SweepParameter::tau:
        c.tau = value;
        c.target_rate.reset();
        break;
    }
    return c;
  }
};

/// Seed purposes; see rng::derive_seed.
inline constexpr std::uint64_t kTrialPurpose = 0x7121A1;
inline constexpr std::uint64_t kCalibrationPurpose = 0xCA1B;
inline constexpr std::uint64_t kNoisePurpose = 0x9015E;

inline std::uint64_t trial_seed(std::uint64_t master_seed, int trial_index) {
  return rng::derive_seed(master_seed, static_cast<std::uint64_t>(trial_index), kTrialPurpose);
}

/// A configuration with its geometry built and tau resolved.
struct PreparedExperiment {
  ExperimentConfig config;
  SubspacePairSpec spec;
  int N = 0;
  double sigma = 0.0;
  double tau = 0.0;
  std::optional<CalibrationResult> calibration;
};

/// Cache of calibrated tau values keyed by everything that determines them.
class TauCache {
 public:
  static TauCache& global() {
    static TauCache cache;
    return cache;
  }

  CalibrationResult get(const ExperimentConfig& c, double sigma) {
    const Key key{c.d, c.n, c.s, c.N(), sigma, *c.target_rate, c.rate_tolerance, c.master_seed,
                  c.calibration.trials, c.calibration.max_steps};
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    const CalibrationResult result =
        calibrate(make_bases(c.d, c.s, c.n), c.N(), sigma, *c.target_rate, c.rate_tolerance,
                  rng::derive_seed(c.master_seed, 0, kCalibrationPurpose), c.calibration);
    std::lock_guard lock(mutex_);
    entries_.emplace(key, result);
    return result;
  }

 private:
  using Key = std::tuple<int, int, int, int, double, double, double, std::uint64_t, int, int>;
  std::mutex mutex_;
  std::map<Key, CalibrationResult> entries_;
};

inline PreparedExperiment prepare(const ExperimentConfig& config) {
  config.validate();
  PreparedExperiment p;
  p.config = config;
  p.spec = make_bases(config.d, config.s, config.n);
  p.N = config.N();
  p.sigma = config.noise_sigma();
  if (config.tau) {
    p.tau = *config.tau;
  } else {
    p.calibration = TauCache::global().get(config, p.sigma);
    p.tau = p.calibration->tau;
  }
  return p;
}

/// An error raised inside a trial, tagged with the trial index.
class TrialError : public Error {
 public:
  TrialError(int trial_index, const Error& inner)
      : Error(fmt::format("trial {}: {}", trial_index, inner.what())),
        trial_index_(trial_index),
        inner_kind_(inner.kind()) {}
  const char* kind() const noexcept override { return inner_kind_.c_str(); }
  int trial_index() const noexcept { return trial_index_; }

 private:
  int trial_index_;
  std::string inner_kind_;
};

namespace detail {

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline TrialResult run_trial_unchecked(const PreparedExperiment& prepared, int trial_index) {
  const auto& config = prepared.config;
  const int N = prepared.N;
  TrialResult r;
  r.d = config.d;
  r.n = config.n;
  r.s = config.s;
  r.N = N;
  r.sigma = prepared.sigma;
  r.tau = prepared.tau;
  r.master_seed = config.master_seed;
  r.trial_index = trial_index;
  r.seed = trial_seed(config.master_seed, trial_index);

  Dataset data = sample_points(prepared.spec, N, r.seed);
  if (prepared.sigma > 0.0) {
    data = add_noise(data, prepared.sigma, rng::derive_seed(r.seed, 0, kNoisePurpose));
  }
  const Eigen::MatrixXd gram = gram_matrix(data);
  const AdjacencyMatrix A = threshold_gram(gram, prepared.tau);
  const ConnectionRates rates = connection_rates(A, data.labels);
  r.p_hat = rates.p_hat;
  r.q_hat = rates.q_hat;

  const SpectralEmbedding embedding = top_k_eigs(A, std::min(3, N), config.solver);
  r.lambda1_hat = embedding.eigenvalues[0];
  r.lambda2_hat = embedding.eigenvalues[1];
  if (embedding.k >= 3) r.lambda3_hat = embedding.eigenvalues[2];
  r.max_residual = embedding.residuals.maxCoeff();
  try {
    const ClusterAssignment assignment = extract_w(embedding);
    r.gamma = error_rate(assignment.signs, data.labels);
    r.gap = assignment.gap;
    r.gap_warning = assignment.gap_warning;
  } catch (const DegenerateProjectionError&) {
    r.degenerate = true;
    r.gamma = 0.5;
    if (embedding.k >= 3) r.gap = embedding.eigenvalues[1] - embedding.eigenvalues[2];
    r.gap_warning = !(r.gap > 0.0);
  }

  const auto& k = config.constants;
  const double t = theory::event_radius(config.d, N, k.c1);
  r.events = event_check(data, gram, t);
  try {
    const auto p = theory::lemma_p_bracket(prepared.tau, config.d, N, k.c1, k.c2);
    r.p_lower = p.lower;
    r.p_upper = p.upper;
  } catch (const InapplicableBoundError&) {
  }
  try {
    const auto q = theory::lemma_q_bracket(prepared.tau, config.d, N, prepared.spec.aff(), k.c1, k.c2);
    r.q_lower = q.lower;
    r.q_upper = q.upper;
  } catch (const InapplicableBoundError&) {
  }
  if (r.p_hat > 0.0) r.lambda3_bound = theory::lambda3_bound(N, r.p_hat, t, k.c_eig);
  if (prepared.spec.kappa() > 0.0) {
    r.theorem_bound = theory::theorem_error_bound(prepared.spec.kappa(), config.d, N,
                                                  N / (2.0 * config.d), prepared.sigma, config.n,
                                                  k.C);
  }
  r.lemma_pq_stat = theory::lemma_pq_stats(row_cross_rates(A, data.labels), r.q_hat);
  std::vector<double> deviations;
  deviations.reserve(2 * static_cast<std::size_t>(N));
  for (const auto& dev : centered_row_sums(A, data.labels, r.p_hat, r.q_hat)) {
    deviations.push_back(std::abs(dev.within));
    deviations.push_back(std::abs(dev.cross));
  }
  r.row_sum_p95 = percentile(std::move(deviations), 0.95);
  return r;
}

/// Runs fn(i) for i in [0, count) on `workers` threads; rethrows the first failure by index.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> failures(count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace detail

inline TrialResult run_trial(const PreparedExperiment& prepared, int trial_index) {
  try {
    return detail::run_trial_unchecked(prepared, trial_index);
  } catch (const TrialError&) {
    throw;
  } catch (const Error& e) {
    throw TrialError(trial_index, e);
  }
}

inline TrialResult run_trial(const ExperimentConfig& config, int trial_index) {
  return run_trial(prepare(config), trial_index);
}

/// All trials of one prepared configuration, in trial-index order.
inline std::vector<TrialResult> run_trials(const PreparedExperiment& prepared) {
  std::vector<TrialResult> results(prepared.config.trials);
  detail::parallel_for(prepared.config.trials, prepared.config.workers,
                       [&](int i) { results[i] = run_trial(prepared, i); });
  return results;
}

/// One aggregated row of a sweep.
struct SweepRow {
  std::string parameter;  // "none" when no sweep is configured
  double value = std::numeric_limits<double>::quiet_NaN();
  ExperimentConfig config;  // resolved configuration of this grid point
  int N = 0;
  double sigma = 0.0;
  double tau = 0.0;
  double aff = 0.0;
  double kappa = 0.0;
  TrialSummary summary;
  double theorem_bound = std::numeric_limits<double>::quiet_NaN();
  bool theorem_applicable = false;
  double p_coverage = std::numeric_limits<double>::quiet_NaN();
  double q_coverage = std::numeric_limits<double>::quiet_NaN();
  double lambda3_coverage = std::numeric_limits<double>::quiet_NaN();
  double mean_row_sum_p95 = std::numeric_limits<double>::quiet_NaN();
  double mean_lemma_pq_stat = std::numeric_limits<double>::quiet_NaN();
};

struct SweepOutput {
  std::vector<SweepRow> rows;
  std::vector<std::vector<TrialResult>> trials;  // per row, in trial order
};

inline SweepRow summarize_row(const PreparedExperiment& prepared,
                              const std::vector<TrialResult>& results) {
  SweepRow row;
  row.config = prepared.config;
  row.N = prepared.N;
  row.sigma = prepared.sigma;
  row.tau = prepared.tau;
  row.aff = prepared.spec.aff();
  row.kappa = prepared.spec.kappa();
  row.summary = aggregate(results);
  const auto& k = prepared.config.constants;
  if (row.kappa > 0.0) {
    row.theorem_bound = theory::theorem_error_bound(row.kappa, prepared.config.d, prepared.N,
                                                    prepared.N / (2.0 * prepared.config.d),
                                                    prepared.sigma, prepared.config.n, k.C);
  }
  row.theorem_applicable = theory::applicability(row.kappa, prepared.config.d, prepared.N, k.c_kappa);
  const auto count = static_cast<double>(results.size());
  int p_in = 0, q_in = 0, l3_in = 0;
  bool q_defined = false;
  double row_p95 = 0.0, pq = 0.0;
  for (const auto& r : results) {
    p_in += r.p_in_bracket();
    if (!std::isnan(r.q_lower)) q_defined = true;
    q_in += r.q_in_bracket();
    l3_in += r.lambda3_hat < r.lambda3_bound;
    row_p95 += r.row_sum_p95;
    pq += r.lemma_pq_stat;
  }
  row.p_coverage = p_in / count;
  if (q_defined) row.q_coverage = q_in / count;
  row.lambda3_coverage = l3_in / count;
  row.mean_row_sum_p95 = row_p95 / count;
  row.mean_lemma_pq_stat = pq / count;
  return row;
}

/// Runs every grid point (or the single configuration when no sweep is set).
inline SweepOutput run_sweep(const ExperimentConfig& config) {
  if (config.sweep && config.sweep->grid.empty()) {
    throw ParameterError("run_sweep: empty grid");
  }
  std::vector<double> grid =
      config.sweep ? config.sweep->grid
                   : std::vector<double>{std::numeric_limits<double>::quiet_NaN()};
  const int points = static_cast<int>(grid.size());
  std::vector<PreparedExperiment> prepared(points);
  detail::parallel_for(points, config.workers,
                       [&](int g) { prepared[g] = prepare(config.at_grid_value(grid[g])); });

  const int trials = config.trials;
  SweepOutput out;
  out.trials.assign(points, std::vector<TrialResult>(trials));
  detail::parallel_for(points * trials, config.workers, [&](int task) {
    const int g = task / trials;
    const int i = task % trials;
    out.trials[g][i] = run_trial(prepared[g], i);
  });
  for (int g = 0; g < points; ++g) {
    SweepRow row = summarize_row(prepared[g], out.trials[g]);
    row.parameter = config.sweep ? to_string(config.sweep->parameter) : "none";
    row.value = grid[g];
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config files: flat "key = value" lines, '#' starts a comment.

using ConfigMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError(fmt::format("config line {}: empty key", line_no));
    map[key] = value;
  }
  return map;
}

inline ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open config file '{}'", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw FormatError(fmt::format("config key '{}': '{}' is not a number", key, value));
  }
}

inline long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw FormatError(fmt::format("config key '{}': '{}' is not an integer", key, value));
  }
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value.starts_with('-')) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw FormatError(fmt::format("config key '{}': '{}' is not an unsigned integer", key, value));
  }
}

/// "a,b,c" or "start:step:stop" (inclusive).
inline std::vector<double> parse_grid(const std::string& key, const std::string& value) {
  std::vector<double> grid;
  if (value.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::istringstream in(value);
    std::string part;
    while (std::getline(in, part, ':')) parts.push_back(parse_double(key, trim(part)));
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
      throw FormatError(fmt::format("config key '{}': range must be start:step:stop", key));
    }
    const auto steps = static_cast<int>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
    // Round away accumulated binary error so 0.02:0.02:0.3 ends at 0.3.
    for (int i = 0; i <= steps; ++i)
      grid.push_back(std::stod(fmt::format("{:.12g}", parts[0] + i * parts[1])));
    return grid;
  }
  std::istringstream in(value);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) grid.push_back(parse_double(key, part));
  }
  return grid;
}

inline SolverMethod parse_solver(const std::string& value) {
  if (value == "auto" || value == "automatic") return SolverMethod::automatic;
  if (value == "lanczos") return SolverMethod::lanczos;
  if (value == "dense") return SolverMethod::dense;
  throw FormatError(fmt::format("config key 'solver': unknown method '{}'", value));
}

}  // namespace detail

/// Builds a config from key/value pairs. Unknown keys are rejected.
inline ExperimentConfig config_from_map(const ConfigMap& map) {
  ExperimentConfig c;
  std::optional<std::string> sweep_name;
  std::optional<std::vector<double>> grid;
  for (const auto& [key, value] : map) {
    using namespace detail;
    if (key == "d") c.d = static_cast<int>(parse_integer(key, value));
    else if (key == "n") c.n = static_cast<int>(parse_integer(key, value));
    else if (key == "s") c.s = static_cast<int>(parse_integer(key, value));
    else if (key == "rho") c.rho = parse_double(key, value);
    else if (key == "sigma") c.sigma = parse_double(key, value);
    else if (key == "snr_db") c.snr_db = parse_double(key, value);
    else if (key == "rate" || key == "target_rate") c.target_rate = parse_double(key, value);
    else if (key == "tau") c.tau = parse_double(key, value);
    else if (key == "tolerance") c.rate_tolerance = parse_double(key, value);
    else if (key == "trials") c.trials = static_cast<int>(parse_integer(key, value));
    else if (key == "seed" || key == "master_seed") c.master_seed = parse_unsigned(key, value);
    else if (key == "workers") c.workers = static_cast<int>(parse_integer(key, value));
    else if (key == "sweep") sweep_name = value;
    else if (key == "grid") grid = parse_grid(key, value);
    else if (key == "calibration_trials") c.calibration.trials = static_cast<int>(parse_integer(key, value));
    else if (key == "calibration_steps") c.calibration.max_steps = static_cast<int>(parse_integer(key, value));
    else if (key == "c1") c.constants.c1 = parse_double(key, value);
    else if (key == "c2") c.constants.c2 = parse_double(key, value);
    else if (key == "c_eig") c.constants.c_eig = parse_double(key, value);
    else if (key == "c_kappa") c.constants.c_kappa = parse_double(key, value);
    else if (key == "C") c.constants.C = parse_double(key, value);
    else if (key == "solver") c.solver.method = parse_solver(value);
    else throw FormatError(fmt::format("unknown config key '{}'", key));
  }
  if (sweep_name.has_value() != grid.has_value()) {
    throw FormatError("config: 'sweep' and 'grid' must be given together");
  }
  if (sweep_name && *sweep_name != "none") {
    c.sweep = Sweep{parse_sweep_parameter(*sweep_name), *grid};
  }
  // An explicit tau replaces the default rate target unless both were written down.
  if (c.tau && !map.contains("rate") && !map.contains("target_rate")) c.target_rate.reset();
  return c;
}

}  // namespace tipsc
