#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "tipsc/data.hpp"
#include "tipsc/graph.hpp"
#include "tipsc/harness.hpp"
#include "tipsc/io.hpp"
#include "tipsc/metrics.hpp"
#include "tipsc/rng.hpp"
#include "tipsc/spectral.hpp"
#include "tipsc/theory.hpp"

namespace tipsc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kOutputDirEnv = "TIPSC_OUTPUT_DIR";

// Config keys that may also be given as flags. Flag values override file values.
const std::vector<std::pair<std::string, std::string>>& config_flags() {
  static const std::vector<std::pair<std::string, std::string>> flags = {
      {"d", "--d"},
      {"n", "--n"},
      {"s", "--s"},
      {"rho", "--rho"},
      {"sigma", "--sigma"},
      {"snr_db", "--snr-db,--snr_db"},
      {"rate", "--rate"},
      {"tau", "--tau"},
      {"tolerance", "--tolerance"},
      {"trials", "--trials"},
      {"seed", "--seed"},
      {"workers", "--workers"},
      {"sweep", "--sweep"},
      {"grid", "--grid"},
      {"calibration_trials", "--calibration-trials"},
      {"calibration_steps", "--calibration-steps"},
      {"c1", "--c1"},
      {"c2", "--c2"},
      {"c_eig", "--c-eig"},
      {"c_kappa", "--c-kappa"},
      {"C", "--C"},
      {"solver", "--solver"},
  };
  return flags;
}

struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_config_options(CLI::App* app, ConfigOptions& options, bool with_file) {
  if (with_file) app->add_option("--config", options.config_path, "key = value config file");
  for (const auto& [key, flag] : config_flags()) {
    app->add_option_function<std::string>(
        flag, [&options, key = key](const std::string& v) { options.values[key] = v; },
        fmt::format("config key '{}'", key));
  }
}

// Keys that select between alternatives: setting one on the command line clears the other.
void erase_alternatives(ConfigMap& map, const std::string& key) {
  auto drop = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) map.erase(k);
  };
  if (key == "rate") drop({"tau", "target_rate"});
  if (key == "tau") drop({"rate", "target_rate"});
  if (key == "sigma") drop({"snr_db"});
  if (key == "snr_db") drop({"sigma"});
  if (key == "seed") drop({"master_seed"});
}

ExperimentConfig resolve_config(const ConfigOptions& options) {
  ConfigMap map;
  if (!options.config_path.empty()) map = read_config_file(options.config_path);
  for (const auto& [key, value] : options.values) {
    erase_alternatives(map, key);
    map[key] = value;
  }
  return config_from_map(map);
}

int exit_code_for(const std::string& kind) {
  if (kind == "parameter_error" || kind == "format_error" || kind == "usage_error" ||
      kind == "unsupported_operation")
    return kUsage;
  if (kind == "solver_error" || kind == "calibration_error" || kind == "degenerate_projection" ||
      kind == "inapplicable_bound")
    return kNumerical;
  return kFailure;
}

int report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  const int code = exit_code_for(kind);
  err << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

fs::path default_output(const std::string& stem, const std::string& extension) {
  fs::path dir = ".";
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) dir = env;
  fs::create_directories(dir);
  return dir / (stem + extension);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

json calibration_json(const CalibrationResult& c) {
  return {{"tau", c.tau},
          {"rate", c.rate},
          {"p_hat", c.p_hat},
          {"q_hat", c.q_hat},
          {"bracket_lower", c.bracket_lower},
          {"bracket_upper", c.bracket_upper}};
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  ConfigOptions config;
  int trial = 0;
  std::string out;
  bool coefficients = false;
};

int cmd_generate(const GenerateArgs& args, std::ostream& out) {
  const ExperimentConfig config = resolve_config(args.config);
  if (args.trial < 0) throw ParameterError("generate: --trial must be >= 0");
  const auto spec = make_bases(config.d, config.s, config.n);
  const std::uint64_t seed = trial_seed(config.master_seed, args.trial);
  Dataset data = sample_points(spec, config.N(), seed);
  const double sigma = config.noise_sigma();
  if (sigma > 0.0) data = add_noise(data, sigma, rng::derive_seed(seed, 0, kNoisePurpose));

  const fs::path path = args.out.empty() ? default_output("dataset", ".tipsc") : fs::path(args.out);
  auto file = open_output(path);
  io::write_dataset(file, data, {.include_coefficients = args.coefficients});
  out << json{{"path", path.string()},
              {"N", data.size()},
              {"d", config.d},
              {"n", config.n},
              {"s", config.s},
              {"sigma", data.sigma},
              {"seed", seed},
              {"master_seed", config.master_seed},
              {"trial_index", args.trial}}
             .dump()
      << '\n';
  return kOk;
}

struct ClusterArgs {
  std::string input;
  std::optional<double> tau;
  std::optional<double> rate;
  double tolerance = 0.005;
  std::uint64_t seed = 1;
  std::string solver = "auto";
  std::string labels_out;
  std::string edges_out;
  std::string embedding_out;
};

int cmd_cluster(const ClusterArgs& args, std::ostream& out) {
  const Dataset data = io::load_dataset(args.input);
  if (args.tau && args.rate) throw ParameterError("cluster: give one of --tau and --rate");
  double tau = 0.0;
  json calibration = nullptr;
  if (args.tau) {
    tau = *args.tau;
  } else {
    const double rate = args.rate.value_or(0.2);
    const auto c = calibrate(data.spec, data.size(), data.sigma, rate, args.tolerance,
                             rng::derive_seed(args.seed, 0, kCalibrationPurpose));
    tau = c.tau;
    calibration = calibration_json(c);
  }
  const AdjacencyMatrix A = build_adjacency(data, tau);
  SolverOptions solver;
  solver.method = detail::parse_solver(args.solver);
  const SpectralEmbedding embedding = top_k_eigs(A, std::min(3, data.size()), solver);
  const ClusterAssignment assignment = extract_w(embedding);
  const ConnectionRates rates = connection_rates(A, data.labels);

  if (!args.labels_out.empty()) {
    auto file = open_output(args.labels_out);
    for (int s : assignment.signs) file << s << '\n';
  }
  if (!args.edges_out.empty()) {
    auto file = open_output(args.edges_out);
    io::write_edge_list(file, A);
    auto sidecar = open_output(args.edges_out + ".json");
    sidecar << io::adjacency_sidecar(A).dump(2) << '\n';
  }
  if (!args.embedding_out.empty()) {
    auto file = open_output(args.embedding_out);
    io::write_embedding(file, embedding, assignment);
  }

  json eigenvalues = json::array();
  for (Eigen::Index i = 0; i < embedding.eigenvalues.size(); ++i)
    eigenvalues.push_back(embedding.eigenvalues[i]);
  out << json{{"N", data.size()},
              {"tau", tau},
              {"gamma", error_rate(assignment.signs, data.labels)},
              {"p_hat", rates.p_hat},
              {"q_hat", rates.q_hat},
              {"eigenvalues", eigenvalues},
              {"gap", std::isnan(assignment.gap) ? json(nullptr) : json(assignment.gap)},
              {"gap_warning", assignment.gap_warning},
              {"max_residual", embedding.residuals.maxCoeff()},
              {"calibration", calibration}}
             .dump()
      << '\n';
  return kOk;
}

int cmd_calibrate(const ConfigOptions& options, std::ostream& out) {
  ExperimentConfig config = resolve_config(options);
  if (config.tau) throw ParameterError("calibrate: --tau makes calibration pointless; use --rate");
  const PreparedExperiment prepared = prepare(config);
  json j = calibration_json(*prepared.calibration);
  j["target_rate"] = *config.target_rate;
  j["tolerance"] = config.rate_tolerance;
  j["N"] = prepared.N;
  j["sigma"] = prepared.sigma;
  j["master_seed"] = config.master_seed;
  out << j.dump() << '\n';
  return kOk;
}

struct ExperimentArgs {
  ConfigOptions config;
  std::string out;
  std::string json_out;
  std::string trials_out;
};

int cmd_experiment(const ExperimentArgs& args, std::ostream& out) {
  const ExperimentConfig config = resolve_config(args.config);
  const SweepOutput result = run_sweep(config);

  const std::string stem = args.config.config_path.empty()
                               ? std::string("experiment")
                               : fs::path(args.config.config_path).stem().string();
  const fs::path path = args.out.empty() ? default_output(stem, ".csv") : fs::path(args.out);
  {
    auto file = open_output(path);
    io::write_sweep_csv(file, result.rows);
  }
  if (!args.json_out.empty()) {
    json rows = json::array();
    for (const auto& row : result.rows) rows.push_back(io::to_json(row));
    auto file = open_output(args.json_out);
    file << rows.dump(2) << '\n';
  }
  if (!args.trials_out.empty()) {
    std::vector<TrialResult> all;
    for (const auto& trials : result.trials) all.insert(all.end(), trials.begin(), trials.end());
    auto file = open_output(args.trials_out);
    io::write_trials_csv(file, all);
  }
  out << json{{"path", path.string()}, {"rows", result.rows.size()}}.dump() << '\n';
  return kOk;
}

int cmd_theory(const ConfigOptions& options, std::ostream& out) {
  const ExperimentConfig config = resolve_config(options);
  if (config.sweep) throw ParameterError("theory: evaluates one configuration; drop the sweep");
  const PreparedExperiment prepared = prepare(config);
  theory::ReportInputs in;
  in.d = config.d;
  in.n = config.n;
  in.s = config.s;
  in.N = prepared.N;
  in.aff = prepared.spec.aff();
  in.sigma = prepared.sigma;
  in.tau = prepared.tau;
  if (prepared.calibration) {
    in.p_reference = prepared.calibration->p_hat;
    in.q_reference = prepared.calibration->q_hat;
  } else {
    // Centres of the p and q brackets.
    const double tau_d = std::sqrt(static_cast<double>(config.d)) * prepared.tau;
    const double aff2 = prepared.spec.aff_squared();
    in.p_reference = theory::gaussian_tail(tau_d);
    in.q_reference = aff2 > 0.0 ? theory::gaussian_tail(tau_d / aff2) : 0.0;
  }
  json j = io::to_json(theory::make_report(in, config.constants));
  j["master_seed"] = config.master_seed;
  out << j.dump(2) << '\n';
  return kOk;
}

// Fast end-to-end checks; the full property suites live in the test binaries.
int cmd_selftest(std::ostream& out) {
  std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"philox known answer",
       [] {
         return rng::philox4x32({0, 0, 0, 0}, {0, 0}) ==
                rng::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u};
       }},
      {"affinity of the default bases",
       [] { return std::abs(make_bases(100, 50, 5000).aff() - std::sqrt(0.5)) < 1e-15; }},
      {"unit-norm samples",
       [] {
         const Dataset data = sample_points(make_bases(20, 10, 60), 40, 3);
         return (data.points.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12;
       }},
      {"error rate flip invariance",
       [] {
         const SignVector s = {1, -1, 1, 1}, l = {1, 1, -1, -1}, f = {-1, 1, -1, -1};
         return error_rate(s, l) == error_rate(f, l) && error_rate(l, l) == 0.0;
       }},
      {"complete graph spectrum",
       [] {
         const Eigen::MatrixXd A = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
         const auto e = top_k_eigs(A, 3);
         return std::abs(e.eigenvalues[0] - 3.0) < 1e-12 && std::abs(e.eigenvalues[2] + 1.0) < 1e-12;
       }},
      {"gaussian tail at 1",
       [] { return std::abs(theory::gaussian_tail(1.0) - 0.3173105078629142) < 1e-15; }},
      {"trial determinism and easy regime",
       [] {
         ExperimentConfig c;
         c.d = 50;
         c.n = 200;
         c.s = 0;
         c.rho = 2.0;
         c.trials = 2;
         c.calibration.trials = 3;
         const auto prepared = prepare(c);
         const TrialResult a = run_trial(prepared, 0);
         const TrialResult b = run_trial(prepared, 0);
         return a.gamma == b.gamma && a.lambda3_hat == b.lambda3_hat && a.gamma <= 0.02;
       }},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception&) {
      ok = false;
    }
    failed += !ok;
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
  }
  out << fmt::format("{} of {} checks passed\n", checks.size() - failed, checks.size());
  return failed == 0 ? kOk : kSelftestFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thresholded inner-product subspace clustering", "tipsc"};
  app.require_subcommand(1);

  GenerateArgs generate;
  auto* gen = app.add_subcommand("generate", "Sample a dataset and write it to a file");
  add_config_options(gen, generate.config, true);
  gen->add_option("--trial", generate.trial, "trial index used to derive the dataset seed");
  gen->add_option("--out,-o", generate.out, "output path");
  gen->add_flag("--coefficients", generate.coefficients, "also store the Gaussian coefficients");

  ClusterArgs cluster;
  auto* clu = app.add_subcommand("cluster", "Cluster a dataset file");
  clu->add_option("--input,-i", cluster.input, "dataset file")->required();
  clu->add_option("--tau", cluster.tau, "explicit threshold");
  clu->add_option("--rate", cluster.rate, "target connection rate (default 0.2)");
  clu->add_option("--tolerance", cluster.tolerance, "calibration tolerance");
  clu->add_option("--seed", cluster.seed, "master seed for calibration");
  clu->add_option("--solver", cluster.solver, "auto, lanczos or dense");
  clu->add_option("--labels-out", cluster.labels_out, "write predicted signs, one per line");
  clu->add_option("--edges-out", cluster.edges_out, "write the edge list (+ .json sidecar)");
  clu->add_option("--embedding-out", cluster.embedding_out, "write eigenvalues and w");

  ConfigOptions calibrate_options;
  auto* cal = app.add_subcommand("calibrate", "Find tau for a target connection rate");
  add_config_options(cal, calibrate_options, true);

  ExperimentArgs experiment;
  auto* exp = app.add_subcommand("experiment", "Run a configured sweep and write CSV");
  add_config_options(exp, experiment.config, true);
  exp->add_option("--out,-o", experiment.out,
                  fmt::format("CSV path (default: ${}/<config>.csv)", kOutputDirEnv));
  exp->add_option("--json", experiment.json_out, "also write rows as JSON");
  exp->add_option("--trials-out", experiment.trials_out, "write per-trial CSV");

  ConfigOptions theory_options;
  auto* the = app.add_subcommand("theory", "Evaluate the bounds at one configuration");
  add_config_options(the, theory_options, true);

  auto* self = app.add_subcommand("selftest", "Run quick consistency checks");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage_error", e.what());
  }

  try {
    if (gen->parsed()) return cmd_generate(generate, out);
    if (clu->parsed()) return cmd_cluster(cluster, out);
    if (cal->parsed()) return cmd_calibrate(calibrate_options, out);
    if (exp->parsed()) return cmd_experiment(experiment, out);
    if (the->parsed()) return cmd_theory(theory_options, out);
    if (self->parsed()) return cmd_selftest(out);
  } catch (const Error& e) {
    return report_error(err, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, "format_error", e.what());
  } catch (const std::exception& e) {
    return report_error(err, "internal_error", e.what());
  }
  return report_error(err, "usage_error", "no subcommand");
}

}  // namespace tipsc::cli
