#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "tipsc/harness.hpp"
#include "tipsc/io.hpp"

using namespace tipsc;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.d = 30;
  c.n = 200;
  c.s = 15;
  c.rho = 1.0;
  c.trials = 4;
  c.target_rate = 0.2;
  c.rate_tolerance = 0.01;
  c.master_seed = 11;
  return c;
}

bool same(const TrialResult& a, const TrialResult& b) {
  auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.seed == b.seed && eq(a.gamma, b.gamma) && eq(a.p_hat, b.p_hat) &&
         eq(a.q_hat, b.q_hat) && eq(a.lambda1_hat, b.lambda1_hat) &&
         eq(a.lambda2_hat, b.lambda2_hat) && eq(a.lambda3_hat, b.lambda3_hat) &&
         eq(a.gap, b.gap) && eq(a.tau, b.tau) && eq(a.row_sum_p95, b.row_sum_p95) &&
         eq(a.events.max_inner_product, b.events.max_inner_product) &&
         a.degenerate == b.degenerate;
}

}  // namespace

TEST_CASE("N is 2 round(rho d)", "[harness]") {
  ExperimentConfig c;
  c.d = 100;
  c.rho = 1.0;
  CHECK(c.N() == 200);
  c.rho = 0.5;
  CHECK(c.N() == 100);
  c.d = 7;
  c.rho = 0.7;  // 4.9 -> 5 -> 10
  CHECK(c.N() == 10);
}

TEST_CASE("a trial is a pure function of (config, index)", "[harness]") {
  const auto prepared = prepare(small_config());
  const TrialResult a = run_trial(prepared, 2);
  const TrialResult b = run_trial(prepared, 2);
  const TrialResult c = run_trial(small_config(), 2);
  CHECK(same(a, b));
  CHECK(same(a, c));
  CHECK(a.trial_index == 2);
  CHECK(a.seed == trial_seed(11, 2));
  CHECK_FALSE(same(a, run_trial(prepared, 3)));
}

TEST_CASE("execution order and worker count do not change results", "[harness]") {
  ExperimentConfig config = small_config();
  config.trials = 6;
  config.workers = 1;
  const auto prepared = prepare(config);
  const auto serial = run_trials(prepared);
  config.workers = 3;
  const auto parallel = run_trials(prepare(config));
  std::vector<TrialResult> reversed(6);
  for (int i = 5; i >= 0; --i) reversed[i] = run_trial(prepared, i);
  for (int i = 0; i < 6; ++i) {
    CHECK(same(serial[i], parallel[i]));
    CHECK(same(serial[i], reversed[i]));
  }
  const auto a = aggregate(serial);
  const auto b = aggregate(reversed);
  CHECK(a.gamma.mean == b.gamma.mean);
  CHECK(a.gamma.stddev == b.gamma.stddev);
}

TEST_CASE("tau is calibrated once per configuration", "[harness]") {
  const auto a = prepare(small_config());
  const auto b = prepare(small_config());
  REQUIRE(a.calibration.has_value());
  CHECK(a.tau == b.tau);
  for (const auto& r : run_trials(a)) CHECK(r.tau == a.tau);
}

TEST_CASE("config validation", "[harness]") {
  ExperimentConfig c = small_config();
  c.tau = 0.1;
  CHECK_THROWS_AS(c.validate(), ParameterError);  // both rate and tau
  c = small_config();
  c.target_rate.reset();
  CHECK_THROWS_AS(c.validate(), ParameterError);  // neither
  c = small_config();
  c.sigma = 0.1;
  c.snr_db = 10.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = small_config();
  c.trials = 1;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = small_config();
  c.rho = 0.01;
  CHECK_THROWS_AS(c.validate(), ParameterError);  // N < 4
  c = small_config();
  c.s = 40;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("config files", "[harness]") {
  const auto map = parse_config_text(
      "# default geometry\n"
      "d = 40\n"
      "n=300   # trailing comment\n"
      "s = 10\n"
      "rho = 1.5\n"
      "snr_db = 10\n"
      "tau = 0.12\n"
      "trials = 5\n"
      "seed = 42\n"
      "sweep = affinity\n"
      "grid = 0:10:40\n"
      "solver = dense\n");
  const ExperimentConfig c = config_from_map(map);
  CHECK(c.d == 40);
  CHECK(c.n == 300);
  CHECK(c.s == 10);
  CHECK(c.rho == 1.5);
  CHECK(*c.snr_db == 10.0);
  CHECK(*c.tau == 0.12);
  CHECK_FALSE(c.target_rate.has_value());
  CHECK(c.trials == 5);
  CHECK(c.master_seed == 42);
  REQUIRE(c.sweep.has_value());
  CHECK(c.sweep->parameter == SweepParameter::affinity);
  CHECK(c.sweep->grid == std::vector<double>{0, 10, 20, 30, 40});
  CHECK(c.solver.method == SolverMethod::dense);
  CHECK(c.at_grid_value(30).s == 30);

  CHECK(*config_from_map(parse_config_text("d = 10\n")).target_rate == 0.2);
  CHECK(config_from_map(parse_config_text("sweep = snr\ngrid = -5, 0, 5\n")).sweep->grid ==
        std::vector<double>{-5, 0, 5});
  CHECK(config_from_map(parse_config_text("sweep = tau\ngrid = 0.02:0.02:0.3\n")).sweep->grid.back() ==
        0.3);

  CHECK_THROWS_AS(parse_config_text("d 40\n"), FormatError);
  CHECK_THROWS_AS(config_from_map(parse_config_text("bogus = 1\n")), FormatError);
  CHECK_THROWS_AS(config_from_map(parse_config_text("d = forty\n")), FormatError);
  CHECK_THROWS_AS(config_from_map(parse_config_text("sweep = s\n")), FormatError);
  CHECK_THROWS_AS(config_from_map(parse_config_text("grid = 1:0:3\nsweep = s\n")), FormatError);
  CHECK_THROWS_AS(config_from_map(parse_config_text("sweep = width\ngrid = 1\n")), ParameterError);
}

TEST_CASE("orthogonal subspaces with oversampling are recovered", "[harness][statistics]") {
  ExperimentConfig c;
  c.d = 50;
  c.n = 5000;
  c.s = 0;
  c.rho = 2.0;
  c.trials = 20;
  c.target_rate = 0.2;
  c.master_seed = 7;
  int good = 0;
  for (const auto& r : run_trials(prepare(c))) good += r.gamma <= 0.02;
  CHECK(good >= 18);
}

TEST_CASE("sweeps produce one row per grid value", "[harness]") {
  ExperimentConfig c = small_config();
  c.sweep = Sweep{SweepParameter::affinity, {0, 15, 30}};
  const auto out = run_sweep(c);
  REQUIRE(out.rows.size() == 3);
  REQUIRE(out.trials.size() == 3);
  for (std::size_t g = 0; g < 3; ++g) {
    CHECK(out.rows[g].parameter == "s");
    CHECK(out.rows[g].config.s == static_cast<int>(c.sweep->grid[g]));
    CHECK(out.rows[g].summary.trials == c.trials);
    CHECK(out.trials[g].size() == static_cast<std::size_t>(c.trials));
  }
  CHECK(out.rows[0].aff == 0.0);
  CHECK(out.rows[2].aff == 1.0);

  c.sweep->grid.clear();
  CHECK_THROWS_AS(run_sweep(c), ParameterError);
}

TEST_CASE("a tau sweep traces a monotone (p, q) curve", "[harness]") {
  ExperimentConfig c = small_config();
  c.target_rate.reset();
  c.tau = 0.1;
  c.sweep = Sweep{SweepParameter::tau, {0.05, 0.1, 0.15, 0.2, 0.3, 0.4}};
  const auto out = run_sweep(c);
  for (std::size_t g = 1; g < out.rows.size(); ++g) {
    CHECK(out.rows[g].summary.p_hat.mean <= out.rows[g - 1].summary.p_hat.mean);
    CHECK(out.rows[g].summary.q_hat.mean <= out.rows[g - 1].summary.q_hat.mean);
  }
}

TEST_CASE("a CSV row is enough to reproduce itself", "[harness]") {
  ExperimentConfig c = small_config();
  c.sweep = Sweep{SweepParameter::snr_db, {0, 10}};
  const auto out = run_sweep(c);
  std::stringstream csv;
  io::write_sweep_csv(csv, out.rows);
  const auto table = io::read_csv(csv);
  REQUIRE(table.rows.size() == 2);
  for (const auto& row : table.rows) {
    auto get = [&](const char* name) { return row[table.column(name)]; };
    ConfigMap map = {{"d", get("d")},         {"n", get("n")},
                     {"s", get("s")},         {"rho", get("rho")},
                     {"snr_db", get("snr_db")}, {"rate", get("target_rate")},
                     {"tolerance", get("tolerance")}, {"trials", get("trials")},
                     {"seed", get("master_seed")}};
    const auto again = run_sweep(config_from_map(map));
    std::stringstream csv_again;
    io::write_sweep_csv(csv_again, again.rows);
    const auto table_again = io::read_csv(csv_again);
    REQUIRE(table_again.rows.size() == 1);
    for (const char* column : {"tau", "mean_gamma", "std_gamma", "mean_p_hat", "mean_q_hat"}) {
      CHECK(table_again.rows[0][table_again.column(column)] == row[table.column(column)]);
    }
  }
}
