#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tipsc/io.hpp"

using namespace tipsc;

TEST_CASE("dataset round trip is bit exact", "[io]") {
  const Dataset clean = sample_points(make_bases(12, 4, 40), 10, 5);
  const Dataset noisy = add_noise(clean, 0.3, 6);
  for (const Dataset* data : {&clean, &noisy}) {
    std::stringstream buffer;
    io::write_dataset(buffer, *data);
    const Dataset back = io::read_dataset(buffer);
    CHECK(back.points == data->points);
    CHECK(back.labels == data->labels);
    CHECK(back.sigma == data->sigma);
    CHECK(back.seed == data->seed);
    CHECK(back.noise_seed == data->noise_seed);
    CHECK(back.active_columns == data->active_columns);
    CHECK(back.spec.d() == 12);
    CHECK(back.spec.s() == 4);
    CHECK(back.spec.n() == 40);
    CHECK_FALSE(back.coefficients.has_value());
  }
}

TEST_CASE("coefficients are stored only on request", "[io]") {
  const Dataset data = sample_points(make_bases(6, 2, 20), 8, 1);
  std::stringstream buffer;
  io::write_dataset(buffer, data, {.include_coefficients = true});
  const Dataset back = io::read_dataset(buffer);
  REQUIRE(back.coefficients.has_value());
  CHECK(*back.coefficients == *data.coefficients);
  CHECK(event_check(back, 0.9).norm_deviation == event_check(data, 0.9).norm_deviation);
}

TEST_CASE("non-canonical spectra survive the round trip", "[io]") {
  const auto spec = make_bases(4, std::vector<double>{1.0, 0.3, 0.1, 0.0}, 8);
  const Dataset data = sample_points(spec, 6, 2);
  std::stringstream buffer;
  io::write_dataset(buffer, data);
  const Dataset back = io::read_dataset(buffer);
  CHECK_FALSE(back.spec.canonical());
  CHECK(std::ranges::equal(back.spec.spectrum(), spec.spectrum()));
  CHECK(back.points == data.points);
}

TEST_CASE("malformed dataset files are rejected", "[io]") {
  std::stringstream bad_magic("not-a-dataset 1\n");
  CHECK_THROWS_AS(io::read_dataset(bad_magic), FormatError);
  std::stringstream no_end("tipsc-dataset 1\nd 2\n");
  CHECK_THROWS_AS(io::read_dataset(no_end), FormatError);

  const Dataset data = sample_points(make_bases(3, 0, 6), 4, 1);
  std::stringstream buffer;
  io::write_dataset(buffer, data);
  std::string text = buffer.str();
  text.resize(text.size() - 5);
  std::stringstream truncated(text);
  CHECK_THROWS_AS(io::read_dataset(truncated), FormatError);
}

TEST_CASE("edge list and sidecar round trip", "[io]") {
  const Dataset data = sample_points(make_bases(10, 5, 30), 20, 2);
  const AdjacencyMatrix A = build_adjacency(data, 0.25);
  std::stringstream edges;
  io::write_edge_list(edges, A);
  const auto sidecar = io::adjacency_sidecar(A);
  CHECK(sidecar.at("edges").get<long>() == A.edge_count());
  const AdjacencyMatrix back = io::read_edge_list(edges, sidecar);
  CHECK(back == A);
  CHECK(back.tau() == 0.25);

  std::stringstream invalid("0 0\n");
  CHECK_THROWS_AS(io::read_edge_list(invalid, sidecar), FormatError);
}

TEST_CASE("trial CSV has the fixed column order", "[io]") {
  TrialResult r;
  r.trial_index = 3;
  r.gamma = 0.125;
  r.lambda3_hat = std::nan("");
  std::stringstream out;
  io::write_trials_csv(out, {r, r});
  const auto table = io::read_csv(out);
  CHECK(table.header == io::trial_csv_columns());
  REQUIRE(table.rows.size() == 2);
  CHECK(table.header.front() == "trial_index");
  CHECK(table.rows[0][table.column("trial_index")] == "3");
  CHECK(table.rows[0][table.column("gamma")] == "0.125");
  CHECK(table.rows[0][table.column("lambda3_hat")] == "nan");
}

TEST_CASE("sweep CSV carries the columns the plotting side reads", "[io]") {
  const auto& columns = io::sweep_csv_columns();
  for (const char* name : {"sweep_parameter", "grid_value", "master_seed", "mean_gamma",
                           "std_gamma", "mean_p_hat", "mean_q_hat", "theory_bound",
                           "mean_lambda3_bound", "mean_gap", "tau"}) {
    CHECK(std::find(columns.begin(), columns.end(), name) != columns.end());
  }
  CHECK(columns[0] == "sweep_parameter");
  CHECK(columns[1] == "grid_value");
}

TEST_CASE("theory report JSON exposes the bound and applicability", "[io]") {
  theory::ReportInputs in;
  in.d = 100;
  in.n = 5000;
  in.s = 50;
  in.N = 200;
  in.aff = std::sqrt(0.5);
  in.tau = 0.109;
  in.p_reference = 0.3;
  in.q_reference = 0.1;
  const auto j = io::to_json(theory::make_report(in));
  CHECK(j.contains("theorem_bound"));
  CHECK(j.contains("applicability"));
  CHECK(j.at("applicability").is_boolean());
  CHECK(j.at("kappa").get<double>() == Catch::Approx(0.5));
  CHECK(j.at("q_applicable").get<bool>());
}
