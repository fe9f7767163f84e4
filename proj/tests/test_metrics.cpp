#include <catch2/catch_amalgamated.hpp>

#include "pdl/metrics.hpp"
#include "pdl/simulate.hpp"
#include "pdl/sparse.hpp"

using namespace pdl;

TEST_CASE("relative error is the Frobenius ratio") {
  Eigen::MatrixXd A_true(2, 2), A_hat(2, 2);
  A_true << 3, 0, 0, 4;  // Frobenius norm 5
  A_hat << 3, 0, 0, 1;   // difference norm 3
  REQUIRE(relative_error(A_hat, A_true) == Catch::Approx(0.6));
  REQUIRE(relative_error(A_true, A_true) == 0.0);

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  REQUIRE_THROWS_AS(relative_error(A_hat, zero), data_error);
  Eigen::MatrixXd wrong(1, 2);
  REQUIRE_THROWS_AS(relative_error(wrong, A_true), data_error);
}

TEST_CASE("precision and recall count coefficient positions") {
  // Row 0: predicted {0,1}, true {0} -> 1 hit, 1 false alarm.
  // Row 1: predicted {2},   true {2} -> 1 hit.
  std::vector<std::vector<int>> hat = {{0, 1}, {2}};
  std::vector<std::vector<int>> truth = {{0}, {2}};
  auto pr = precision_recall(hat, truth);
  REQUIRE(pr.precision == Catch::Approx(2.0 / 3.0));
  REQUIRE(pr.recall == Catch::Approx(1.0));
}

TEST_CASE("precision and recall conventions for empty supports") {
  std::vector<std::vector<int>> none = {{}, {}};
  std::vector<std::vector<int>> some = {{1}, {}};

  auto both_empty = precision_recall(none, none);
  REQUIRE(both_empty.precision == 1.0);
  REQUIRE(both_empty.recall == 1.0);

  auto no_predictions = precision_recall(none, some);
  REQUIRE(no_predictions.precision == 1.0);
  REQUIRE(no_predictions.recall == 0.0);

  auto no_truth = precision_recall(some, none);
  REQUIRE(no_truth.precision == 0.0);
  REQUIRE(no_truth.recall == 1.0);
}

TEST_CASE("trajectory distance of a constant offset is that offset") {
  std::vector<double> times = {0.0, 0.4, 1.0, 1.7};  // non-uniform on purpose
  Eigen::MatrixXd X(4, 2), Y(4, 2);
  for (int k = 0; k < 4; ++k) {
    X(k, 0) = times[k];
    X(k, 1) = 2.0 * times[k];
    Y(k, 0) = X(k, 0) + 0.3;
    Y(k, 1) = X(k, 1) - 1.2;
  }
  Eigen::VectorXd d = trajectory_l2(X, Y, times);
  REQUIRE(d[0] == Catch::Approx(0.3));
  REQUIRE(d[1] == Catch::Approx(1.2));

  Eigen::MatrixXd wrong(3, 2);
  REQUIRE_THROWS_AS(trajectory_l2(X, wrong, times), data_error);
}

TEST_CASE("sigma errors are absolute per variable") {
  Eigen::VectorXd hat(2), truth(2);
  hat << 0.25, 0.08;
  truth << 0.2, 0.1;
  Eigen::VectorXd e = sigma_errors(hat, truth);
  REQUIRE(e[0] == Catch::Approx(0.05));
  REQUIRE(e[1] == Catch::Approx(0.02));
}

TEST_CASE("evaluation excludes variables marked as forced") {
  SdeModel truth = cascade_model();
  SparseModel fit;
  fit.variables = truth.variables;
  fit.dict = truth.dict;
  fit.A_hat = truth.A;
  fit.sigma_hat = truth.sigma;
  fit.supports = truth.supports();
  fit.forced.assign(4, false);

  // Perfect copy scores perfectly.
  EvaluationReport perfect = evaluate_against_truth(fit, truth, 5);
  REQUIRE(perfect.rel_error == 0.0);
  REQUIRE(perfect.precision == 1.0);
  REQUIRE(perfect.recall == 1.0);

  // Wreck the first row but mark it forced: metrics must ignore it.
  fit.A_hat.row(0).setZero();
  fit.supports[0].clear();
  fit.forced[0] = true;
  EvaluationReport masked = evaluate_against_truth(fit, truth, 5);
  REQUIRE(masked.rel_error == 0.0);
  REQUIRE(masked.precision == 1.0);
  REQUIRE(masked.recall == 1.0);

  // The same wrecked row without the forced flag is penalized.
  fit.forced[0] = false;
  EvaluationReport penalized = evaluate_against_truth(fit, truth, 5);
  REQUIRE(penalized.rel_error > 0.0);
  REQUIRE(penalized.recall < 1.0);

  fit.forced.assign(4, true);
  REQUIRE_THROWS_AS(evaluate_against_truth(fit, truth, 5), data_error);
}

TEST_CASE("report serializes round numbers and csv rows") {
  EvaluationReport rep;
  rep.rel_error = 0.125;
  rep.precision = 1.0;
  rep.recall = 0.75;
  rep.variables = {"a"};
  rep.seed = 42;
  rep.trajectory_errors = {0.5, 1.5};

  json j = rep.to_json();
  REQUIRE(j["relative_error"].get<double>() == 0.125);
  REQUIRE(j["seed"].get<std::uint64_t>() == 42);

  const std::string row = rep.csv_row();
  REQUIRE(row.find("42,") == 0);
  REQUIRE(row.find("0.125") != std::string::npos);
  REQUIRE(row.find(",1") != std::string::npos);  // mean trajectory error
  REQUIRE(EvaluationReport::csv_header().find("relative_error") != std::string::npos);
}
