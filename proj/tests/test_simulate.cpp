#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pdl/config.hpp"
#include "pdl/simulate.hpp"

using namespace pdl;

namespace {

/// One-variable linear model dx = a*x dt + sigma dB over the dictionary
/// {1, x}.
SdeModel linear_model(double a, double sigma) {
  SdeModel m;
  m.variables = {"x"};
  m.dict = Dictionary::build(1, 1, true, true);
  m.A = Eigen::MatrixXd::Zero(1, 2);
  m.A(0, m.dict.find_linear(0)) = a;
  m.sigma = Eigen::VectorXd::Constant(1, sigma);
  m.compile();
  return m;
}

InitialDistribution point_mass(std::vector<double> mean, double stddev = 0.0) {
  InitialDistribution p0;
  p0.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<long>(mean.size()));
  p0.stddev = Eigen::VectorXd::Constant(p0.mean.size(), stddev);
  return p0;
}

}  // namespace

TEST_CASE("uniform sampling plan enumerates k*dt up to the horizon") {
  SamplingPlan p = SamplingPlan::uniform(0.1, 8.0, 400);
  REQUIRE(p.times.size() == 81);
  REQUIRE(p.times.front() == 0.0);
  REQUIRE(p.times.back() == Catch::Approx(8.0));
  REQUIRE(p.times[13] == Catch::Approx(1.3));

  SamplingPlan q = SamplingPlan::uniform(0.5, 20.0, 100);
  REQUIRE(q.times.size() == 41);
}

TEST_CASE("zero drift and zero noise keeps every sample at the initial mean") {
  SdeModel m = linear_model(0.0, 0.0);
  m.A.setZero();
  m.compile();
  SamplingPlan plan = SamplingPlan::uniform(0.25, 1.0, 12);
  PopulationDataset ds = euler_maruyama_population(m, point_mass({1.5}), plan, 11);
  REQUIRE(ds.n_clouds() == 5);
  for (const auto& cloud : ds.clouds) {
    REQUIRE(cloud.rows() == 12);
    for (int p = 0; p < 12; ++p) REQUIRE(cloud(p, 0) == 1.5);
  }
}

TEST_CASE("population generation is deterministic and stream-keyed") {
  SdeModel m = linear_model(-1.0, 0.3);
  SamplingPlan plan = SamplingPlan::uniform(0.2, 1.0, 40);

  PopulationDataset a = euler_maruyama_population(m, point_mass({2.0}, 0.1), plan, 5, 0);
  PopulationDataset b = euler_maruyama_population(m, point_mass({2.0}, 0.1), plan, 5, 0);
  for (int k = 0; k < a.n_clouds(); ++k) REQUIRE(a.clouds[k] == b.clouds[k]);

  PopulationDataset c = euler_maruyama_population(m, point_mass({2.0}, 0.1), plan, 6, 0);
  REQUIRE(a.clouds[1] != c.clouds[1]);
  PopulationDataset d = euler_maruyama_population(m, point_mass({2.0}, 0.1), plan, 5, 1);
  REQUIRE(a.clouds[1] != d.clouds[1]);
}

TEST_CASE("mean relaxation matches the linear closed form") {
  // dx = -x dt + 0.5 dB from x0 ~ N(2, 0.2): E[x(t)] = 2 exp(-t).
  SdeModel m = linear_model(-1.0, 0.5);
  SamplingPlan plan = SamplingPlan::uniform(0.5, 2.0, 4000);
  PopulationDataset ds = euler_maruyama_population(m, point_mass({2.0}, 0.2), plan, 321);
  for (int k = 0; k < ds.n_clouds(); ++k) {
    const double want = 2.0 * std::exp(-ds.times[k]);
    const double got = ds.clouds[k].col(0).mean();
    // Cloud std is bounded by sqrt(0.2^2 + 0.5^2/2) < 0.4; five standard
    // errors of the mean at P = 4000 is about 0.032.
    REQUIRE(std::abs(got - want) < 0.032);
  }
}

TEST_CASE("stationary variance matches the linear closed form") {
  // Var[x(t)] -> sigma^2 / 2 = 0.125 for dx = -x dt + 0.5 dB.
  SdeModel m = linear_model(-1.0, 0.5);
  SamplingPlan plan = SamplingPlan::uniform(4.0, 8.0, 8000, 200);
  PopulationDataset ds = euler_maruyama_population(m, point_mass({0.0}, 0.0), plan, 99);
  const auto& cloud = ds.clouds.back();
  const double mean = cloud.col(0).mean();
  const double var = (cloud.col(0).array() - mean).square().sum() / (cloud.rows() - 1);
  REQUIRE(var == Catch::Approx(0.125).margin(0.01));
}

TEST_CASE("samples of consecutive clouds are independent draws") {
  // Fresh trajectories per cloud: sample p at time k and the same index p at
  // time k+1 must be uncorrelated, unlike a paired path ensemble.
  SdeModel m = linear_model(0.0, 1.0);
  const int P = 4000;
  SamplingPlan plan = SamplingPlan::uniform(1.0, 2.0, P);
  PopulationDataset ds = euler_maruyama_population(m, point_mass({0.0}, 0.0), plan, 17);
  const auto x = ds.clouds[1].col(0);
  const auto y = ds.clouds[2].col(0);
  const double mx = x.mean(), my = y.mean();
  const double sx = std::sqrt((x.array() - mx).square().mean());
  const double sy = std::sqrt((y.array() - my).square().mean());
  const double corr = ((x.array() - mx) * (y.array() - my)).mean() / (sx * sy);
  REQUIRE(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(P)));
}

TEST_CASE("deterministic stepping error shrinks linearly in the substep size") {
  // With sigma = 0 the sampler is a plain Euler integrator; its global error
  // against exp(-T) is O(h).
  SdeModel m = linear_model(-1.0, 0.0);
  auto end_error = [&](int substeps) {
    SamplingPlan plan = SamplingPlan::uniform(1.0, 1.0, 1, substeps);
    PopulationDataset ds = euler_maruyama_population(m, point_mass({1.0}), plan, 1);
    return std::abs(ds.clouds.back()(0, 0) - std::exp(-1.0));
  };
  const double e1 = end_error(8);
  const double e2 = end_error(16);
  REQUIRE(e1 / e2 == Catch::Approx(2.0).margin(0.25));
}

TEST_CASE("runaway states raise a numerical failure naming the variable") {
  SdeModel m;
  m.variables = {"boom"};
  m.dict = Dictionary::build(1, 3, false, true);
  m.A = Eigen::MatrixXd::Zero(1, m.dict.size());
  m.A(0, m.dict.find({3})) = 1.0;  // dx = x^3 dt explodes in finite time
  m.sigma = Eigen::VectorXd::Zero(1);
  m.compile();
  SamplingPlan plan = SamplingPlan::uniform(0.5, 2.0, 1, 50);
  REQUIRE_THROWS_WITH(euler_maruyama_population(m, point_mass({3.0}), plan, 1),
                      Catch::Matchers::ContainsSubstring("boom"));
}

TEST_CASE("deterministic reference integrator converges at fourth order") {
  SdeModel m = linear_model(-1.0, 0.123);  // noise is ignored by the ODE path
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 1.0);
  std::vector<double> times = {0.0, 1.0};
  auto err = [&](int substeps) {
    Eigen::MatrixXd out = rk4_trajectory(m, x0, times, substeps);
    return std::abs(out(1, 0) - std::exp(-1.0));
  };
  const double ratio = err(4) / err(8);
  REQUIRE(ratio > 12.0);
  REQUIRE(ratio < 20.0);
}

TEST_CASE("model drift honors feedback terms") {
  SdeModel m = cascade_model({0.5, 0.5, 0.5, 0.5});
  m.feedback.push_back({1, 0, -2.0});  // extra -2 x1 into the x2 equation
  m.compile();
  const double x[4] = {1.0, 2.0, 0.0, 0.0};
  double out[4];
  m.drift(x, out);
  // Base cascade: dx2 = 0.5 x1 - 0.5 x2 = -0.5; feedback adds -2.
  REQUIRE(out[1] == Catch::Approx(-2.5));
}

TEST_CASE("double well benchmark wiring") {
  SdeModel m = quadwell_model();
  REQUIRE(m.variables == std::vector<std::string>{"x1", "x2"});
  REQUIRE(m.dict.size() == 10);
  const double x[2] = {2.0, 1.0};
  double out[2];
  m.drift(x, out);
  REQUIRE(out[0] == Catch::Approx(2.0 - 8.0));    // x1 - x1^3
  REQUIRE(out[1] == Catch::Approx(0.25 - 1.0));   // 0.25 x2 - x2^3
  REQUIRE(m.sigma[0] == 0.2);
  REQUIRE(m.sigma[1] == 0.1);

  auto sup = m.supports();
  REQUIRE(sup[0].size() == 2);
  REQUIRE(sup[1].size() == 2);
}

TEST_CASE("cascade benchmark wiring") {
  SdeModel m = cascade_model({0.5, 0.5, 0.5, 0.5});
  REQUIRE(m.dict.size() == 4);
  const double x[4] = {1.0, 0.5, 0.25, 0.125};
  double out[4];
  m.drift(x, out);
  REQUIRE(out[0] == Catch::Approx(-0.5));
  REQUIRE(out[1] == Catch::Approx(0.5 - 0.25));
  REQUIRE(out[2] == Catch::Approx(0.25 - 0.125));
  REQUIRE(out[3] == Catch::Approx(0.125 - 0.0625));
}

TEST_CASE("benchmark generation returns matching data and truth") {
  ExperimentConfig cfg;
  cfg.simulate.builtin = "quadwell";
  cfg.simulate.nos = 20;
  cfg.simulate.dt = 0.5;
  cfg.simulate.t_end = 2.0;
  cfg.simulate.activations = 3;
  cfg.seed = 77;

  BenchmarkRun run = simulate_benchmark(cfg);
  REQUIRE(run.data.datasets.size() == 3);
  REQUIRE(run.data.datasets[0].intervention_id == "act0");
  REQUIRE(run.data.datasets[2].intervention_id == "act2");
  REQUIRE(run.truth.A.rows() == 2);
  for (const auto& ds : run.data.datasets) {
    REQUIRE(ds.n_clouds() == 5);
    REQUIRE(ds.clouds.front().rows() == 20);
  }

  BenchmarkRun again = simulate_benchmark(cfg);
  for (size_t r = 0; r < 3; ++r)
    for (int k = 0; k < 5; ++k)
      REQUIRE(run.data.datasets[r].clouds[k] == again.data.datasets[r].clouds[k]);

  cfg.simulate.builtin = "nope";
  REQUIRE_THROWS_AS(simulate_benchmark(cfg), data_error);
}

TEST_CASE("model json round trip preserves structure and feedback") {
  SdeModel m = quadwell_model({0.3, 0.4});
  m.feedback.push_back({0, 1, -1.5});
  json j = m.to_json();
  SdeModel back = SdeModel::from_json(j);
  REQUIRE(back.variables == m.variables);
  REQUIRE(back.A == m.A);
  REQUIRE(back.sigma == m.sigma);
  REQUIRE(back.dict.exponents == m.dict.exponents);
  REQUIRE(back.feedback.size() == 1);
  REQUIRE(back.feedback[0].gain == -1.5);

  const double x[2] = {0.5, -0.5};
  double d1[2], d2[2];
  m.drift(x, d1);
  back.drift(x, d2);
  REQUIRE(d1[0] == d2[0]);
  REQUIRE(d1[1] == d2[1]);
}
