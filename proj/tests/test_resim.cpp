#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "pdl/resim.hpp"
#include "pdl/simulate.hpp"

using namespace pdl;

namespace {

/// Clouds whose mean follows mean_fn(t) exactly: samples sit at graded
/// symmetric offsets mean +/- spread * i / pairs, so the sample mean carries
/// no noise at all while the cloud still looks like one spread-out mode.
PopulationDataset exact_mean_dataset(const std::vector<double>& times,
                                     const std::function<double(double)>& mean_fn,
                                     double spread = 0.05, int pairs = 10) {
  PopulationDataset ds;
  ds.variables = {"x"};
  ds.intervention_id = "exact";
  ds.times = times;
  for (double t : times) {
    Eigen::MatrixXd cloud(2 * pairs, 1);
    for (int p = 0; p < pairs; ++p) {
      const double off = spread * (p + 1) / pairs;
      cloud(2 * p, 0) = mean_fn(t) + off;
      cloud(2 * p + 1, 0) = mean_fn(t) - off;
    }
    ds.clouds.push_back(cloud);
  }
  return ds;
}

std::vector<double> uniform_times(double dt, double t_end) {
  std::vector<double> t;
  for (int k = 0; k * dt <= t_end + 1e-12; ++k) t.push_back(k * dt);
  return t;
}

}  // namespace

TEST_CASE("curve fitting reproduces a linear mean near-exactly") {
  auto line = [](double t) { return 0.7 * t - 0.4; };
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.25, 5.0), line);
  CollocatedTrajectory c = collocate(ds, 1e-8);
  for (double t : {0.0, 0.31, 1.7, 2.5, 4.99, 5.0})
    REQUIRE(c.eval(0, t) == Catch::Approx(line(t)).margin(1e-5));
}

TEST_CASE("an overwhelming smoothing penalty flattens the curve toward a line") {
  // The roughness penalty integrates the squared second derivative, so for
  // lambda -> infinity the fit approaches the weighted least-squares line.
  auto curved = [](double t) { return std::sin(t); };
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.2, 6.0), curved);
  CollocatedTrajectory c = collocate(ds, 1e10);
  // Sample the fitted curve densely and regress it on t: residuals of the
  // curve against its own best line must be tiny.
  const int n = 61;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double t = 6.0 * i / (n - 1);
    X(i, 0) = 1.0;
    X(i, 1) = t;
    y[i] = c.eval(0, t);
  }
  Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  const double max_dev = (y - X * beta).lpNorm<Eigen::Infinity>();
  REQUIRE(max_dev < 1e-3);
  // And it is genuinely different from the sine it was fed.
  REQUIRE(std::abs(c.eval(0, 1.57) - std::sin(1.57)) > 0.1);
}

TEST_CASE("automatic smoothing tracks a smooth signal") {
  auto smooth = [](double t) { return std::exp(-0.5 * t) + 0.3 * t; };
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.25, 6.0), smooth);
  CollocatedTrajectory c = collocate(ds);  // lambda chosen by cross-validation
  for (double t : {0.1, 1.0, 2.3, 4.4, 5.9})
    REQUIRE(c.eval(0, t) == Catch::Approx(smooth(t)).margin(5e-3));
}

TEST_CASE("interval noise levels average the adjacent cloud variances") {
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.5, 2.0), [](double) { return 0.0; },
                                            0.2, 20);
  // All clouds share the same sample variance, so every interval level equals
  // the cloud's own standard deviation.
  const auto col = ds.clouds[0].col(0);
  const double var = (col.array() - col.mean()).square().sum() / (col.rows() - 1);
  CollocatedTrajectory c = collocate(ds, 1e-6);
  REQUIRE(c.sigma_bar.rows() == 4);
  for (int k = 0; k < 4; ++k)
    REQUIRE(c.sigma_bar(k, 0) == Catch::Approx(std::sqrt(var)).epsilon(1e-9));
}

TEST_CASE("clearly split clouds are rejected as multimodal") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> gauss(0.0, 0.05);
  PopulationDataset ds;
  ds.variables = {"x"};
  ds.intervention_id = "wells";
  ds.times = uniform_times(0.5, 3.0);
  for (double t : ds.times) {
    (void)t;
    Eigen::MatrixXd cloud(40, 1);
    for (int p = 0; p < 40; ++p) cloud(p, 0) = (p % 2 == 0 ? 1.0 : -1.0) + gauss(rng);
    ds.clouds.push_back(cloud);
  }
  REQUIRE_THROWS_WITH(collocate(ds), Catch::Matchers::ContainsSubstring("multimodal"));
}

TEST_CASE("unimodal noisy clouds are accepted") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 0.3);
  PopulationDataset ds;
  ds.variables = {"x"};
  ds.intervention_id = "one_mode";
  ds.times = uniform_times(0.5, 4.0);
  for (double t : ds.times) {
    Eigen::MatrixXd cloud(60, 1);
    for (int p = 0; p < 60; ++p) cloud(p, 0) = std::cos(t) + gauss(rng);
    ds.clouds.push_back(cloud);
  }
  REQUIRE_NOTHROW(collocate(ds));
}

TEST_CASE("regenerated clouds sit on the curve when the data had no spread") {
  auto line = [](double t) { return 2.0 - 0.5 * t; };
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.5, 4.0), line, 0.0, 8);
  CollocatedTrajectory c = collocate(ds, 1e-8);
  PopulationDataset fine = resimulate(c, 0.1, 30, 123, "resampled");

  REQUIRE(fine.intervention_id == "resampled");
  REQUIRE(fine.n_clouds() == 41);
  REQUIRE(fine.times.front() == 0.0);
  REQUIRE(fine.times.back() == Catch::Approx(4.0));
  for (int k = 0; k < fine.n_clouds(); ++k) {
    REQUIRE(fine.clouds[k].rows() == 30);
    for (int p = 0; p < 30; ++p)
      REQUIRE(fine.clouds[k](p, 0) == Catch::Approx(line(fine.times[k])).margin(1e-5));
  }
}

TEST_CASE("regenerated clouds reproduce the local noise level") {
  PopulationDataset ds =
      exact_mean_dataset(uniform_times(0.5, 3.0), [](double t) { return 0.1 * t; }, 0.25, 50);
  CollocatedTrajectory c = collocate(ds, 1e-6);
  PopulationDataset fine = resimulate(c, 0.25, 4000, 77);
  // All source clouds share one sample std; the regenerated clouds must
  // reproduce it within Monte-Carlo slack.
  const auto src = ds.clouds[0].col(0);
  const double want =
      std::sqrt((src.array() - src.mean()).square().sum() / (src.rows() - 1));
  for (int k = 1; k < fine.n_clouds(); ++k) {
    const auto col = fine.clouds[k].col(0);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / (col.rows() - 1));
    REQUIRE(sd == Catch::Approx(want).margin(0.02));
  }
}

TEST_CASE("resampling is deterministic per seed and keyed by time and variable") {
  PopulationDataset ds =
      exact_mean_dataset(uniform_times(0.5, 2.0), [](double t) { return t; }, 0.1, 10);
  CollocatedTrajectory c = collocate(ds, 1e-6);
  PopulationDataset a = resimulate(c, 0.5, 20, 5);
  PopulationDataset b = resimulate(c, 0.5, 20, 5);
  PopulationDataset d = resimulate(c, 0.5, 20, 6);
  for (int k = 0; k < a.n_clouds(); ++k) {
    REQUIRE(a.clouds[k] == b.clouds[k]);
  }
  REQUIRE(a.clouds[1] != d.clouds[1]);
}

TEST_CASE("thinning keeps evenly spaced clouds including both endpoints") {
  PopulationDataset ds = exact_mean_dataset(uniform_times(0.1, 4.0), [](double t) { return t; });
  REQUIRE(ds.n_clouds() == 41);

  PopulationDataset thin = keep_fraction(ds, 0.15);
  // round(0.15 * 41) = 6 clouds at indices round(i * 40 / 5).
  REQUIRE(thin.n_clouds() == 6);
  REQUIRE(thin.times.front() == ds.times.front());
  REQUIRE(thin.times.back() == ds.times.back());
  std::vector<double> expect = {ds.times[0], ds.times[8], ds.times[16],
                                ds.times[24], ds.times[32], ds.times[40]};
  REQUIRE(thin.times == expect);

  PopulationDataset all = keep_fraction(ds, 1.0);
  REQUIRE(all.n_clouds() == 41);
  REQUIRE_THROWS_AS(keep_fraction(ds, 0.0), data_error);
  REQUIRE_THROWS_AS(keep_fraction(ds, 1.2), data_error);

  // Even a tiny fraction keeps the two endpoints.
  PopulationDataset two = keep_fraction(ds, 1e-6);
  REQUIRE(two.n_clouds() == 2);
}

TEST_CASE("pinned playback follows the supplied curve and drives the rest") {
  // dx1/dt is pinned to g(t) = exp(-t); dx2/dt = x1 - x2 then has the exact
  // solution x2(t) = (x2(0) + t) exp(-t) for x2(0) = 0.
  SdeModel m;
  m.variables = {"x1", "x2"};
  m.dict = Dictionary::build(2, 1, false, true);
  m.A = Eigen::MatrixXd::Zero(2, 2);
  m.A(0, m.dict.find_linear(0)) = -1.0;  // ignored: x1 is pinned
  m.A(1, m.dict.find_linear(0)) = 1.0;
  m.A(1, m.dict.find_linear(1)) = -1.0;
  m.sigma = Eigen::VectorXd::Zero(2);
  m.compile();

  // Build the pinning curve by collocating exact exp(-t) data.
  PopulationDataset pin;
  pin.variables = {"x1", "x2"};
  pin.intervention_id = "pin";
  pin.times = uniform_times(0.1, 3.0);
  for (double t : pin.times) {
    Eigen::MatrixXd cloud(8, 2);
    for (int p = 0; p < 8; ++p) {
      // Uniform comb: enough spread for finite weights, clearly unimodal.
      const double dither = (2.0 * p - 7.0) / 7.0 * 1e-4;
      cloud(p, 0) = std::exp(-t) + dither;
      cloud(p, 1) = (0.0 + t) * std::exp(-t) + dither;
    }
    pin.clouds.push_back(cloud);
  }
  CollocatedTrajectory curves = collocate(pin, 1e-8);

  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  Eigen::MatrixXd out =
      rk4_with_forced(m, x0, pin.times, {true, false}, curves, 20);

  for (size_t k = 0; k < pin.times.size(); ++k) {
    const double t = pin.times[k];
    REQUIRE(out(static_cast<long>(k), 0) == Catch::Approx(std::exp(-t)).margin(2e-3));
    REQUIRE(out(static_cast<long>(k), 1) == Catch::Approx(t * std::exp(-t)).margin(2e-3));
  }
}
