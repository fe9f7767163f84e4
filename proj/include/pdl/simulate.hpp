#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"
#include "pdl/config.hpp"
#include "pdl/dataset.hpp"
#include "pdl/dictionary.hpp"
#include "pdl/threading.hpp"

namespace pdl {

/// Diagonal Gaussian initial condition p0.
struct InitialDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  int n_vars() const { return static_cast<int>(mean.size()); }
};

/// Sparse SDE over a dictionary: dx_n = (A psi(x))_n dt + sigma_n dB_n, plus
/// optional linear feedback terms used by inhibition experiments.
struct SdeModel {
  std::vector<std::string> variables;
  Dictionary dict;
  Eigen::MatrixXd A;      ///< N x Q drift coefficients, sparse in practice
  Eigen::VectorXd sigma;  ///< N diagonal diffusion

  /// Additional drift gain * x_source added to row target (inhibition input).
  struct Feedback {
    int target;
    int source;
    double gain;
  };
  std::vector<Feedback> feedback;

  int n_vars() const { return static_cast<int>(variables.size()); }

  void validate() const {
    const int n = n_vars();
    if (n < 1) throw data_error("model has no variables");
    if (A.rows() != n || A.cols() != dict.size())
      throw data_error("model drift matrix must be N x Q");
    if (sigma.size() != n) throw data_error("model sigma must have N entries");
    if (dict.n_vars != n) throw data_error("model dictionary variable count mismatch");
    for (int i = 0; i < n; ++i)
      if (sigma[i] < 0.0) throw data_error("model sigma must be nonnegative");
  }

  /// Drift A psi(x) + feedback, evaluated through the nonzero pattern only.
  void drift(const double* x, double* out) const {
    for (int n = 0; n < n_vars(); ++n) {
      double acc = 0.0;
      for (const auto& [q, coef] : rows_[n]) acc += coef * dict.eval_atom(q, x);
      out[n] = acc;
    }
    for (const auto& fb : feedback) out[fb.target] += fb.gain * x[fb.source];
  }

  /// Precomputes the per-row nonzero pattern; call after editing A.
  void compile() {
    validate();
    rows_.assign(n_vars(), {});
    for (int n = 0; n < n_vars(); ++n)
      for (int q = 0; q < dict.size(); ++q)
        if (A(n, q) != 0.0) rows_[n].push_back({q, A(n, q)});
  }

  /// Ground-truth support as (variable, atom) index pairs.
  std::vector<std::vector<int>> supports() const {
    std::vector<std::vector<int>> s(n_vars());
    for (int n = 0; n < n_vars(); ++n)
      for (int q = 0; q < dict.size(); ++q)
        if (A(n, q) != 0.0) s[n].push_back(q);
    return s;
  }

  json to_json() const {
    json j;
    j["variables"] = variables;
    j["dictionary"] = dict.to_json();
    json a = json::array();
    for (int n = 0; n < A.rows(); ++n) {
      json row = json::array();
      for (int q = 0; q < A.cols(); ++q) row.push_back(A(n, q));
      a.push_back(std::move(row));
    }
    j["A"] = std::move(a);
    j["sigma"] = std::vector<double>(sigma.data(), sigma.data() + sigma.size());
    if (!feedback.empty()) {
      json f = json::array();
      for (const auto& fb : feedback)
        f.push_back({{"target", fb.target}, {"source", fb.source}, {"gain", fb.gain}});
      j["feedback"] = std::move(f);
    }
    return j;
  }

  static SdeModel from_json(const json& j) {
    SdeModel m;
    m.variables = j.at("variables").get<std::vector<std::string>>();
    m.dict = Dictionary::from_json(j.at("dictionary"));
    const auto& a = j.at("A");
    m.A.resize(static_cast<long>(a.size()), m.dict.size());
    for (long n = 0; n < m.A.rows(); ++n)
      for (long q = 0; q < m.A.cols(); ++q) m.A(n, q) = a[n][q].get<double>();
    auto sig = j.at("sigma").get<std::vector<double>>();
    m.sigma = Eigen::Map<Eigen::VectorXd>(sig.data(), static_cast<long>(sig.size()));
    if (j.contains("feedback"))
      for (const auto& f : j["feedback"])
        m.feedback.push_back(
            {f.at("target").get<int>(), f.at("source").get<int>(), f.at("gain").get<double>()});
    m.compile();
    return m;
  }

 private:
  std::vector<std::vector<std::pair<int, double>>> rows_;
};

/// Measurement schedule: cloud times, samples per cloud, and integrator
/// resolution (substeps per measurement interval, so h = dt/substeps).
struct SamplingPlan {
  std::vector<double> times;
  int samples_per_cloud = 400;
  int substeps = 50;

  static SamplingPlan uniform(double dt, double t_end, int nos, int substeps = 50) {
    SamplingPlan p;
    p.samples_per_cloud = nos;
    p.substeps = substeps;
    const long k_max = static_cast<long>(std::floor(t_end / dt + 1e-9));
    for (long k = 0; k <= k_max; ++k) p.times.push_back(k * dt);
    return p;
  }
};

namespace detail {

/// One Euler-Maruyama path from x0 at time 0 to t_end, which must be one of
/// the segment bounds. Each segment is integrated with exactly `substeps`
/// equal steps, so step counts are integers and never drift with rounding.
/// Throws numeric_error naming the variable and time when the state diverges.
inline void em_path(const SdeModel& model, const std::vector<double>& seg_bounds, double t_end,
                    int substeps, std::mt19937_64& rng, double* x, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> dr(n);
  for (size_t s = 0; s + 1 < seg_bounds.size() && seg_bounds[s + 1] <= t_end + 1e-12; ++s) {
    const double h = (seg_bounds[s + 1] - seg_bounds[s]) / substeps;
    const double sqh = std::sqrt(h);
    for (int step = 0; step < substeps; ++step) {
      model.drift(x, dr.data());
      for (int i = 0; i < n; ++i) {
        x[i] += h * dr[i] + sqh * model.sigma[i] * gauss(rng);
        if (!std::isfinite(x[i]) || std::abs(x[i]) > 1e8)
          throw numeric_error("simulation diverged: variable '" + model.variables[i] +
                              "' at t = " + std::to_string(seg_bounds[s] + (step + 1) * h));
      }
    }
  }
}

}  // namespace detail

/// Generates population snapshots: every sample of every cloud is an
/// independent trajectory integrated from a fresh p0 draw up to that cloud's
/// time (samples carry no trajectory pairing across clouds). Each trajectory
/// draws from its own RNG stream keyed by (seed, intervention index, sample
/// index), so results are identical for any execution order or worker count.
inline PopulationDataset euler_maruyama_population(const SdeModel& model,
                                                   const InitialDistribution& p0,
                                                   const SamplingPlan& plan, std::uint64_t seed,
                                                   int intervention_index = 0,
                                                   const std::string& intervention_id = "0") {
  model.validate();
  const int n = model.n_vars();
  if (p0.n_vars() != n) throw data_error("initial distribution width mismatch");
  if (plan.times.size() < 2) throw data_error("sampling plan needs at least 2 times");
  if (plan.samples_per_cloud < 1) throw data_error("sampling plan needs at least 1 sample");
  for (size_t k = 0; k + 1 < plan.times.size(); ++k)
    if (!(plan.times[k] < plan.times[k + 1]))
      throw data_error("sampling plan times must be strictly increasing");
  if (plan.times.front() < 0.0) throw data_error("sampling plan times must start at >= 0");

  // Segment bounds for stepping: 0 plus all measurement times.
  std::vector<double> seg_bounds;
  if (plan.times.front() > 0.0) seg_bounds.push_back(0.0);
  seg_bounds.insert(seg_bounds.end(), plan.times.begin(), plan.times.end());

  PopulationDataset ds;
  ds.variables = model.variables;
  ds.times = plan.times;
  ds.intervention_id = intervention_id;
  const long K = static_cast<long>(plan.times.size());
  const long P = plan.samples_per_cloud;
  ds.clouds.assign(K, Eigen::MatrixXd(P, n));

  parallel_for(K * P, [&](long idx) {
    const long k = idx / P;
    const long p = idx % P;
    std::seed_seq sseq{seed, static_cast<std::uint64_t>(intervention_index),
                       static_cast<std::uint64_t>(idx)};
    std::mt19937_64 rng(sseq);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = p0.mean[i] + p0.stddev[i] * gauss(rng);
    detail::em_path(model, seg_bounds, plan.times[k], plan.substeps, rng, x.data(), n);
    for (int i = 0; i < n; ++i) ds.clouds[k](p, i) = x[i];
  });
  ds.validate();
  return ds;
}

/// Deterministic trajectory of the drift ODE (sigma ignored) from x0 through
/// the given times, fourth-order Runge-Kutta with the same substep rule as
/// the stochastic integrator. Returns a K x N matrix.
inline Eigen::MatrixXd rk4_trajectory(const SdeModel& model, const Eigen::VectorXd& x0,
                                      const std::vector<double>& times, int substeps = 50) {
  model.validate();
  const int n = model.n_vars();
  if (x0.size() != n) throw data_error("rk4_trajectory: initial state width mismatch");
  if (times.size() < 2) throw data_error("rk4_trajectory: need at least 2 times");
  Eigen::MatrixXd out(static_cast<long>(times.size()), n);
  std::vector<double> x(x0.data(), x0.data() + n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  double t = times.front();
  for (long i = 0; i < n; ++i) out(0, i) = x[i];
  for (size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw data_error("rk4_trajectory: times must increase");
    const double h = (times[k] - times[k - 1]) / substeps;
    for (int s = 0; s < substeps; ++s) {
      model.drift(x.data(), k1.data());
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
      model.drift(tmp.data(), k2.data());
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
      model.drift(tmp.data(), k3.data());
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
      model.drift(tmp.data(), k4.data());
      for (int i = 0; i < n; ++i) {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(x[i]) || std::abs(x[i]) > 1e8)
          throw numeric_error("trajectory diverged: variable '" + model.variables[i] +
                              "' at t = " + std::to_string(t));
      }
      t += h;
    }
    for (int i = 0; i < n; ++i) out(static_cast<long>(k), i) = x[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in benchmarks.
// ---------------------------------------------------------------------------

/// Two uncoupled double wells: dx1 = -(x1^3 - x1) dt + 0.2 dB1 and
/// dx2 = -(x2^3 - 0.25 x2) dt + 0.1 dB2, cubic dictionary with all cross
/// terms (10 atoms).
inline SdeModel quadwell_model(std::vector<double> sigma = {}) {
  SdeModel m;
  m.variables = {"x1", "x2"};
  m.dict = Dictionary::build(2, 3, true, true);
  m.A = Eigen::MatrixXd::Zero(2, m.dict.size());
  m.A(0, m.dict.find({1, 0})) = 1.0;
  m.A(0, m.dict.find({3, 0})) = -1.0;
  m.A(1, m.dict.find({0, 1})) = 0.25;
  m.A(1, m.dict.find({0, 3})) = -1.0;
  if (sigma.empty()) sigma = {0.2, 0.1};
  if (sigma.size() != 2) throw data_error("quadwell sigma needs 2 entries");
  m.sigma = Eigen::Map<Eigen::VectorXd>(sigma.data(), 2);
  m.compile();
  return m;
}

/// Pool of initial clouds for the quadwell benchmark: (mean_x1, mean_x2,
/// stddev) rows; activations are drawn uniformly from this pool.
inline std::vector<std::array<double, 3>> quadwell_activation_pool() {
  return {{0.0, 0.0, 0.1},    {-1.0, 1.0, 0.1},  {0.1, -0.1, 0.2},
          {-0.1, 0.2, 0.2},   {-0.2, 0.1, 0.1},  {-0.2, -0.2, 0.15},
          {-0.5, 0.0, 0.1},   {0.0, 0.5, 0.2},   {0.2, 0.2, 0.15}};
}

/// Uniform draw from the activation pool.
inline InitialDistribution draw_activation(const std::vector<std::array<double, 3>>& pool,
                                           std::uint64_t seed) {
  if (pool.empty()) throw data_error("draw_activation: empty pool");
  std::seed_seq sseq{seed};
  std::mt19937_64 rng(sseq);
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  const auto& row = pool[pick(rng)];
  InitialDistribution p0;
  p0.mean = Eigen::Vector2d(row[0], row[1]);
  p0.stddev = Eigen::Vector2d(row[2], row[2]);
  return p0;
}

/// Linear signalling cascade x1 -> x2 -> x3 -> x4 -> degradation:
/// dx1 = -k1 x1, dx2 = k1 x1 - k2 x2, dx3 = k2 x2 - k3 x3,
/// dx4 = k3 x3 - k4 x4, all with additive noise. Linear dictionary without a
/// constant atom (4 atoms).
inline SdeModel cascade_model(std::vector<double> rates = {0.3, 0.3, 0.3, 0.3},
                              std::vector<double> sigma = {}) {
  if (rates.size() != 4) throw data_error("cascade rates need 4 entries");
  SdeModel m;
  m.variables = {"x1", "x2", "x3", "x4"};
  m.dict = Dictionary::build(4, 1, false, true);
  m.A = Eigen::MatrixXd::Zero(4, m.dict.size());
  const int q1 = m.dict.find_linear(0), q2 = m.dict.find_linear(1), q3 = m.dict.find_linear(2),
            q4 = m.dict.find_linear(3);
  m.A(0, q1) = -rates[0];
  m.A(1, q1) = rates[0];
  m.A(1, q2) = -rates[1];
  m.A(2, q2) = rates[1];
  m.A(2, q3) = -rates[2];
  m.A(3, q3) = rates[2];
  m.A(3, q4) = -rates[3];
  if (sigma.empty()) sigma = {0.01, 0.01, 0.01, 0.01};
  if (sigma.size() != 4) throw data_error("cascade sigma needs 4 entries");
  m.sigma = Eigen::Map<Eigen::VectorXd>(sigma.data(), 4);
  m.compile();
  return m;
}

/// Benchmark generation result: the data plus the generating ground truth.
struct BenchmarkRun {
  InterventionSet data;
  SdeModel truth;
};

/// Builds the benchmark named in the config and samples its population data.
/// Quadwell draws `activations` initial conditions from the pool (one dataset
/// each); the cascade is a single experiment from its fixed initial cloud.
inline BenchmarkRun simulate_benchmark(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& sc = cfg.simulate;
  SamplingPlan plan = SamplingPlan::uniform(sc.dt, sc.t_end, sc.nos, sc.substeps);
  BenchmarkRun run;
  if (sc.builtin == "quadwell") {
    run.truth = quadwell_model(sc.sigma);
    const auto pool = quadwell_activation_pool();
    for (int r = 0; r < sc.activations; ++r) {
      InitialDistribution p0 = draw_activation(pool, cfg.seed + 7919 * (r + 1));
      run.data.datasets.push_back(euler_maruyama_population(run.truth, p0, plan, cfg.seed, r,
                                                            "act" + std::to_string(r)));
    }
  } else if (sc.builtin == "cascade") {
    run.truth = cascade_model(sc.cascade_rates, sc.sigma);
    if (sc.cascade_mu0.size() != 4) throw data_error("cascade_mu0 needs 4 entries");
    InitialDistribution p0;
    p0.mean = Eigen::Map<const Eigen::VectorXd>(sc.cascade_mu0.data(), 4);
    p0.stddev = Eigen::VectorXd::Constant(4, sc.cascade_sigma0);
    run.data.datasets.push_back(euler_maruyama_population(run.truth, p0, plan, cfg.seed, 0, "0"));
  } else {
    throw data_error("unknown builtin benchmark '" + sc.builtin + "'");
  }
  run.data.validate();
  return run;
}

}  // namespace pdl
