#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/basis.hpp"
#include "pdl/common.hpp"
#include "pdl/dataset.hpp"
#include "pdl/simulate.hpp"

namespace pdl {

namespace detail {

/// 1-D two-means split used to reject multimodal clouds: returns true when
/// both clusters hold at least 15% of the samples and the center separation
/// exceeds 4x the pooled within-cluster spread. Unimodal Gaussian or uniform
/// clouds sit near ratio 2.7-3.5; separated modes score far above 4.
inline bool looks_bimodal(const Eigen::VectorXd& x) {
  const long P = x.size();
  if (P < 8) return false;
  double c1 = x.minCoeff(), c2 = x.maxCoeff();
  if (c2 - c1 <= 0.0) return false;
  for (int it = 0; it < 32; ++it) {
    double s1 = 0.0, s2 = 0.0;
    long n1 = 0, n2 = 0;
    for (long p = 0; p < P; ++p) {
      if (std::abs(x[p] - c1) <= std::abs(x[p] - c2)) {
        s1 += x[p];
        ++n1;
      } else {
        s2 += x[p];
        ++n2;
      }
    }
    if (n1 == 0 || n2 == 0) return false;
    const double nc1 = s1 / n1, nc2 = s2 / n2;
    const bool stable = std::abs(nc1 - c1) < 1e-12 && std::abs(nc2 - c2) < 1e-12;
    c1 = nc1;
    c2 = nc2;
    if (stable) break;
  }
  double within = 0.0;
  long n1 = 0;
  for (long p = 0; p < P; ++p) {
    const double d1 = x[p] - c1, d2 = x[p] - c2;
    if (std::abs(d1) <= std::abs(d2)) {
      within += d1 * d1;
      ++n1;
    } else {
      within += d2 * d2;
    }
  }
  const long n2 = P - n1;
  if (std::min(n1, n2) < static_cast<long>(0.15 * P)) return false;
  const double pooled = std::sqrt(within / P);
  return std::abs(c2 - c1) > 4.0 * pooled;
}

}  // namespace detail

/// Smooth per-variable mean curves fitted through cloud statistics, plus the
/// cloud spread per original measurement interval (used to redraw synthetic
/// clouds along the curve).
struct CollocatedTrajectory {
  std::vector<std::string> variables;
  std::vector<double> fit_times;  ///< original cloud times
  BsplineBasis basis;             ///< cubic splines over [t_1, t_K]
  Eigen::MatrixXd coef;           ///< n_basis x N curve coefficients
  Eigen::MatrixXd sigma_bar;      ///< (K-1) x N std per original interval
  Eigen::VectorXd lambda;         ///< smoothing weight used per variable

  int n_vars() const { return static_cast<int>(variables.size()); }

  /// Index of the original measurement interval containing t (clamped).
  int interval_of(double t) const {
    const int K = static_cast<int>(fit_times.size());
    auto it = std::upper_bound(fit_times.begin(), fit_times.end(), t);
    int k = static_cast<int>(it - fit_times.begin()) - 1;
    return std::clamp(k, 0, K - 2);
  }

  double eval(int variable, double t) const {
    std::vector<double> b0(basis.size());
    basis.eval_all(std::clamp(t, basis.lo(), basis.hi()), b0.data(), nullptr, nullptr);
    double acc = 0.0;
    for (int j = 0; j < basis.size(); ++j) acc += coef(j, variable) * b0[j];
    return acc;
  }

  /// Curve values on a time grid as a K' x N matrix.
  Eigen::MatrixXd eval_matrix(const std::vector<double>& times) const {
    Eigen::MatrixXd out(static_cast<long>(times.size()), n_vars());
    for (size_t i = 0; i < times.size(); ++i)
      for (int n = 0; n < n_vars(); ++n) out(static_cast<long>(i), n) = eval(n, times[i]);
    return out;
  }
};

/// Fits one penalized smoothing spline per variable through the cloud means:
/// minimize sum_k w_k (mean_k - f(t_k))^2 + lambda int f''(t)^2 dt with
/// inverse-variance weights w_k = P_k / var_k. lambda <= 0 selects the weight
/// per variable from a small grid by generalized cross-validation. A singular
/// penalized system retries with lambda * 10 up to 3 times before failing.
/// Multimodal clouds (two-means separation heuristic) are rejected: the curve
/// model assumes one mode.
inline CollocatedTrajectory collocate(const PopulationDataset& ds, double lambda = 0.0,
                                      int basis_size = 0) {
  ds.validate();
  const int K = ds.n_clouds();
  const int N = ds.n_vars();
  if (basis_size == 0) basis_size = std::clamp(K, 4, 25);
  if (basis_size < 4) throw data_error("collocate: basis_size must be >= 4");

  // Cloud statistics; reject multimodal input early.
  Eigen::MatrixXd mean(K, N), var(K, N);
  Eigen::VectorXd counts(K);
  for (int k = 0; k < K; ++k) {
    const auto& cloud = ds.clouds[k];
    const long P = cloud.rows();
    counts[k] = static_cast<double>(P);
    for (int n = 0; n < N; ++n) {
      if (detail::looks_bimodal(cloud.col(n)))
        throw data_error("collocate: variable '" + ds.variables[n] + "' at t = " +
                         std::to_string(ds.times[k]) +
                         " looks multimodal; single-mode collocation cannot represent it");
      const double m = cloud.col(n).mean();
      mean(k, n) = m;
      var(k, n) = P > 1 ? (cloud.col(n).array() - m).square().sum() / (P - 1) : 0.0;
    }
  }

  CollocatedTrajectory out;
  out.variables = ds.variables;
  out.fit_times = ds.times;
  out.basis = BsplineBasis(ds.times.front(), ds.times.back(), basis_size, 4);
  out.coef.resize(basis_size, N);
  out.sigma_bar.resize(K - 1, N);
  out.lambda.resize(N);

  // Design matrix on the cloud times.
  Eigen::MatrixXd B(K, basis_size);
  {
    std::vector<double> b0(basis_size);
    for (int k = 0; k < K; ++k) {
      out.basis.eval_all(ds.times[k], b0.data(), nullptr, nullptr);
      for (int j = 0; j < basis_size; ++j) B(k, j) = b0[j];
    }
  }

  // Curvature penalty G_ij = int B_i'' B_j'' dt. Cubic spline second
  // derivatives are piecewise linear, so 2-point Gauss per knot span is
  // exact.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(basis_size, basis_size);
  {
    const auto& knots = out.basis.knots();
    std::vector<double> d2(basis_size);
    const double gauss = 1.0 / std::sqrt(3.0);
    for (size_t s = 0; s + 1 < knots.size(); ++s) {
      const double a = knots[s], b = knots[s + 1];
      if (!(b > a)) continue;
      const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
      for (double gp : {mid - half * gauss, mid + half * gauss}) {
        out.basis.eval_all(gp, nullptr, nullptr, d2.data());
        for (int i = 0; i < basis_size; ++i) {
          if (d2[i] == 0.0) continue;
          for (int j = 0; j < basis_size; ++j)
            if (d2[j] != 0.0) G(i, j) += half * d2[i] * d2[j];
        }
      }
    }
  }

  const bool auto_lambda = !(lambda > 0.0);
  std::vector<double> grid;
  if (auto_lambda)
    for (int e = -8; e <= 2; ++e) grid.push_back(std::pow(10.0, e));

  for (int n = 0; n < N; ++n) {
    Eigen::VectorXd w(K);
    for (int k = 0; k < K; ++k) w[k] = counts[k] / std::max(var(k, n), 1e-12);
    const Eigen::MatrixXd BtWB = B.transpose() * w.asDiagonal() * B;
    const Eigen::VectorXd BtWy = B.transpose() * (w.asDiagonal() * mean.col(n));

    auto try_solve = [&](double lam, Eigen::VectorXd* c, double* gcv) {
      Eigen::LLT<Eigen::MatrixXd> llt(BtWB + lam * G);
      if (llt.info() != Eigen::Success) return false;
      Eigen::VectorXd sol = llt.solve(BtWy);
      if (!sol.allFinite()) return false;
      if (c) *c = sol;
      if (gcv) {
        const double tr_s = llt.solve(BtWB).trace();
        if (tr_s >= K - 1e-9) {
          *gcv = std::numeric_limits<double>::infinity();
        } else {
          const Eigen::VectorXd r = mean.col(n) - B * sol;
          const double rss_w = (w.array() * r.array().square()).sum();
          *gcv = rss_w * K / ((K - tr_s) * (K - tr_s));
        }
      }
      return true;
    };

    double lam = lambda;
    if (auto_lambda) {
      double best = std::numeric_limits<double>::infinity();
      lam = grid.front();
      for (double cand : grid) {
        double score;
        if (try_solve(cand, nullptr, &score) && score < best) {
          best = score;
          lam = cand;
        }
      }
    }
    Eigen::VectorXd c;
    bool solved = false;
    for (int attempt = 0; attempt <= 3; ++attempt) {
      if (try_solve(lam, &c, nullptr)) {
        solved = true;
        break;
      }
      if (attempt < 3) {
        std::cerr << "[pdl] warning: singular collocation system for variable '"
                  << ds.variables[n] << "'; raising lambda to " << lam * 10.0 << "\n";
        lam *= 10.0;
      }
    }
    if (!solved)
      throw numeric_error("collocate: penalized system for variable '" + ds.variables[n] +
                          "' is singular even after raising lambda");
    out.coef.col(n) = c;
    out.lambda[n] = lam;
  }

  for (int k = 0; k + 1 < K; ++k)
    for (int n = 0; n < N; ++n)
      out.sigma_bar(k, n) = std::sqrt(0.5 * (var(k, n) + var(k + 1, n)));
  return out;
}

/// Redraws synthetic population data along a collocated curve on a uniform
/// grid t_1, t_1 + dt_new, ...: cloud i gets P independent draws per variable
/// from N(curve_n(t_i), sigma_bar_n^2) with the spread of the original
/// interval containing t_i. Streams are keyed by (seed, variable, time
/// index), so results do not depend on execution order.
inline PopulationDataset resimulate(const CollocatedTrajectory& colloc, double dt_new,
                                    int samples_per_cloud, std::uint64_t seed,
                                    const std::string& intervention_id = "resim") {
  if (!(dt_new > 0.0)) throw data_error("resimulate: dt_new must be positive");
  if (samples_per_cloud < 1) throw data_error("resimulate: need at least 1 sample per cloud");
  const double t0 = colloc.fit_times.front();
  const double t_end = colloc.fit_times.back();
  std::vector<double> times;
  for (long i = 0;; ++i) {
    const double t = t0 + i * dt_new;
    if (t > t_end + 1e-9 * (t_end - t0)) break;
    times.push_back(t);
  }
  if (times.size() < 2)
    throw data_error("resimulate: dt_new leaves fewer than 2 times in the span");

  PopulationDataset ds;
  ds.variables = colloc.variables;
  ds.times = times;
  ds.intervention_id = intervention_id;
  const int N = colloc.n_vars();
  ds.clouds.assign(times.size(), Eigen::MatrixXd(samples_per_cloud, N));
  for (size_t i = 0; i < times.size(); ++i) {
    const int interval = colloc.interval_of(times[i]);
    for (int n = 0; n < N; ++n) {
      const double mu = colloc.eval(n, times[i]);
      const double sd = colloc.sigma_bar(interval, n);
      std::seed_seq sseq{seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i)};
      std::mt19937_64 rng(sseq);
      std::normal_distribution<double> gauss(mu, sd > 0.0 ? sd : 1e-300);
      for (int p = 0; p < samples_per_cloud; ++p) ds.clouds[i](p, n) = gauss(rng);
    }
  }
  ds.validate();
  return ds;
}

/// Keeps round(fraction * K) clouds (at least 2), evenly spread and always
/// including the first and last cloud; used to thin a dataset before
/// collocation.
inline PopulationDataset keep_fraction(const PopulationDataset& ds, double fraction) {
  ds.validate();
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw data_error("keep_fraction: fraction must lie in (0, 1]");
  const int K = ds.n_clouds();
  int keep = std::max(2, static_cast<int>(std::lround(fraction * K)));
  keep = std::min(keep, K);
  PopulationDataset out;
  out.variables = ds.variables;
  out.intervention_id = ds.intervention_id;
  out.kind = ds.kind;
  out.inhibition_target = ds.inhibition_target;
  for (int i = 0; i < keep; ++i) {
    const int k = static_cast<int>(std::lround(static_cast<double>(i) * (K - 1) / (keep - 1)));
    out.times.push_back(ds.times[k]);
    out.clouds.push_back(ds.clouds[k]);
  }
  out.validate();
  return out;
}

/// Deterministic trajectory of the inferred drift where forced variables are
/// pinned to their collocated curves instead of being integrated; the other
/// variables see those curve values inside their drift evaluations. With no
/// forced variables this is plain rk4_trajectory.
inline Eigen::MatrixXd rk4_with_forced(const SdeModel& model, const Eigen::VectorXd& x0,
                                       const std::vector<double>& times,
                                       const std::vector<bool>& forced,
                                       const CollocatedTrajectory& curves, int substeps = 50) {
  model.validate();
  const int n = model.n_vars();
  if (x0.size() != n) throw data_error("rk4_with_forced: initial state width mismatch");
  if (static_cast<int>(forced.size()) != n)
    throw data_error("rk4_with_forced: forced mask width mismatch");
  if (times.size() < 2) throw data_error("rk4_with_forced: need at least 2 times");

  std::vector<double> x(x0.data(), x0.data() + n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  auto pin = [&](std::vector<double>& state, double t) {
    for (int i = 0; i < n; ++i)
      if (forced[i]) state[i] = curves.eval(i, t);
  };
  auto zero_forced = [&](std::vector<double>& rate) {
    for (int i = 0; i < n; ++i)
      if (forced[i]) rate[i] = 0.0;
  };
  Eigen::MatrixXd out(static_cast<long>(times.size()), n);
  double t = times.front();
  pin(x, t);
  for (int i = 0; i < n; ++i) out(0, i) = x[i];
  for (size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw data_error("rk4_with_forced: times must increase");
    const double h = (times[k] - times[k - 1]) / substeps;
    for (int s = 0; s < substeps; ++s) {
      pin(x, t);
      model.drift(x.data(), k1.data());
      zero_forced(k1);
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
      pin(tmp, t + 0.5 * h);
      model.drift(tmp.data(), k2.data());
      zero_forced(k2);
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
      pin(tmp, t + 0.5 * h);
      model.drift(tmp.data(), k3.data());
      zero_forced(k3);
      for (int i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
      pin(tmp, t + h);
      model.drift(tmp.data(), k4.data());
      zero_forced(k4);
      for (int i = 0; i < n; ++i) {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(x[i]) || std::abs(x[i]) > 1e8)
          throw numeric_error("trajectory diverged: variable '" + model.variables[i] +
                              "' at t = " + std::to_string(t));
      }
      t += h;
    }
    t = times[k];
    pin(x, t);
    for (int i = 0; i < n; ++i) out(static_cast<long>(k), i) = x[i];
  }
  return out;
}

}  // namespace pdl
