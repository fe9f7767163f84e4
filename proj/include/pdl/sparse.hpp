#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"
#include "pdl/config.hpp"
#include "pdl/dataset.hpp"
#include "pdl/dictionary.hpp"
#include "pdl/simulate.hpp"
#include "pdl/weakform.hpp"

namespace pdl {

/// Column layout of an augmented weak system: drift atoms first, then one
/// gain column per inhibition, then the diffusion column.
struct ColumnMap {
  int n_atoms = 0;
  int n_inhib = 0;

  int diffusion() const { return n_atoms + n_inhib; }
  int total() const { return n_atoms + n_inhib + 1; }
  bool is_atom(int c) const { return c < n_atoms; }
  bool is_inhib(int c) const { return c >= n_atoms && c < n_atoms + n_inhib; }
};

/// Builds the candidate matrix [Psi | inhibition gains | W]; the unknown
/// vector is [a_n, b_1..b_R, sigma_n^2/2].
inline std::pair<Eigen::MatrixXd, ColumnMap> augment(const WeakSystem& ws) {
  ColumnMap map;
  map.n_atoms = ws.n_atoms();
  map.n_inhib = static_cast<int>(ws.inhib.cols());
  Eigen::MatrixXd out(ws.rows(), map.total());
  out.leftCols(map.n_atoms) = ws.Psi;
  if (map.n_inhib > 0) out.middleCols(map.n_atoms, map.n_inhib) = ws.inhib;
  out.col(map.diffusion()) = ws.W;
  return {std::move(out), map};
}

struct OmpOptions {
  int k_max = 1;                      ///< maximum active set size
  double theta = 0.01;                ///< stop when ||res|| / ||Z|| <= theta
  std::vector<int> prior_support;     ///< columns active before the greedy loop
  double hard_threshold = 0.0;        ///< drop |coef| <= tau afterwards
  std::vector<int> threshold_exempt;  ///< columns the threshold never removes
  int nonneg_column = -1;             ///< column dropped if its coefficient is negative
};

struct OmpResult {
  Eigen::VectorXd coef;                  ///< full-length, zero off the support
  std::vector<int> support;              ///< selected columns, ascending
  std::vector<double> residual_history;  ///< relative residual after each selection
  double rel_residual = 1.0;             ///< final relative residual
  bool rank_warning = false;             ///< stopped early on a rank-deficient refit
};

namespace detail {

inline Eigen::VectorXd ls_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool* rank_ok) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (rank_ok) *rank_ok = qr.rank() == A.cols();
  return qr.solve(b);
}

}  // namespace detail

/// Orthogonal matching pursuit with least-squares refits.
///
/// Columns are normalized to unit length for selection and fitting;
/// zero-norm columns are excluded outright. Iterations pick the candidate
/// most correlated with the residual (ties break to the lowest index) and
/// refit the whole active set with a rank-revealing QR; a rank-deficient
/// refit drops the newest column and stops with a warning. After the loop,
/// coefficients are rescaled to the original columns, entries with
/// |coef| <= hard_threshold are dropped (except exempted columns) and the
/// survivors refit, repeating until the active set is stable; a negative
/// coefficient on `nonneg_column` then removes that column (with a refit).
inline OmpResult omp_solve(const Eigen::VectorXd& Z, const Eigen::MatrixXd& Psi,
                           const OmpOptions& opt) {
  const long M = Z.size();
  const int C = static_cast<int>(Psi.cols());
  if (Psi.rows() != M) throw data_error("omp_solve: row count mismatch");
  if (opt.k_max < 1) throw data_error("omp_solve: k_max must be >= 1");

  OmpResult res;
  res.coef = Eigen::VectorXd::Zero(C);
  const double z_norm = Z.norm();
  if (z_norm == 0.0) {
    res.rel_residual = 0.0;
    return res;
  }

  // Unit-normalized candidates; zero-norm columns never participate.
  Eigen::VectorXd norms(C);
  std::vector<bool> excluded(C, false);
  double max_norm = 0.0;
  for (int c = 0; c < C; ++c) {
    norms[c] = Psi.col(c).norm();
    max_norm = std::max(max_norm, norms[c]);
  }
  Eigen::MatrixXd Qn(M, C);
  for (int c = 0; c < C; ++c) {
    if (norms[c] <= 1e-12 * std::max(max_norm, 1e-300)) {
      excluded[c] = true;
      Qn.col(c).setZero();
    } else {
      Qn.col(c) = Psi.col(c) / norms[c];
    }
  }

  std::vector<int> active;
  std::vector<bool> in_active(C, false);
  for (int c : opt.prior_support) {
    if (c < 0 || c >= C) throw data_error("omp_solve: prior support index out of range");
    if (excluded[c] || in_active[c]) continue;
    active.push_back(c);
    in_active[c] = true;
  }

  Eigen::VectorXd residual = Z;
  Eigen::VectorXd x;
  auto refit = [&](bool* ok) {
    Eigen::MatrixXd A(M, active.size());
    for (size_t i = 0; i < active.size(); ++i) A.col(i) = Qn.col(active[i]);
    x = detail::ls_solve(A, Z, ok);
    residual = Z - A * x;
  };
  if (!active.empty()) {
    bool ok = true;
    refit(&ok);
    if (!ok) {
      std::cerr << "[pdl] warning: rank-deficient prior support in omp_solve\n";
      res.rank_warning = true;
    }
  }

  while (residual.norm() / z_norm > opt.theta &&
         static_cast<int>(active.size()) < opt.k_max) {
    int best = -1;
    double best_corr = 0.0;
    for (int c = 0; c < C; ++c) {
      if (excluded[c] || in_active[c]) continue;
      const double corr = std::abs(Qn.col(c).dot(residual));
      if (corr > best_corr + 1e-15 * best_corr) {
        best = c;
        best_corr = corr;
      }
    }
    if (best < 0 || best_corr <= 1e-13 * residual.norm()) break;
    active.push_back(best);
    in_active[best] = true;
    bool ok = true;
    refit(&ok);
    if (!ok) {
      std::cerr << "[pdl] warning: omp_solve hit a rank-deficient refit; dropping column "
                << best << " and stopping\n";
      in_active[best] = false;
      active.pop_back();
      res.rank_warning = true;
      if (!active.empty()) refit(nullptr);
      else residual = Z;
      break;
    }
    res.residual_history.push_back(residual.norm() / z_norm);
  }

  // Back to original column scales.
  for (size_t i = 0; i < active.size(); ++i) res.coef[active[i]] = x[i] / norms[active[i]];

  auto refit_original = [&](const std::vector<int>& cols) {
    res.coef.setZero();
    if (cols.empty()) {
      residual = Z;
      return;
    }
    Eigen::MatrixXd A(M, cols.size());
    for (size_t i = 0; i < cols.size(); ++i) A.col(i) = Psi.col(cols[i]);
    Eigen::VectorXd sol = detail::ls_solve(A, Z, nullptr);
    for (size_t i = 0; i < cols.size(); ++i) res.coef[cols[i]] = sol[i];
    residual = Z - A * sol;
  };

  if (opt.hard_threshold > 0.0 && !active.empty()) {
    // Iterate drop-and-refit: removing one small atom shifts weight onto the
    // survivors, which can push another one under the threshold.
    std::set<int> exempt(opt.threshold_exempt.begin(), opt.threshold_exempt.end());
    for (;;) {
      std::vector<int> kept;
      for (int c : active)
        if (exempt.count(c) || std::abs(res.coef[c]) > opt.hard_threshold) kept.push_back(c);
      if (kept.size() == active.size()) break;
      active = kept;
      refit_original(active);
      if (active.empty()) break;
    }
  }

  if (opt.nonneg_column >= 0 && res.coef[opt.nonneg_column] < 0.0) {
    active.erase(std::remove(active.begin(), active.end(), opt.nonneg_column), active.end());
    refit_original(active);
  }

  std::sort(active.begin(), active.end());
  res.support = active;
  res.rel_residual = residual.norm() / z_norm;
  return res;
}

/// Bayesian information criterion M ln(rss/M) + k ln(M). A zero rss is
/// floored at 1e-300 with a warning so model comparison stays finite.
inline double bic_score(double rss, int k_support, long m_rows) {
  if (m_rows < 1) throw data_error("bic_score: needs at least one row");
  if (rss < 0.0) throw data_error("bic_score: negative rss");
  if (rss == 0.0) {
    std::cerr << "[pdl] warning: zero residual sum of squares in bic_score; flooring\n";
    rss = 1e-300;
  }
  const double m = static_cast<double>(m_rows);
  return m * std::log(rss / m) + k_support * std::log(m);
}

/// One autotuning curve point.
struct TunePoint {
  double theta;
  double bic;
  int support_size;
  double train_rel_residual;
  double test_rss;
};

struct TuneResult {
  double theta_star = 0.0;
  OmpResult best;
  std::vector<TunePoint> curve;
};

/// Selects theta by fitting on the train system and scoring BIC with the
/// trained coefficients on the held-out test rows. The grid is scanned in
/// ascending order and ties keep the first (smallest) theta. Returns the
/// winning refit together with the full curve.
inline TuneResult autotune(const Eigen::VectorXd& Z_train, const Eigen::MatrixXd& Psi_train,
                           const Eigen::VectorXd& Z_test, const Eigen::MatrixXd& Psi_test,
                           std::vector<double> theta_grid, const OmpOptions& base) {
  if (theta_grid.empty()) throw data_error("autotune: empty theta grid");
  if (Psi_train.cols() != Psi_test.cols()) throw data_error("autotune: column count mismatch");
  std::sort(theta_grid.begin(), theta_grid.end());
  theta_grid.erase(std::unique(theta_grid.begin(), theta_grid.end()), theta_grid.end());

  TuneResult out;
  double best_bic = std::numeric_limits<double>::infinity();
  for (double theta : theta_grid) {
    OmpOptions opt = base;
    opt.theta = theta;
    OmpResult fit = omp_solve(Z_train, Psi_train, opt);
    const double rss = (Z_test - Psi_test * fit.coef).squaredNorm();
    const double bic = bic_score(rss, static_cast<int>(fit.support.size()), Z_test.size());
    out.curve.push_back({theta, bic, static_cast<int>(fit.support.size()), fit.rel_residual, rss});
    if (bic < best_bic) {
      best_bic = bic;
      out.theta_star = theta;
      out.best = std::move(fit);
    }
  }
  return out;
}

/// Inference output for a whole system: per-variable drift rows over the
/// dictionary, diffusion estimates, and diagnostics. Forced variables (prior
/// knowledge: dynamics not inferred, data still used as dictionary input for
/// the others) keep a zero row and are flagged.
struct SparseModel {
  std::vector<std::string> variables;
  Dictionary dict;
  Eigen::MatrixXd A_hat;
  Eigen::VectorXd sigma_hat;
  std::vector<std::vector<int>> supports;  ///< drift atom indices per variable
  std::vector<double> residuals;           ///< relative residual per variable
  std::vector<double> theta_used;
  std::vector<bool> forced;
  std::vector<std::string> failures;  ///< per-variable error text, empty = ok

  /// Inhibition gains: (variable, dataset index, gain).
  struct Gain {
    int variable;
    int dataset;
    double gain;
  };
  std::vector<Gain> gains;

  std::vector<TuneResult> tuning;  ///< per variable; empty curve when not tuned
  json config_used;

  int n_vars() const { return static_cast<int>(variables.size()); }

  json to_json() const {
    json j;
    j["variables"] = variables;
    j["dictionary"] = dict.to_json();
    json a = json::array();
    for (int n = 0; n < A_hat.rows(); ++n) {
      json row = json::array();
      for (int q = 0; q < A_hat.cols(); ++q) row.push_back(A_hat(n, q));
      a.push_back(std::move(row));
    }
    j["A_hat"] = std::move(a);
    j["sigma_hat"] =
        std::vector<double>(sigma_hat.data(), sigma_hat.data() + sigma_hat.size());
    j["supports"] = supports;
    j["residuals"] = residuals;
    j["theta_used"] = theta_used;
    j["forced"] = json::array();
    for (bool f : forced) j["forced"].push_back(f);
    j["failures"] = failures;
    if (!gains.empty()) {
      json g = json::array();
      for (const auto& gn : gains)
        g.push_back({{"variable", gn.variable}, {"dataset", gn.dataset}, {"gain", gn.gain}});
      j["inhibition_gains"] = std::move(g);
    }
    j["config"] = config_used;
    return j;
  }

  static SparseModel from_json(const json& j) {
    SparseModel m;
    m.variables = j.at("variables").get<std::vector<std::string>>();
    m.dict = Dictionary::from_json(j.at("dictionary"));
    const auto& a = j.at("A_hat");
    m.A_hat.resize(static_cast<long>(a.size()), m.dict.size());
    for (long n = 0; n < m.A_hat.rows(); ++n)
      for (long q = 0; q < m.A_hat.cols(); ++q) m.A_hat(n, q) = a[n][q].get<double>();
    auto sig = j.at("sigma_hat").get<std::vector<double>>();
    m.sigma_hat = Eigen::Map<Eigen::VectorXd>(sig.data(), static_cast<long>(sig.size()));
    m.supports = j.at("supports").get<std::vector<std::vector<int>>>();
    m.residuals = j.at("residuals").get<std::vector<double>>();
    m.theta_used = j.at("theta_used").get<std::vector<double>>();
    for (const auto& f : j.at("forced")) m.forced.push_back(f.get<bool>());
    m.failures = j.at("failures").get<std::vector<std::string>>();
    if (j.contains("inhibition_gains"))
      for (const auto& g : j["inhibition_gains"])
        m.gains.push_back({g.at("variable").get<int>(), g.at("dataset").get<int>(),
                           g.at("gain").get<double>()});
    m.config_used = j.value("config", json::object());
    return m;
  }

  /// Drift-only dynamical model from the inferred coefficients, for
  /// resimulation and trajectory comparison.
  SdeModel to_sde() const {
    SdeModel m;
    m.variables = variables;
    m.dict = dict;
    m.A = A_hat;
    m.sigma = sigma_hat;
    m.compile();
    return m;
  }
};

/// Runs the full pipeline for every variable: assemble (train split), stack,
/// augment, tune theta by BIC on the test split (or fit at the fixed theta
/// when the grid is empty), then record the drift row, inhibition gains and
/// sigma_hat = sqrt(max(0, 2 w)). Variables listed in forced_variables are
/// skipped (zero row, flagged). A failure in one variable is recorded and
/// inference continues with the rest.
inline SparseModel infer_all(const InterventionSet& set, const ExperimentConfig& cfg) {
  set.validate();
  cfg.validate();
  const int N = set.n_vars();
  const auto& names = set.datasets.front().variables;

  Dictionary dict = Dictionary::build(N, cfg.dictionary.max_degree, cfg.dictionary.include_constant,
                                      cfg.dictionary.include_cross_terms);
  const int Q = dict.size();
  const int k_max = cfg.effective_k_max(Q);
  TestGrid grid = TestGrid::build(set, cfg.basis.m1, cfg.basis.m2, cfg.basis.margin,
                                  cfg.basis.spline_order);

  const bool tuned = !cfg.omp.theta_grid.empty();
  InterventionSet train, test;
  if (tuned) {
    for (size_t r = 0; r < set.datasets.size(); ++r) {
      auto parts = split_dataset(set.datasets[r], cfg.split.fractions(),
                                 cfg.seed + 10007 * (r + 1));
      train.datasets.push_back(std::move(parts[0]));
      test.datasets.push_back(std::move(parts[1]));
    }
  } else {
    train = set;
  }

  SparseModel model;
  model.variables = names;
  model.dict = dict;
  model.A_hat = Eigen::MatrixXd::Zero(N, Q);
  model.sigma_hat = Eigen::VectorXd::Zero(N);
  model.supports.resize(N);
  model.residuals.assign(N, 0.0);
  model.theta_used.assign(N, cfg.omp.theta);
  model.forced.assign(N, false);
  model.failures.assign(N, "");
  model.tuning.resize(N);
  model.config_used = config_to_json(cfg);

  for (int n = 0; n < N; ++n) {
    if (std::find(cfg.forced_variables.begin(), cfg.forced_variables.end(), names[n]) !=
        cfg.forced_variables.end()) {
      model.forced[n] = true;
      continue;
    }
    try {
      WeakSystem ws_train = assemble_stacked(train, n, dict, grid);
      auto [A_train, map] = augment(ws_train);

      OmpOptions opt;
      opt.k_max = std::min(k_max + map.n_inhib, map.total());
      opt.theta = cfg.omp.theta;
      opt.hard_threshold = cfg.omp.hard_threshold;
      for (int c : cfg.omp.prior_support) {
        if (c < 0 || c >= Q) throw data_error("config: prior_support atom index out of range");
        opt.prior_support.push_back(c);
      }
      if (cfg.omp.seed_diffusion) opt.prior_support.push_back(map.diffusion());
      for (int c = Q; c < map.total(); ++c) opt.threshold_exempt.push_back(c);
      if (cfg.omp.nonneg_diffusion) opt.nonneg_column = map.diffusion();

      OmpResult fit;
      if (tuned) {
        WeakSystem ws_test = assemble_stacked(test, n, dict, grid);
        auto [A_test, map_test] = augment(ws_test);
        TuneResult tr = autotune(ws_train.Z, A_train, ws_test.Z, A_test, cfg.omp.theta_grid, opt);
        model.theta_used[n] = tr.theta_star;
        fit = tr.best;
        model.tuning[n] = std::move(tr);
      } else {
        fit = omp_solve(ws_train.Z, A_train, opt);
      }

      for (int q = 0; q < Q; ++q) model.A_hat(n, q) = fit.coef[q];
      for (int c : fit.support)
        if (map.is_atom(c)) model.supports[n].push_back(c);
      for (int i = 0; i < map.n_inhib; ++i)
        if (fit.coef[Q + i] != 0.0)
          model.gains.push_back({n, ws_train.inhib_map[i].first, fit.coef[Q + i]});
      model.sigma_hat[n] = std::sqrt(std::max(0.0, 2.0 * fit.coef[map.diffusion()]));
      model.residuals[n] = fit.rel_residual;
    } catch (const std::exception& e) {
      model.failures[n] = e.what();
      model.A_hat.row(n).setZero();
      model.supports[n].clear();
    }
  }
  return model;
}

}  // namespace pdl
