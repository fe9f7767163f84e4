#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/basis.hpp"
#include "pdl/common.hpp"
#include "pdl/dataset.hpp"
#include "pdl/dictionary.hpp"

namespace pdl {

/// Plain Monte-Carlo estimate (1/P) sum_p f(x_p) over the rows of a cloud.
/// Throws numeric_error naming the sample index if f produces a non-finite
/// value.
template <typename F>
double mc_expectation(F&& f, const Eigen::MatrixXd& cloud) {
  if (cloud.rows() < 1) throw data_error("mc_expectation: empty cloud");
  double acc = 0.0;
  for (long p = 0; p < cloud.rows(); ++p) {
    const double v = f(cloud.row(p));
    if (!std::isfinite(v))
      throw numeric_error("mc_expectation: non-finite value at sample " + std::to_string(p));
    acc += v;
  }
  return acc / static_cast<double>(cloud.rows());
}

/// Trapezoid rule sum_k 0.5 (g_{k+1} + g_k)(t_{k+1} - t_k); the grid may be
/// irregular. Exact for piecewise-linear integrands.
inline double time_integral(const std::vector<double>& values, const std::vector<double>& times) {
  if (values.size() != times.size())
    throw data_error("time_integral: values and times must have equal length");
  if (times.size() < 2) throw data_error("time_integral: need at least 2 points");
  double acc = 0.0;
  for (size_t k = 0; k + 1 < times.size(); ++k) {
    if (!(times[k + 1] > times[k])) throw data_error("time_integral: times must increase");
    acc += 0.5 * (values[k + 1] + values[k]) * (times[k + 1] - times[k]);
  }
  return acc;
}

/// The linear system Z = Psi a_n + (sigma_n^2/2) W obtained by projecting the
/// probability-flow equation for variable n onto the product test functions
/// phi_{m1}(x_n) * tau_{m2}(t):
///
///   Z row   = [E_T(phi tau(T)) - E_0(phi tau(0))] - int E_t(phi tau'(t)) dt
///   Psi col = int E_t(phi' psi_q(x) tau(t)) dt          (one per atom q)
///   W row   = int E_t(phi'' tau(t)) dt                  (coefficient sigma^2/2)
///
/// Expectations are cloud Monte-Carlo means. Time integrals use the
/// product rule of FourierBasis::product_weights: the per-cloud estimates are
/// modeled piecewise linearly between measurement times (the trapezoid data
/// model) while the analytic temporal factor is integrated exactly, so high
/// temporal modes carry no extra quadrature bias. The boundary contribution C
/// is kept separately for diagnostics (it is already folded into Z). Rows are
/// labeled (dataset, m1, m2) with flat index
/// m1 * M2 + m2. Inhibition datasets contribute one extra unknown column each
/// (the projection of the inhibition input signal), zero for rows of other
/// datasets and for variables the inhibition does not target.
struct WeakSystem {
  int variable = -1;
  Eigen::VectorXd Z;
  Eigen::MatrixXd Psi;
  Eigen::VectorXd W;
  Eigen::VectorXd C;
  Eigen::MatrixXd inhib;                        ///< rows x R_inhib, may have 0 columns
  std::vector<std::pair<int, int>> inhib_map;   ///< per column: (dataset index, target)
  std::vector<std::array<int, 3>> labels;       ///< per row: (dataset index, m1, m2)

  long rows() const { return Z.size(); }
  int n_atoms() const { return static_cast<int>(Psi.cols()); }
};

/// Projects one dataset onto the test grid for variable n. The temporal
/// family uses the dataset's own horizon (bit-identical to the grid's when
/// horizons match). dataset_index is recorded in the row labels and the
/// inhibition column map.
inline WeakSystem assemble_weak_system(const PopulationDataset& ds, int variable,
                                       const Dictionary& dict, const TestGrid& grid,
                                       int dataset_index = 0) {
  ds.validate();
  const int N = ds.n_vars();
  if (variable < 0 || variable >= N) throw data_error("assemble: variable index out of range");
  if (dict.n_vars != N) throw data_error("assemble: dictionary variable count mismatch");
  if (static_cast<int>(grid.spatial.size()) != N)
    throw data_error("assemble: grid has wrong number of spatial bases");

  const int M1 = grid.m1, M2 = grid.m2, Q = dict.size();
  const int K = ds.n_clouds();
  const BsplineBasis& spline = grid.spatial[variable];
  const double horizon = ds.horizon();
  const FourierBasis fourier =
      std::abs(horizon - grid.temporal.period()) <= 1e-12 * std::max(1.0, grid.temporal.period())
          ? grid.temporal
          : FourierBasis(horizon, M2);

  const bool has_inhib_col = ds.kind == InterventionKind::Inhibition;
  const bool inhib_active = has_inhib_col && ds.inhibition_target == variable;

  // Per-cloud Monte-Carlo reductions: the spatial factor of every row/column
  // integrand, evaluated on the marginal of variable n (test functions and
  // boundary terms) and on the full samples (dictionary atoms).
  //   s0(k, m1)       = E[ phi_m1(x_n) ]
  //   s1[k](m1, q)    = E[ phi_m1'(x_n) psi_q(x) ]
  //   s2(k, m1)       = E[ phi_m1''(x_n) ]
  //   su(k, m1)       = E[ phi_m1'(x_n) x_target ]   (inhibition input)
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(K, M1);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(K, M1);
  Eigen::MatrixXd su = Eigen::MatrixXd::Zero(K, M1);
  std::vector<Eigen::MatrixXd> s1(K);

  std::vector<double> b0(M1), b1(M1), b2(M1), atoms(Q), xrow(N);
  for (int k = 0; k < K; ++k) {
    const auto& cloud = ds.clouds[k];
    const long P = cloud.rows();
    s1[k] = Eigen::MatrixXd::Zero(M1, Q);
    for (long p = 0; p < P; ++p) {
      for (int i = 0; i < N; ++i) xrow[i] = cloud(p, i);
      spline.eval_all(xrow[variable], b0.data(), b1.data(), b2.data());
      dict.eval_all(xrow.data(), atoms.data());
      for (int j = 0; j < M1; ++j) {
        if (b0[j] != 0.0) s0(k, j) += b0[j];
        if (b2[j] != 0.0) s2(k, j) += b2[j];
        if (b1[j] != 0.0) {
          for (int q = 0; q < Q; ++q) s1[k](j, q) += b1[j] * atoms[q];
          if (inhib_active) su(k, j) += b1[j] * xrow[variable];
        }
      }
    }
    s0.row(k) /= static_cast<double>(P);
    s2.row(k) /= static_cast<double>(P);
    s1[k] /= static_cast<double>(P);
    if (inhib_active) su.row(k) /= static_cast<double>(P);
    if (!s0.row(k).allFinite() || !s2.row(k).allFinite() || !s1[k].allFinite())
      for (int j = 0; j < M1; ++j) {
        if (!std::isfinite(s0(k, j)) || !std::isfinite(s2(k, j)))
          throw numeric_error("assemble: non-finite estimate for test function m1 = " +
                              std::to_string(j) + " (all m2 rows) at cloud " + std::to_string(k));
        for (int q = 0; q < Q; ++q)
          if (!std::isfinite(s1[k](j, q)))
            throw numeric_error("assemble: non-finite estimate for test function m1 = " +
                                std::to_string(j) + " (all m2 rows), atom q = " +
                                std::to_string(q) + " at cloud " + std::to_string(k));
      }
  }

  // Temporal factors at the shifted times (for the boundary terms) and the
  // exact product-quadrature weights for the time integrals.
  Eigen::MatrixXd F(K, M2);
  {
    std::vector<double> f(M2);
    for (int k = 0; k < K; ++k) {
      fourier.eval_all(ds.times[k] - ds.times.front(), f.data(), nullptr);
      for (int m = 0; m < M2; ++m) F(k, m) = f[m];
    }
  }
  Eigen::MatrixXd U, dU;
  fourier.product_weights(ds.times, U, dU);

  WeakSystem ws;
  ws.variable = variable;
  const int M = M1 * M2;
  ws.Z.resize(M);
  ws.C.resize(M);
  ws.W.resize(M);
  ws.Psi.resize(M, Q);
  ws.inhib.resize(M, has_inhib_col ? 1 : 0);
  if (has_inhib_col) ws.inhib_map.push_back({dataset_index, ds.inhibition_target});
  ws.labels.resize(M);

  for (int j = 0; j < M1; ++j)
    for (int m = 0; m < M2; ++m) {
      const int row = grid.flat_index(j, m);
      ws.labels[row] = {dataset_index, j, m};
      ws.C[row] = s0(K - 1, j) * F(K - 1, m) - s0(0, j) * F(0, m);
      double zt = 0.0, wt = 0.0, ut = 0.0;
      for (int k = 0; k < K; ++k) {
        zt += dU(m, k) * s0(k, j);
        wt += U(m, k) * s2(k, j);
        if (inhib_active) ut += U(m, k) * su(k, j);
      }
      ws.Z[row] = ws.C[row] - zt;
      ws.W[row] = wt;
      for (int q = 0; q < Q; ++q) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += U(m, k) * s1[k](j, q);
        ws.Psi(row, q) = acc;
      }
      if (has_inhib_col) ws.inhib(row, 0) = inhib_active ? ut : 0.0;
    }
  return ws;
}

/// Stacks per-dataset systems for the same variable and grid family into one
/// taller system sharing the drift unknowns. Rows are copied verbatim, so a
/// stacked block is bit-identical to its single-dataset system. Inhibition
/// columns are placed block-diagonally: each keeps its values on its own
/// dataset's rows and is zero elsewhere.
inline WeakSystem stack_systems(const std::vector<WeakSystem>& systems) {
  if (systems.empty()) throw data_error("stack_systems: nothing to stack");
  const int Q = systems.front().n_atoms();
  const int variable = systems.front().variable;
  long rows = 0;
  int n_inhib = 0;
  for (const auto& s : systems) {
    if (s.n_atoms() != Q) throw data_error("stack_systems: atom count mismatch");
    if (s.variable != variable) throw data_error("stack_systems: variable mismatch");
    rows += s.rows();
    n_inhib += static_cast<int>(s.inhib.cols());
  }
  WeakSystem out;
  out.variable = variable;
  out.Z.resize(rows);
  out.C.resize(rows);
  out.W.resize(rows);
  out.Psi.resize(rows, Q);
  out.inhib = Eigen::MatrixXd::Zero(rows, n_inhib);
  out.labels.reserve(rows);
  long at = 0;
  int icol = 0;
  for (const auto& s : systems) {
    out.Z.segment(at, s.rows()) = s.Z;
    out.C.segment(at, s.rows()) = s.C;
    out.W.segment(at, s.rows()) = s.W;
    out.Psi.middleRows(at, s.rows()) = s.Psi;
    for (long c = 0; c < s.inhib.cols(); ++c) {
      out.inhib.block(at, icol, s.rows(), 1) = s.inhib.col(c);
      out.inhib_map.push_back(s.inhib_map[c]);
      ++icol;
    }
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    at += s.rows();
  }
  return out;
}

/// Assembles and stacks all datasets of a set for one variable.
inline WeakSystem assemble_stacked(const InterventionSet& set, int variable,
                                   const Dictionary& dict, const TestGrid& grid) {
  std::vector<WeakSystem> parts;
  parts.reserve(set.datasets.size());
  for (size_t r = 0; r < set.datasets.size(); ++r)
    parts.push_back(
        assemble_weak_system(set.datasets[r], variable, dict, grid, static_cast<int>(r)));
  return stack_systems(parts);
}

}  // namespace pdl
