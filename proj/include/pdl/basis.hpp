#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"
#include "pdl/dataset.hpp"

namespace pdl {

/// Family of M1 B-splines of order k (degree k-1) on [lo, hi], built on a
/// uniform knot vector with clamped ends, so the family is a partition of
/// unity on the whole interval. Evaluation outside [lo, hi] is silently zero.
/// At an interior knot, value and derivatives are taken from the right; at hi
/// from the left. Derivatives come from the Cox-de Boor derivative recurrence,
/// not from finite differences.
class BsplineBasis {
 public:
  BsplineBasis() = default;

  BsplineBasis(double lo, double hi, int m1, int order = 3)
      : lo_(lo), hi_(hi), m1_(m1), order_(order) {
    if (!(hi > lo)) throw data_error("BsplineBasis: domain must satisfy lo < hi");
    if (order < 2 || order > 4) throw data_error("BsplineBasis: order must be 2, 3 or 4");
    if (m1 < order)
      throw data_error("BsplineBasis: need at least " + std::to_string(order) +
                       " basis functions for order " + std::to_string(order));
    const int segments = m1 - order + 1;
    const double span = hi - lo;
    if (span / segments < 1e-9 * span)
      throw data_error("BsplineBasis: requested spline support below 1e-9 of the span");
    knots_.resize(m1 + order);
    const double step = span / segments;
    for (int i = 0; i < m1 + order; ++i) {
      if (i < order)
        knots_[i] = lo;
      else if (i >= m1)
        knots_[i] = hi;
      else
        knots_[i] = lo + (i - order + 1) * step;
    }
  }

  int size() const { return m1_; }
  int order() const { return order_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Share of the domain per basis function, (hi-lo)/M1. This is the width
  /// the benchmark configurations are quoted in (0.25 for 16 splines on
  /// [-2, 2]); the true support of an interior function is the knot step
  /// times the order, see support_width().
  double resolution() const { return (hi_ - lo_) / m1_; }

  /// True support of basis function j: knots[j+k] - knots[j].
  double support_width(int j) const {
    if (j < 0 || j >= m1_) throw data_error("BsplineBasis: basis index out of range");
    return knots_[j + order_] - knots_[j];
  }

  /// Values plus first and second derivatives of all M1 functions at x,
  /// written densely to b0/b1/b2 (each of length M1, zero outside the local
  /// support window). Null pointers skip that derivative order.
  void eval_all(double x, double* b0, double* b1, double* b2) const {
    const int p = order_ - 1;
    if (b0) std::fill(b0, b0 + m1_, 0.0);
    if (b1) std::fill(b1, b1 + m1_, 0.0);
    if (b2) std::fill(b2, b2 + m1_, 0.0);
    if (x < lo_ || x > hi_) return;

    // Non-empty span index j with knots[j] <= x < knots[j+1] (right limit);
    // x == hi uses the last span.
    int j;
    if (x >= hi_) {
      j = m1_ - 1;
    } else {
      const int segments = m1_ - order_ + 1;
      const double step = (hi_ - lo_) / segments;
      j = p + static_cast<int>((x - lo_) / step);
      if (j > m1_ - 1) j = m1_ - 1;
      while (j > p && x < knots_[j]) --j;
      while (j < m1_ - 1 && x >= knots_[j + 1]) ++j;
    }

    // Triangular Cox-de Boor table: ndu[d][r] holds N_{j-d+r,d}(x) for
    // degrees d = 0..p over the functions alive on span j; the lower
    // triangle keeps the knot differences needed by the derivative formula.
    double ndu[5][5], left[5], right[5];
    ndu[0][0] = 1.0;
    for (int d = 1; d <= p; ++d) {
      left[d] = x - knots_[j + 1 - d];
      right[d] = knots_[j + d] - x;
      double saved = 0.0;
      for (int r = 0; r < d; ++r) {
        ndu[d][r] = right[r + 1] + left[d - r];
        const double temp = ndu[r][d - 1] / ndu[d][r];
        ndu[r][d] = saved + right[r + 1] * temp;
        saved = left[d - r] * temp;
      }
      ndu[d][d] = saved;
    }
    if (b0)
      for (int r = 0; r <= p; ++r) b0[j - p + r] = ndu[r][p];

    // Derivative recurrence (orders 1 and 2) on the same table.
    const int nd = std::min(2, p);
    double a[2][5];
    for (int r = 0; r <= p; ++r) {
      a[0][0] = 1.0;
      int s1 = 0, s2 = 1;
      for (int der = 1; der <= nd; ++der) {
        double dv = 0.0;
        const int rk = r - der, pk = p - der;
        if (r >= der) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          dv = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? der - 1 : p - r;
        for (int jj = j1; jj <= j2; ++jj) {
          a[s2][jj] = (a[s1][jj] - a[s1][jj - 1]) / ndu[pk + 1][rk + jj];
          dv += a[s2][jj] * ndu[rk + jj][pk];
        }
        if (r <= pk) {
          a[s2][der] = -a[s1][der - 1] / ndu[pk + 1][r];
          dv += a[s2][der] * ndu[r][pk];
        }
        double factor = 1.0;
        for (int f = p; f > p - der; --f) factor *= f;
        if (der == 1 && b1) b1[j - p + r] = dv * factor;
        if (der == 2 && b2) b2[j - p + r] = dv * factor;
        std::swap(s1, s2);
      }
    }
  }

  double value(int jbasis, double x) const { return eval_one(jbasis, x, 0); }
  double derivative(int jbasis, double x) const { return eval_one(jbasis, x, 1); }
  double second_derivative(int jbasis, double x) const { return eval_one(jbasis, x, 2); }

 private:
  double eval_one(int jbasis, double x, int der) const {
    if (jbasis < 0 || jbasis >= m1_) throw data_error("BsplineBasis: basis index out of range");
    std::vector<double> buf(m1_);
    eval_all(x, der == 0 ? buf.data() : nullptr, der == 1 ? buf.data() : nullptr,
             der == 2 ? buf.data() : nullptr);
    return buf[jbasis];
  }

  double lo_ = 0.0, hi_ = 1.0;
  int m1_ = 0;
  int order_ = 3;
  std::vector<double> knots_;
};

/// Temporal test functions on [0, T]: mode 0 is the constant 1, followed by
/// cos/sin pairs at frequencies 2*pi*j/T. With an even mode count the last
/// sine is dropped, e.g. M2 = 4 gives {1, cos w1 t, sin w1 t, cos w2 t}.
class FourierBasis {
 public:
  FourierBasis() = default;

  FourierBasis(double period, int m2) : period_(period), m2_(m2) {
    if (!(period > 0.0)) throw data_error("FourierBasis: period must be positive");
    if (m2 < 1) throw data_error("FourierBasis: need at least one mode");
  }

  int size() const { return m2_; }
  double period() const { return period_; }
  int n_pairs() const { return m2_ / 2; }  ///< highest frequency index in use

  /// Values and time derivatives of all modes at t (t already shifted so the
  /// dataset starts at 0). Null pointers skip an output.
  void eval_all(double t, double* f, double* df) const {
    if (f) f[0] = 1.0;
    if (df) df[0] = 0.0;
    for (int i = 1; i < m2_; ++i) {
      const int pair = (i + 1) / 2;
      const double w = 2.0 * M_PI * pair / period_;
      if (i % 2 == 1) {
        if (f) f[i] = std::cos(w * t);
        if (df) df[i] = -w * std::sin(w * t);
      } else {
        if (f) f[i] = std::sin(w * t);
        if (df) df[i] = w * std::cos(w * t);
      }
    }
  }

  double value(int mode, double t) const {
    check_mode(mode);
    std::vector<double> buf(m2_);
    eval_all(t, buf.data(), nullptr);
    return buf[mode];
  }

  double derivative(int mode, double t) const {
    check_mode(mode);
    std::vector<double> buf(m2_);
    eval_all(t, nullptr, buf.data());
    return buf[mode];
  }

  /// Quadrature weights that integrate the piecewise-linear interpolant of
  /// sampled data exactly against every mode (U) and every mode's time
  /// derivative (dU):
  ///
  ///   int ghat(t) phi_m(t) dt = sum_k U(m, k) g(t_k)
  ///
  /// where ghat is the linear interpolant of {g(t_k)}. The sinusoid factor is
  /// integrated in closed form per interval, so the error is governed by the
  /// curvature of the data alone and never by the mode frequency; a plain
  /// trapezoid of the product would pick up an O((w dt)^2) bias on high
  /// modes. The constant mode row reduces to the ordinary trapezoid weights.
  /// Modes are evaluated at t - times.front(), matching eval_all usage on a
  /// dataset's own clock.
  void product_weights(const std::vector<double>& times, Eigen::MatrixXd& U,
                       Eigen::MatrixXd& dU) const {
    const int K = static_cast<int>(times.size());
    if (K < 2) throw data_error("FourierBasis: need at least 2 times for quadrature");
    for (int k = 0; k + 1 < K; ++k)
      if (!(times[k + 1] > times[k]))
        throw data_error("FourierBasis: quadrature times must increase");
    U = Eigen::MatrixXd::Zero(m2_, K);
    dU = Eigen::MatrixXd::Zero(m2_, K);
    for (int k = 0; k + 1 < K; ++k) {
      const double half = 0.5 * (times[k + 1] - times[k]);
      U(0, k) += half;
      U(0, k + 1) += half;
    }
    for (int pair = 1; 2 * pair - 1 < m2_; ++pair) {
      const double w = 2.0 * M_PI * pair / period_;
      const int ic = 2 * pair - 1;                   // cos mode row
      const int is = 2 * pair < m2_ ? 2 * pair : -1; // sin mode row, if present
      for (int k = 0; k + 1 < K; ++k) {
        const double t0 = times[k] - times.front();
        const double D = times[k + 1] - times[k];
        const double sD = std::sin(w * D);
        const double cD = std::cos(w * D);
        const double sh = std::sin(0.5 * w * D);
        const double omc = 2.0 * sh * sh;  // 1 - cos(wD) without cancellation
        // Local integrals over [0, D]: of cos/sin themselves and weighted by t.
        const double C0 = sD / w;
        const double S0 = omc / w;
        const double C1 = D * sD / w - omc / (w * w);
        const double S1 = -D * cD / w + sD / (w * w);
        // Hat functions (1 - t/D) and (t/D) against local cos/sin.
        const double ac = C0 - C1 / D, bc = C1 / D;
        const double as = S0 - S1 / D, bs = S1 / D;
        // Shift to the global phase at t0.
        const double c0 = std::cos(w * t0), s0 = std::sin(w * t0);
        const double A_cos = c0 * ac - s0 * as, B_cos = c0 * bc - s0 * bs;
        const double A_sin = s0 * ac + c0 * as, B_sin = s0 * bc + c0 * bs;
        U(ic, k) += A_cos;
        U(ic, k + 1) += B_cos;
        dU(ic, k) += -w * A_sin;  // d/dt cos(wt) = -w sin(wt)
        dU(ic, k + 1) += -w * B_sin;
        if (is > 0) {
          U(is, k) += A_sin;
          U(is, k + 1) += B_sin;
          dU(is, k) += w * A_cos;  // d/dt sin(wt) = w cos(wt)
          dU(is, k + 1) += w * B_cos;
        }
      }
    }
  }

 private:
  void check_mode(int mode) const {
    if (mode < 0 || mode >= m2_) throw data_error("FourierBasis: mode index out of range");
  }

  double period_ = 1.0;
  int m2_ = 0;
};

/// Spatio-temporal test function family: one spatial B-spline basis per
/// variable (shared across datasets, domains from the pooled data ranges) and
/// the temporal Fourier family. Row (m1, m2) of a weak system corresponds to
/// the product function; the flattened index is m = m1 * M2 + m2.
struct TestGrid {
  std::vector<BsplineBasis> spatial;
  FourierBasis temporal;  ///< built from the first dataset's horizon
  int m1 = 0;
  int m2 = 0;

  int rows_per_dataset() const { return m1 * m2; }
  int flat_index(int m1_idx, int m2_idx) const { return m1_idx * m2 + m2_idx; }

  static TestGrid build(const InterventionSet& set, int m1, int m2, double margin = 0.0,
                        int spline_order = 3) {
    set.validate();
    TestGrid g;
    g.m1 = m1;
    g.m2 = m2;
    const int n = set.n_vars();
    g.spatial.reserve(n);
    for (int v = 0; v < n; ++v) {
      auto [lo, hi] = variable_range(set, v, margin);
      g.spatial.emplace_back(lo, hi, m1, spline_order);
    }
    g.temporal = FourierBasis(set.datasets.front().horizon(), m2);
    return g;
  }
};

}  // namespace pdl
