#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"

namespace pdl {

/// Library of candidate drift atoms: multivariate monomials over N variables,
/// stored as exponent vectors in graded lexicographic order (constant first,
/// then degree 1 terms, then degree 2, ...). The order is fixed at build time
/// and preserved by serialization, so column q always means the same atom.
struct Dictionary {
  int n_vars = 0;
  std::vector<std::vector<int>> exponents;  ///< Q entries of length n_vars

  int size() const { return static_cast<int>(exponents.size()); }

  static Dictionary build(int n_vars, int max_degree, bool include_constant,
                          bool include_cross_terms) {
    if (n_vars < 1) throw data_error("dictionary needs at least one variable");
    if (max_degree < 1) throw data_error("dictionary max_degree must be >= 1");
    Dictionary d;
    d.n_vars = n_vars;
    std::vector<int> e(n_vars, 0);
    for (int deg = include_constant ? 0 : 1; deg <= max_degree; ++deg)
      append_degree(d, e, 0, deg, include_cross_terms);
    return d;
  }

  double eval_atom(int q, const double* x) const {
    double v = 1.0;
    const auto& e = exponents[q];
    for (int n = 0; n < n_vars; ++n)
      for (int j = 0; j < e[n]; ++j) v *= x[n];
    return v;
  }

  /// Writes all Q atom values for one sample.
  void eval_all(const double* x, double* out) const {
    for (int q = 0; q < size(); ++q) out[q] = eval_atom(q, x);
  }

  /// Atom values for every row of X (P x N) as a P x Q matrix.
  Eigen::MatrixXd eval_matrix(const Eigen::MatrixXd& X) const {
    if (X.cols() != n_vars) throw data_error("dictionary evaluation: sample width mismatch");
    Eigen::MatrixXd out(X.rows(), size());
    std::vector<double> x(n_vars), row(size());
    for (long p = 0; p < X.rows(); ++p) {
      for (int n = 0; n < n_vars; ++n) x[n] = X(p, n);
      eval_all(x.data(), row.data());
      for (int q = 0; q < size(); ++q) out(p, q) = row[q];
    }
    return out;
  }

  std::string atom_name(int q, const std::vector<std::string>& names) const {
    const auto& e = exponents[q];
    std::string s;
    for (int n = 0; n < n_vars; ++n) {
      if (e[n] == 0) continue;
      if (!s.empty()) s += "*";
      s += names[n];
      if (e[n] > 1) s += "^" + std::to_string(e[n]);
    }
    return s.empty() ? "1" : s;
  }

  /// Index of the atom with the given exponent vector, or -1.
  int find(const std::vector<int>& e) const {
    for (int q = 0; q < size(); ++q)
      if (exponents[q] == e) return q;
    return -1;
  }

  /// Index of the pure monomial x_n, or -1.
  int find_linear(int n) const {
    std::vector<int> e(n_vars, 0);
    e[n] = 1;
    return find(e);
  }

  json to_json() const {
    json j;
    j["n_vars"] = n_vars;
    j["exponents"] = exponents;
    return j;
  }

  static Dictionary from_json(const json& j) {
    Dictionary d;
    d.n_vars = j.at("n_vars").get<int>();
    d.exponents = j.at("exponents").get<std::vector<std::vector<int>>>();
    for (const auto& e : d.exponents)
      if (static_cast<int>(e.size()) != d.n_vars)
        throw data_error("dictionary JSON: exponent vector width mismatch");
    return d;
  }

 private:
  // Lexicographic within a degree: leading variables take the highest powers
  // first, e.g. degree 2 over (x1, x2) yields x1^2, x1*x2, x2^2.
  static void append_degree(Dictionary& d, std::vector<int>& e, int pos, int remaining,
                            bool cross) {
    if (pos == d.n_vars - 1) {
      e[pos] = remaining;
      if (cross || nonzero_count(e) <= 1) d.exponents.push_back(e);
      e[pos] = 0;
      return;
    }
    for (int p = remaining; p >= 0; --p) {
      e[pos] = p;
      append_degree(d, e, pos + 1, remaining - p, cross);
    }
    e[pos] = 0;
  }

  static int nonzero_count(const std::vector<int>& e) {
    int c = 0;
    for (int v : e) c += (v != 0);
    return c;
  }
};

}  // namespace pdl
