#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"
#include "pdl/sparse.hpp"

namespace pdl {

/// Frobenius relative error ||A_hat - A_true|| / ||A_true|| of the drift
/// coefficients. Diffusion is compared separately (see sigma_errors); a zero
/// true matrix is an error.
inline double relative_error(const Eigen::MatrixXd& A_hat, const Eigen::MatrixXd& A_true) {
  if (A_hat.rows() != A_true.rows() || A_hat.cols() != A_true.cols())
    throw data_error("relative_error: shape mismatch");
  const double denom = A_true.norm();
  if (denom == 0.0) throw data_error("relative_error: true matrix is zero");
  return (A_hat - A_true).norm() / denom;
}

struct PrecisionRecall {
  double precision;
  double recall;
};

/// Support recovery over (variable, atom) pairs. An empty estimated support
/// has precision 1 by convention; an empty true support has recall 1.
inline PrecisionRecall precision_recall(const std::vector<std::vector<int>>& support_hat,
                                        const std::vector<std::vector<int>>& support_true) {
  if (support_hat.size() != support_true.size())
    throw data_error("precision_recall: variable count mismatch");
  long tp = 0, n_hat = 0, n_true = 0;
  for (size_t n = 0; n < support_hat.size(); ++n) {
    n_hat += static_cast<long>(support_hat[n].size());
    n_true += static_cast<long>(support_true[n].size());
    for (int q : support_hat[n])
      for (int t : support_true[n])
        if (q == t) {
          ++tp;
          break;
        }
  }
  PrecisionRecall pr;
  pr.precision = n_hat == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(n_hat);
  pr.recall = n_true == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(n_true);
  return pr;
}

/// Time-averaged L2 distance per variable between two trajectories sampled on
/// the same grid: sqrt( (1/(t_K - t_1)) * trapz (x - y)^2 dt ). A constant
/// offset c yields exactly c. Mismatched grids are an error; interpolation to
/// a common grid is the caller's job.
inline Eigen::VectorXd trajectory_l2(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                     const std::vector<double>& times) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw data_error("trajectory_l2: shape mismatch");
  if (static_cast<size_t>(X.rows()) != times.size())
    throw data_error("trajectory_l2: time grid length mismatch");
  if (times.size() < 2) throw data_error("trajectory_l2: need at least 2 points");
  const double span = times.back() - times.front();
  if (!(span > 0.0)) throw data_error("trajectory_l2: times must increase");
  Eigen::VectorXd out(X.cols());
  for (long n = 0; n < X.cols(); ++n) {
    double acc = 0.0;
    for (size_t k = 0; k + 1 < times.size(); ++k) {
      const double a = X(static_cast<long>(k), n) - Y(static_cast<long>(k), n);
      const double b = X(static_cast<long>(k + 1), n) - Y(static_cast<long>(k + 1), n);
      acc += 0.5 * (a * a + b * b) * (times[k + 1] - times[k]);
    }
    out[n] = std::sqrt(acc / span);
  }
  return out;
}

/// Per-variable |sigma_hat - sigma_true|.
inline Eigen::VectorXd sigma_errors(const Eigen::VectorXd& sigma_hat,
                                    const Eigen::VectorXd& sigma_true) {
  if (sigma_hat.size() != sigma_true.size()) throw data_error("sigma_errors: size mismatch");
  return (sigma_hat - sigma_true).cwiseAbs();
}

/// Everything a benchmark comparison reports, serializable to JSON and a flat
/// CSV row.
struct EvaluationReport {
  double rel_error = std::nan("");
  double precision = std::nan("");
  double recall = std::nan("");
  std::vector<double> sigma_hat;
  std::vector<double> sigma_true;
  std::vector<double> trajectory_errors;  ///< per variable; empty when not computed
  std::vector<std::string> variables;
  std::uint64_t seed = 0;

  json to_json() const {
    json j;
    j["relative_error"] = rel_error;
    j["precision"] = precision;
    j["recall"] = recall;
    j["sigma_hat"] = sigma_hat;
    j["sigma_true"] = sigma_true;
    j["trajectory_l2"] = trajectory_errors;
    j["variables"] = variables;
    j["seed"] = seed;
    return j;
  }

  static std::string csv_header() {
    return "seed,relative_error,precision,recall,mean_trajectory_l2";
  }

  std::string csv_row() const {
    double mean_tl2 = std::nan("");
    if (!trajectory_errors.empty()) {
      mean_tl2 = 0.0;
      for (double v : trajectory_errors) mean_tl2 += v;
      mean_tl2 /= static_cast<double>(trajectory_errors.size());
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g",
                  static_cast<unsigned long long>(seed), rel_error, precision, recall, mean_tl2);
    return std::string(buf);
  }
};

/// Compares an inferred model against the generating truth. Forced variables
/// were deliberately not inferred, so their rows are excluded from the drift
/// error and support metrics. The model may use a larger dictionary than the
/// truth (extra atoms count as zero-coefficient truth); every truth atom must
/// exist in the model's dictionary, matched by its exponent signature.
inline EvaluationReport evaluate_against_truth(const SparseModel& fit, const SdeModel& truth,
                                               std::uint64_t seed = 0) {
  // Map truth columns into the model's dictionary.
  std::vector<int> col_map(truth.dict.size());
  for (int qt = 0; qt < truth.dict.size(); ++qt) {
    auto it = std::find(fit.dict.exponents.begin(), fit.dict.exponents.end(),
                        truth.dict.exponents[qt]);
    if (it == fit.dict.exponents.end())
      throw data_error("evaluate: the model dictionary cannot express the truth");
    col_map[qt] = static_cast<int>(it - fit.dict.exponents.begin());
  }
  EvaluationReport rep;
  rep.variables = fit.variables;
  rep.seed = seed;

  std::vector<int> rows;
  for (int n = 0; n < fit.n_vars(); ++n)
    if (fit.forced.empty() || !fit.forced[n]) rows.push_back(n);
  if (rows.empty()) throw data_error("evaluate: every variable is forced");
  Eigen::MatrixXd A_hat(rows.size(), fit.A_hat.cols());
  Eigen::MatrixXd A_true = Eigen::MatrixXd::Zero(rows.size(), fit.A_hat.cols());
  std::vector<std::vector<int>> s_hat, s_true;
  const auto true_supports = truth.supports();
  for (size_t i = 0; i < rows.size(); ++i) {
    A_hat.row(static_cast<long>(i)) = fit.A_hat.row(rows[i]);
    for (int qt = 0; qt < truth.dict.size(); ++qt)
      A_true(static_cast<long>(i), col_map[qt]) = truth.A(rows[i], qt);
    s_hat.push_back(fit.supports[rows[i]]);
    std::vector<int> mapped;
    for (int q : true_supports[rows[i]]) mapped.push_back(col_map[q]);
    std::sort(mapped.begin(), mapped.end());
    s_true.push_back(mapped);
  }
  rep.rel_error = relative_error(A_hat, A_true);
  auto pr = precision_recall(s_hat, s_true);
  rep.precision = pr.precision;
  rep.recall = pr.recall;
  rep.sigma_hat.assign(fit.sigma_hat.data(), fit.sigma_hat.data() + fit.sigma_hat.size());
  rep.sigma_true.assign(truth.sigma.data(), truth.sigma.data() + truth.sigma.size());
  return rep;
}

}  // namespace pdl
