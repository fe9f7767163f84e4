#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdl/common.hpp"

namespace pdl {

enum class InterventionKind { Activation, Inhibition };

inline std::string kind_name(InterventionKind k) {
  return k == InterventionKind::Activation ? "activation" : "inhibition";
}

/// Cross-sectional population measurements of one experiment: at each
/// measurement time t_k an unordered cloud of P_k samples in R^N. Sample rows
/// carry no trajectory identity; cloud k and cloud k+1 are independent draws.
struct PopulationDataset {
  std::vector<std::string> variables;   ///< N variable names
  std::vector<double> times;            ///< K strictly increasing times, K >= 2
  std::vector<Eigen::MatrixXd> clouds;  ///< K matrices, cloud k is P_k x N
  std::string intervention_id = "0";
  InterventionKind kind = InterventionKind::Activation;
  int inhibition_target = -1;  ///< variable index, only meaningful for inhibitions

  int n_vars() const { return static_cast<int>(variables.size()); }
  int n_clouds() const { return static_cast<int>(times.size()); }
  double horizon() const { return times.back() - times.front(); }

  /// Structural invariants; throws data_error on violation.
  void validate() const {
    const int n = n_vars();
    if (n < 1) throw data_error("dataset has no variables");
    if (times.size() < 2)
      throw data_error("dataset needs at least 2 distinct measurement times, got " +
                       std::to_string(times.size()));
    if (clouds.size() != times.size())
      throw data_error("dataset has " + std::to_string(clouds.size()) + " clouds for " +
                       std::to_string(times.size()) + " times");
    for (size_t k = 0; k + 1 < times.size(); ++k)
      if (!(times[k] < times[k + 1]))
        throw data_error("measurement times must be strictly increasing at index " +
                         std::to_string(k));
    for (size_t k = 0; k < clouds.size(); ++k) {
      if (clouds[k].cols() != n)
        throw data_error("cloud " + std::to_string(k) + " has " +
                         std::to_string(clouds[k].cols()) + " columns, expected " +
                         std::to_string(n));
      if (clouds[k].rows() < 1)
        throw data_error("cloud " + std::to_string(k) + " is empty");
      if (!clouds[k].allFinite())
        throw data_error("cloud " + std::to_string(k) + " contains non-finite values");
    }
    if (kind == InterventionKind::Inhibition && (inhibition_target < 0 || inhibition_target >= n))
      throw data_error("inhibition target out of range for intervention '" + intervention_id + "'");
  }
};

/// A family of experiments over the same variables, one dataset per
/// intervention. Time grids may differ between datasets.
struct InterventionSet {
  std::vector<PopulationDataset> datasets;

  int n_vars() const { return datasets.empty() ? 0 : datasets.front().n_vars(); }

  void validate() const {
    if (datasets.empty()) throw data_error("intervention set is empty");
    for (const auto& ds : datasets) {
      ds.validate();
      if (ds.variables != datasets.front().variables)
        throw data_error("intervention '" + ds.intervention_id +
                         "' has different variables than the first dataset");
    }
  }
};

/// Observed range of variable n across all clouds of all datasets, inflated by
/// margin*span on each side. A degenerate zero-span range is widened by 1e-6
/// with a warning instead of failing.
inline std::pair<double, double> variable_range(const InterventionSet& set, int n,
                                                double margin = 0.0) {
  if (set.datasets.empty()) throw data_error("variable_range: empty intervention set");
  if (n < 0 || n >= set.n_vars()) throw data_error("variable_range: variable index out of range");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& ds : set.datasets)
    for (const auto& cloud : ds.clouds) {
      lo = std::min(lo, cloud.col(n).minCoeff());
      hi = std::max(hi, cloud.col(n).maxCoeff());
    }
  if (!(hi > lo)) {
    std::cerr << "[pdl] warning: variable " << n
              << " has zero observed span; widening by 1e-6\n";
    lo -= 1e-6;
    hi += 1e-6;
  }
  const double span = hi - lo;
  return {lo - margin * span, hi + margin * span};
}

inline std::pair<double, double> variable_range(const PopulationDataset& ds, int n,
                                                double margin = 0.0) {
  InterventionSet set;
  set.datasets.push_back(ds);
  return variable_range(set, n, margin);
}

/// Splits every cloud of a dataset into train/test/validation parts with the
/// given positive fractions (must sum to 1). Sampling is a seeded shuffle per
/// cloud; the same (dataset, fractions, seed) always yields the same split.
/// Test and validation receive max(1, floor(f*P_k)) samples, train the rest.
/// A cloud smaller than the number of parts is an error.
inline std::array<PopulationDataset, 3> split_dataset(const PopulationDataset& ds,
                                                      const std::array<double, 3>& fractions,
                                                      std::uint64_t seed) {
  ds.validate();
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw data_error("split fractions must all be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw data_error("split fractions must sum to 1");

  std::array<PopulationDataset, 3> parts;
  for (auto& p : parts) {
    p.variables = ds.variables;
    p.times = ds.times;
    p.intervention_id = ds.intervention_id;
    p.kind = ds.kind;
    p.inhibition_target = ds.inhibition_target;
    p.clouds.resize(ds.clouds.size());
  }
  for (size_t k = 0; k < ds.clouds.size(); ++k) {
    const auto& cloud = ds.clouds[k];
    const long P = cloud.rows();
    if (P < 3)
      throw data_error("cloud " + std::to_string(k) + " has " + std::to_string(P) +
                       " samples, fewer than the 3 split parts");
    std::vector<long> idx(P);
    std::iota(idx.begin(), idx.end(), 0);
    std::seed_seq sseq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(k)};
    std::mt19937_64 rng(sseq);
    std::shuffle(idx.begin(), idx.end(), rng);
    const long n_test = std::max<long>(1, static_cast<long>(std::floor(fractions[1] * P)));
    const long n_val = std::max<long>(1, static_cast<long>(std::floor(fractions[2] * P)));
    const long n_train = P - n_test - n_val;
    if (n_train < 1)
      throw data_error("cloud " + std::to_string(k) + " too small for the requested fractions");
    auto take = [&](long begin, long count) {
      Eigen::MatrixXd out(count, cloud.cols());
      for (long i = 0; i < count; ++i) out.row(i) = cloud.row(idx[begin + i]);
      return out;
    };
    parts[0].clouds[k] = take(0, n_train);
    parts[1].clouds[k] = take(n_train, n_test);
    parts[2].clouds[k] = take(n_train + n_test, n_val);
  }
  return parts;
}

// ---------------------------------------------------------------------------
// File formats.
//
// CSV: header "time,sample_id,<var_1>,...,<var_N>,intervention_id", one row
// per sample. sample_id is carried but ignored (clouds are unordered). Rows
// sharing a time belong to one cloud; duplicate times merge. CSV cannot
// express intervention kinds, so loaded datasets default to activation.
//
// JSON: {"variables": [...], "interventions": [{"id", "kind", "target"?,
// "times": [...], "clouds": [[[...]]]}]} with clouds indexed [k][p][n]. All
// values are 64-bit floats and round trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, size_t line_no, const std::string& what) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw data_error("line " + std::to_string(line_no) + ": cannot parse " + what + " value '" +
                     s + "'");
  }
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace detail

inline void save_interventions_csv(const InterventionSet& set, const std::string& path) {
  set.validate();
  std::string out = "time,sample_id";
  for (const auto& v : set.datasets.front().variables) out += "," + v;
  out += ",intervention_id\n";
  for (const auto& ds : set.datasets) {
    long sid = 0;
    for (size_t k = 0; k < ds.clouds.size(); ++k)
      for (long p = 0; p < ds.clouds[k].rows(); ++p) {
        out += detail::format_double(ds.times[k]);
        out += "," + std::to_string(sid++);
        for (long n = 0; n < ds.clouds[k].cols(); ++n)
          out += "," + detail::format_double(ds.clouds[k](p, n));
        out += "," + ds.intervention_id + "\n";
      }
  }
  write_text_file(path, out);
}

inline InterventionSet load_interventions_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header.front() != "time" || header[1] != "sample_id" ||
      header.back() != "intervention_id")
    throw data_error(path + ": header must be time,sample_id,<variables...>,intervention_id");
  std::vector<std::string> variables(header.begin() + 2, header.end() - 1);
  const size_t n = variables.size();

  // intervention id -> time -> sample rows
  std::map<std::string, std::map<double, std::vector<std::vector<double>>>> groups;
  std::vector<std::string> id_order;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != n + 3)
      throw data_error(path + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(n + 3));
    double t = detail::parse_double(cells[0], line_no, "time");
    std::vector<double> x(n);
    for (size_t j = 0; j < n; ++j) {
      x[j] = detail::parse_double(cells[2 + j], line_no, variables[j]);
      if (!std::isfinite(x[j]))
        throw data_error(path + ": line " + std::to_string(line_no) + ": non-finite value for " +
                         variables[j]);
    }
    const std::string& id = cells.back();
    if (!groups.count(id)) id_order.push_back(id);
    groups[id][t].push_back(std::move(x));
  }
  if (groups.empty()) throw data_error(path + ": no data rows");

  InterventionSet set;
  for (const auto& id : id_order) {
    PopulationDataset ds;
    ds.variables = variables;
    ds.intervention_id = id;
    for (const auto& [t, rows] : groups[id]) {
      ds.times.push_back(t);
      Eigen::MatrixXd cloud(static_cast<long>(rows.size()), static_cast<long>(n));
      for (size_t p = 0; p < rows.size(); ++p)
        for (size_t j = 0; j < n; ++j) cloud(static_cast<long>(p), static_cast<long>(j)) = rows[p][j];
      ds.clouds.push_back(std::move(cloud));
    }
    if (ds.times.size() < 2)
      throw data_error(path + ": intervention '" + id + "' has " +
                       std::to_string(ds.times.size()) +
                       " distinct measurement times; at least 2 required");
    ds.validate();
    set.datasets.push_back(std::move(ds));
  }
  return set;
}

inline json interventions_to_json(const InterventionSet& set) {
  set.validate();
  json doc;
  doc["variables"] = set.datasets.front().variables;
  doc["interventions"] = json::array();
  for (const auto& ds : set.datasets) {
    json j;
    j["id"] = ds.intervention_id;
    j["kind"] = kind_name(ds.kind);
    if (ds.kind == InterventionKind::Inhibition) j["target"] = ds.inhibition_target;
    j["times"] = ds.times;
    json clouds = json::array();
    for (const auto& cloud : ds.clouds) {
      json ck = json::array();
      for (long p = 0; p < cloud.rows(); ++p) {
        json row = json::array();
        for (long c = 0; c < cloud.cols(); ++c) row.push_back(cloud(p, c));
        ck.push_back(std::move(row));
      }
      clouds.push_back(std::move(ck));
    }
    j["clouds"] = std::move(clouds);
    doc["interventions"].push_back(std::move(j));
  }
  return doc;
}

inline InterventionSet interventions_from_json(const json& doc, const std::string& where) {
  InterventionSet set;
  try {
    std::vector<std::string> variables = doc.at("variables").get<std::vector<std::string>>();
    for (const auto& j : doc.at("interventions")) {
      PopulationDataset ds;
      ds.variables = variables;
      ds.intervention_id = j.value("id", std::string("0"));
      const std::string kind = j.value("kind", std::string("activation"));
      if (kind == "activation") {
        ds.kind = InterventionKind::Activation;
      } else if (kind == "inhibition") {
        ds.kind = InterventionKind::Inhibition;
        ds.inhibition_target = j.at("target").get<int>();
      } else {
        throw data_error(where + ": unknown intervention kind '" + kind + "'");
      }
      ds.times = j.at("times").get<std::vector<double>>();
      for (const auto& ck : j.at("clouds")) {
        Eigen::MatrixXd cloud(static_cast<long>(ck.size()), static_cast<long>(variables.size()));
        long p = 0;
        for (const auto& row : ck) {
          if (row.size() != variables.size())
            throw data_error(where + ": cloud row width mismatch in intervention '" +
                             ds.intervention_id + "'");
          long c = 0;
          for (const auto& v : row) cloud(p, c++) = v.get<double>();
          ++p;
        }
        ds.clouds.push_back(std::move(cloud));
      }
      ds.validate();
      set.datasets.push_back(std::move(ds));
    }
  } catch (const json::exception& e) {
    throw data_error(where + ": malformed dataset JSON: " + e.what());
  }
  set.validate();
  return set;
}

inline void save_interventions_json(const InterventionSet& set, const std::string& path) {
  write_text_file(path, interventions_to_json(set).dump(1) + "\n");
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Loads a dataset file by extension (.json or .csv).
inline InterventionSet load_interventions(const std::string& path) {
  if (ends_with(path, ".json"))
    return interventions_from_json(json::parse(read_text_file(path), nullptr, true, true), path);
  if (ends_with(path, ".csv")) return load_interventions_csv(path);
  throw data_error("unsupported dataset format (expected .json or .csv): " + path);
}

inline void save_interventions(const InterventionSet& set, const std::string& path) {
  if (ends_with(path, ".json")) return save_interventions_json(set, path);
  if (ends_with(path, ".csv")) return save_interventions_csv(set, path);
  throw data_error("unsupported dataset format (expected .json or .csv): " + path);
}

/// Loads a file expected to contain exactly one intervention.
inline PopulationDataset load_dataset(const std::string& path) {
  InterventionSet set = load_interventions(path);
  if (set.datasets.size() != 1)
    throw data_error(path + ": expected exactly one intervention, found " +
                     std::to_string(set.datasets.size()));
  return set.datasets.front();
}

}  // namespace pdl
