#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdl/common.hpp"
#include "pdl/dictionary.hpp"

namespace pdl {

struct DictionaryConfig {
  int max_degree = 3;
  bool include_constant = true;
  bool include_cross_terms = true;
};

struct BasisConfig {
  int m1 = 16;           ///< spatial B-splines per variable
  int m2 = 31;           ///< temporal Fourier modes
  double margin = 0.15;  ///< spatial domain inflation, fraction of the data span per side
  int spline_order = 3;  ///< B-spline order k (quadratic default), one of 2, 3, 4
};

struct OmpSettings {
  int k_max = 0;  ///< sparsity budget; 0 means automatic (Q + 1)
  double theta = 0.01;
  std::vector<double> theta_grid;  ///< non-empty enables BIC autotuning
  std::vector<int> prior_support;  ///< drift atom indices forced into the start set
  double hard_threshold = 0.01;    ///< drop drift coefficients with |a| <= tau
  bool nonneg_diffusion = true;
  bool seed_diffusion = true;  ///< start OMP with the diffusion column active
};

struct SplitConfig {
  double train = 0.8;
  double test = 0.1;
  double validation = 0.1;

  std::array<double, 3> fractions() const { return {train, test, validation}; }
};

/// Parameters of the synthetic benchmark generators; only used by the
/// simulate/sweep commands. Values not stated by the benchmark definitions
/// (rates, initial clouds, horizon) are artifact defaults and overridable.
struct SimulateConfig {
  std::string builtin = "quadwell";  ///< "quadwell" or "cascade"
  int nos = 400;                     ///< samples per cloud
  double dt = 0.1;                   ///< measurement spacing
  double t_end = 8.0;                ///< horizon; times are 0, dt, ..., t_end
  int activations = 4;               ///< quadwell: number of initial conditions drawn
  int substeps = 50;                 ///< integrator steps per measurement interval
  std::vector<double> sigma;         ///< per-variable noise; empty = builtin default
  std::vector<double> cascade_rates = {0.3, 0.3, 0.3, 0.3};
  std::vector<double> cascade_mu0 = {1.0, 0.0, 0.0, 0.0};
  double cascade_sigma0 = 0.1;
};

struct ExperimentConfig {
  DictionaryConfig dictionary;
  BasisConfig basis;
  OmpSettings omp;
  SplitConfig split;
  SimulateConfig simulate;
  std::uint64_t seed = 1234;
  std::vector<std::string> forced_variables;  ///< inferred rows skipped, data still used

  /// Invariants that do not need the dictionary size.
  void validate() const {
    if (basis.m1 < 4) throw data_error("config: m1 must be >= 4");
    if (basis.m2 < 1) throw data_error("config: m2 must be >= 1");
    if (basis.spline_order < 2 || basis.spline_order > 4)
      throw data_error("config: spline_order must be 2, 3 or 4");
    if (!(basis.margin >= 0.0)) throw data_error("config: margin must be >= 0");
    auto f = split.fractions();
    double sum = 0.0;
    for (double v : f) {
      if (!(v > 0.0)) throw data_error("config: split fractions must all be positive");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw data_error("config: split fractions must sum to 1");
    auto check_theta = [](double t) {
      if (!(t > 0.0 && t < 1.0)) throw data_error("config: theta must lie in (0, 1)");
    };
    check_theta(omp.theta);
    for (double t : omp.theta_grid) check_theta(t);
    if (omp.k_max < 0) throw data_error("config: k_max must be >= 0");
    if (!(omp.hard_threshold >= 0.0)) throw data_error("config: hard_threshold must be >= 0");
    if (simulate.nos < 1) throw data_error("config: nos must be >= 1");
    if (!(simulate.dt > 0.0)) throw data_error("config: dt must be positive");
    if (!(simulate.t_end > 0.0)) throw data_error("config: t_end must be positive");
    if (simulate.substeps < 1) throw data_error("config: substeps must be >= 1");
    if (simulate.activations < 1) throw data_error("config: activations must be >= 1");
  }

  /// Sparsity budget given the dictionary size; enforces k_max <= Q + 1.
  int effective_k_max(int q_atoms) const {
    if (omp.k_max == 0) return q_atoms + 1;
    if (omp.k_max > q_atoms + 1)
      throw data_error("config: k_max " + std::to_string(omp.k_max) + " exceeds Q+1 = " +
                       std::to_string(q_atoms + 1));
    return omp.k_max;
  }
};

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["dictionary"] = {{"max_degree", c.dictionary.max_degree},
                     {"include_constant", c.dictionary.include_constant},
                     {"include_cross_terms", c.dictionary.include_cross_terms}};
  j["basis"] = {{"m1", c.basis.m1},
                {"m2", c.basis.m2},
                {"margin", c.basis.margin},
                {"spline_order", c.basis.spline_order}};
  j["omp"] = {{"k_max", c.omp.k_max},
              {"theta", c.omp.theta},
              {"theta_grid", c.omp.theta_grid},
              {"prior_support", c.omp.prior_support},
              {"hard_threshold", c.omp.hard_threshold},
              {"nonneg_diffusion", c.omp.nonneg_diffusion},
              {"seed_diffusion", c.omp.seed_diffusion}};
  j["split"] = {{"train", c.split.train},
                {"test", c.split.test},
                {"validation", c.split.validation}};
  j["simulate"] = {{"builtin", c.simulate.builtin},
                   {"nos", c.simulate.nos},
                   {"dt", c.simulate.dt},
                   {"t_end", c.simulate.t_end},
                   {"activations", c.simulate.activations},
                   {"substeps", c.simulate.substeps},
                   {"sigma", c.simulate.sigma},
                   {"cascade_rates", c.simulate.cascade_rates},
                   {"cascade_mu0", c.simulate.cascade_mu0},
                   {"cascade_sigma0", c.simulate.cascade_sigma0}};
  j["seed"] = c.seed;
  j["forced_variables"] = c.forced_variables;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dictionary")) {
      const auto& d = j["dictionary"];
      c.dictionary.max_degree = d.value("max_degree", c.dictionary.max_degree);
      c.dictionary.include_constant = d.value("include_constant", c.dictionary.include_constant);
      c.dictionary.include_cross_terms =
          d.value("include_cross_terms", c.dictionary.include_cross_terms);
    }
    if (j.contains("basis")) {
      const auto& b = j["basis"];
      c.basis.m1 = b.value("m1", c.basis.m1);
      c.basis.m2 = b.value("m2", c.basis.m2);
      c.basis.margin = b.value("margin", c.basis.margin);
      c.basis.spline_order = b.value("spline_order", c.basis.spline_order);
    }
    if (j.contains("omp")) {
      const auto& o = j["omp"];
      c.omp.k_max = o.value("k_max", c.omp.k_max);
      c.omp.theta = o.value("theta", c.omp.theta);
      c.omp.theta_grid = o.value("theta_grid", c.omp.theta_grid);
      c.omp.prior_support = o.value("prior_support", c.omp.prior_support);
      c.omp.hard_threshold = o.value("hard_threshold", c.omp.hard_threshold);
      c.omp.nonneg_diffusion = o.value("nonneg_diffusion", c.omp.nonneg_diffusion);
      c.omp.seed_diffusion = o.value("seed_diffusion", c.omp.seed_diffusion);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.train = s.value("train", c.split.train);
      c.split.test = s.value("test", c.split.test);
      c.split.validation = s.value("validation", c.split.validation);
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      c.simulate.builtin = s.value("builtin", c.simulate.builtin);
      c.simulate.nos = s.value("nos", c.simulate.nos);
      c.simulate.dt = s.value("dt", c.simulate.dt);
      c.simulate.t_end = s.value("t_end", c.simulate.t_end);
      c.simulate.activations = s.value("activations", c.simulate.activations);
      c.simulate.substeps = s.value("substeps", c.simulate.substeps);
      c.simulate.sigma = s.value("sigma", c.simulate.sigma);
      c.simulate.cascade_rates = s.value("cascade_rates", c.simulate.cascade_rates);
      c.simulate.cascade_mu0 = s.value("cascade_mu0", c.simulate.cascade_mu0);
      c.simulate.cascade_sigma0 = s.value("cascade_sigma0", c.simulate.cascade_sigma0);
    }
    c.seed = j.value("seed", c.seed);
    c.forced_variables = j.value("forced_variables", c.forced_variables);
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  return config_from_json(json::parse(read_text_file(path), nullptr, true, true));
}

}  // namespace pdl
