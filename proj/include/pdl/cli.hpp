#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pdl/common.hpp"
#include "pdl/config.hpp"
#include "pdl/dataset.hpp"
#include "pdl/metrics.hpp"
#include "pdl/resim.hpp"
#include "pdl/simulate.hpp"
#include "pdl/sparse.hpp"
#include "pdl/threading.hpp"

namespace pdl {

/// Provenance record written next to every command's outputs. Primary outputs
/// are byte-identical across reruns with the same inputs; the manifest itself
/// carries wall-clock time and is exempt from that guarantee.
struct RunManifest {
  std::string subcommand;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  ///< (path, content hash)
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;

  void add_input(const std::string& path) { inputs.push_back({path, content_hash(read_text_file(path))}); }

  json to_json() const {
    json j;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    json in = json::array();
    for (const auto& [path, hash] : inputs) in.push_back({{"path", path}, {"hash", hash}});
    j["inputs"] = std::move(in);
    j["outputs"] = outputs;
    j["wall_seconds"] = wall_seconds;
    return j;
  }
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline std::string out_path(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / name).string();
}

inline void finish_manifest(RunManifest& m, const Stopwatch& sw, const std::string& dir) {
  m.wall_seconds = sw.seconds();
  write_text_file(out_path(dir, "manifest.json"), m.to_json().dump(1) + "\n");
}

inline InterventionSet load_many(const std::vector<std::string>& paths, RunManifest& manifest) {
  if (paths.empty()) throw data_error("no input data files given");
  InterventionSet set;
  for (const auto& p : paths) {
    manifest.add_input(p);
    InterventionSet part = load_interventions(p);
    if (!set.datasets.empty() && part.n_vars() > 0 &&
        part.datasets.front().variables != set.datasets.front().variables)
      throw data_error(p + ": variables differ from previously loaded data");
    for (auto& ds : part.datasets) set.datasets.push_back(std::move(ds));
  }
  set.validate();
  return set;
}

}  // namespace detail

/// Generates a built-in benchmark: writes the population data (JSON and CSV),
/// the generating ground truth, and the manifest.
inline int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
  detail::Stopwatch sw;
  RunManifest manifest;
  manifest.subcommand = "simulate";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;

  BenchmarkRun run = simulate_benchmark(cfg);
  const std::string data_json = detail::out_path(out_dir, "dataset.json");
  const std::string data_csv = detail::out_path(out_dir, "dataset.csv");
  const std::string truth_path = detail::out_path(out_dir, "truth.json");
  save_interventions_json(run.data, data_json);
  save_interventions_csv(run.data, data_csv);
  write_text_file(truth_path, run.truth.to_json().dump(1) + "\n");
  manifest.outputs = {data_json, data_csv, truth_path};
  detail::finish_manifest(manifest, sw, out_dir);

  long total = 0;
  for (const auto& ds : run.data.datasets)
    for (const auto& c : ds.clouds) total += c.rows();
  std::cout << "[pdl] simulate: " << run.data.datasets.size() << " intervention(s), "
            << run.data.datasets.front().n_clouds() << " clouds, " << total
            << " samples -> " << out_dir << "\n";
  return 0;
}

/// Infers drift and diffusion from population data. With a ground-truth file
/// the report carries support and coefficient metrics; without one it falls
/// back to trajectory agreement between the fitted model and the collocated
/// data means.
inline int cmd_infer(const ExperimentConfig& cfg, const std::vector<std::string>& data_paths,
                     const std::string& out_dir, const std::optional<std::string>& truth_path) {
  detail::Stopwatch sw;
  RunManifest manifest;
  manifest.subcommand = "infer";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;

  InterventionSet set = detail::load_many(data_paths, manifest);
  SparseModel model = infer_all(set, cfg);

  const std::string model_path = detail::out_path(out_dir, "model.json");
  write_text_file(model_path, model.to_json().dump(1) + "\n");
  manifest.outputs = {model_path};

  json report;
  if (truth_path) {
    manifest.add_input(*truth_path);
    SdeModel truth =
        SdeModel::from_json(json::parse(read_text_file(*truth_path), nullptr, true, true));
    EvaluationReport rep = evaluate_against_truth(model, truth, cfg.seed);
    report = rep.to_json();
  } else {
    // Trajectory agreement: deterministic drift trajectory from the first
    // cloud's collocated mean vs the collocated mean curve itself.
    report["variables"] = model.variables;
    json per_ds = json::array();
    SdeModel fitted = model.to_sde();
    std::vector<bool> forced_mask(model.forced.begin(), model.forced.end());
    for (const auto& ds : set.datasets) {
      json entry;
      entry["intervention"] = ds.intervention_id;
      try {
        CollocatedTrajectory colloc = collocate(ds);
        Eigen::VectorXd x0(ds.n_vars());
        for (int n = 0; n < ds.n_vars(); ++n) x0[n] = colloc.eval(n, ds.times.front());
        Eigen::MatrixXd gen =
            rk4_with_forced(fitted, x0, ds.times, forced_mask, colloc, cfg.simulate.substeps);
        Eigen::VectorXd tl2 = trajectory_l2(gen, colloc.eval_matrix(ds.times), ds.times);
        entry["trajectory_l2"] = std::vector<double>(tl2.data(), tl2.data() + tl2.size());
      } catch (const std::exception& e) {
        entry["skipped"] = e.what();
      }
      per_ds.push_back(std::move(entry));
    }
    report["trajectory_comparison"] = std::move(per_ds);
    report["seed"] = cfg.seed;
  }
  const std::string report_path = detail::out_path(out_dir, "report.json");
  write_text_file(report_path, report.dump(1) + "\n");
  manifest.outputs.push_back(report_path);

  if (!cfg.omp.theta_grid.empty()) {
    std::string csv = "variable,theta,bic,support_size,train_rel_residual,test_rss\n";
    for (int n = 0; n < model.n_vars(); ++n)
      for (const auto& pt : model.tuning[n].curve) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%.17g,%.17g\n",
                      model.variables[n].c_str(), pt.theta, pt.bic, pt.support_size,
                      pt.train_rel_residual, pt.test_rss);
        csv += buf;
      }
    const std::string curve_path = detail::out_path(out_dir, "bic_curves.csv");
    write_text_file(curve_path, csv);
    manifest.outputs.push_back(curve_path);
  }
  detail::finish_manifest(manifest, sw, out_dir);

  std::cout << "[pdl] infer:";
  for (int n = 0; n < model.n_vars(); ++n) {
    std::cout << " " << model.variables[n] << "[";
    if (model.forced[n])
      std::cout << "forced";
    else if (!model.failures[n].empty())
      std::cout << "failed";
    else
      std::cout << model.supports[n].size() << " terms, res " << model.residuals[n];
    std::cout << "]";
  }
  std::cout << " -> " << out_dir << "\n";
  for (int n = 0; n < model.n_vars(); ++n)
    if (!model.failures[n].empty())
      std::cerr << "[pdl] warning: inference failed for " << model.variables[n] << ": "
                << model.failures[n] << "\n";
  return 0;
}

/// Thins a dataset to a fraction of its clouds, fits collocation curves, and
/// redraws synthetic clouds on a finer uniform grid.
inline int cmd_resim(const ExperimentConfig& cfg, const std::string& data_path, double keep,
                     double dt_new, std::optional<int> nos, double lambda, int basis_size,
                     const std::string& out_dir) {
  detail::Stopwatch sw;
  RunManifest manifest;
  manifest.subcommand = "resim";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;
  manifest.add_input(data_path);

  PopulationDataset ds = load_dataset(data_path);
  PopulationDataset thinned = keep_fraction(ds, keep);
  CollocatedTrajectory colloc = collocate(thinned, lambda, basis_size);
  const int samples = nos.value_or(static_cast<int>(ds.clouds.front().rows()));
  PopulationDataset fresh = resimulate(colloc, dt_new, samples, cfg.seed, ds.intervention_id);

  InterventionSet out_set;
  out_set.datasets.push_back(fresh);
  const std::string resim_json = detail::out_path(out_dir, "resim.json");
  const std::string resim_csv = detail::out_path(out_dir, "resim.csv");
  save_interventions_json(out_set, resim_json);
  save_interventions_csv(out_set, resim_csv);

  std::string curve_csv = "time";
  for (const auto& v : colloc.variables) curve_csv += ",mean_" + v;
  curve_csv += "\n";
  for (double t : fresh.times) {
    curve_csv += detail::format_double(t);
    for (int n = 0; n < colloc.n_vars(); ++n)
      curve_csv += "," + detail::format_double(colloc.eval(n, t));
    curve_csv += "\n";
  }
  const std::string curve_path = detail::out_path(out_dir, "collocation.csv");
  write_text_file(curve_path, curve_csv);

  manifest.outputs = {resim_json, resim_csv, curve_path};
  detail::finish_manifest(manifest, sw, out_dir);
  std::cout << "[pdl] resim: kept " << thinned.n_clouds() << "/" << ds.n_clouds()
            << " clouds, resampled " << fresh.n_clouds() << " clouds at dt = " << dt_new
            << " -> " << out_dir << "\n";
  return 0;
}

/// Runs BIC autotuning and writes the per-variable theta curves plus the
/// winning model.
inline int cmd_tune(const ExperimentConfig& cfg, const std::vector<std::string>& data_paths,
                    const std::string& out_dir) {
  if (cfg.omp.theta_grid.empty())
    throw data_error("tune requires a non-empty omp.theta_grid in the config");
  detail::Stopwatch sw;
  RunManifest manifest;
  manifest.subcommand = "tune";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;

  InterventionSet set = detail::load_many(data_paths, manifest);
  SparseModel model = infer_all(set, cfg);

  std::string csv = "variable,theta,bic,support_size,train_rel_residual,test_rss,chosen\n";
  for (int n = 0; n < model.n_vars(); ++n)
    for (const auto& pt : model.tuning[n].curve) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%.17g,%.17g,%d\n",
                    model.variables[n].c_str(), pt.theta, pt.bic, pt.support_size,
                    pt.train_rel_residual, pt.test_rss,
                    pt.theta == model.theta_used[n] ? 1 : 0);
      csv += buf;
    }
  const std::string curve_path = detail::out_path(out_dir, "tune.csv");
  const std::string model_path = detail::out_path(out_dir, "model.json");
  write_text_file(curve_path, csv);
  write_text_file(model_path, model.to_json().dump(1) + "\n");
  manifest.outputs = {curve_path, model_path};
  detail::finish_manifest(manifest, sw, out_dir);

  std::cout << "[pdl] tune:";
  for (int n = 0; n < model.n_vars(); ++n)
    std::cout << " " << model.variables[n] << "[theta " << model.theta_used[n] << "]";
  std::cout << " -> " << out_dir << "\n";
  return 0;
}

/// One synthetic benchmark cycle (simulate, infer, evaluate) per grid value
/// and repeat; optionally crossed with a second parameter. Repeats share the
/// data seed across grid values, so single-knob comparisons are paired.
inline int cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
                     const std::vector<double>& grid, const std::string& param2,
                     const std::vector<double>& grid2, int repeats, const std::string& out_dir) {
  static const std::vector<std::string> known = {"nos", "dt", "m1", "m2", "activations"};
  auto is_known = [&](const std::string& p) {
    return std::find(known.begin(), known.end(), p) != known.end();
  };
  if (!is_known(param)) throw data_error("sweep: unknown parameter '" + param + "'");
  if (grid.empty()) throw data_error("sweep: empty grid");
  if (!param2.empty() && !is_known(param2))
    throw data_error("sweep: unknown parameter '" + param2 + "'");
  if (!param2.empty() && grid2.empty()) throw data_error("sweep: second parameter has no grid");
  if (repeats < 1) throw data_error("sweep: repeats must be >= 1");

  detail::Stopwatch sw;
  RunManifest manifest;
  manifest.subcommand = "sweep";
  manifest.config = config_to_json(cfg);
  manifest.seed = cfg.seed;

  auto apply = [](ExperimentConfig& c, const std::string& p, double v) {
    if (p == "nos") c.simulate.nos = static_cast<int>(v);
    else if (p == "dt") c.simulate.dt = v;
    else if (p == "m1") c.basis.m1 = static_cast<int>(v);
    else if (p == "m2") c.basis.m2 = static_cast<int>(v);
    else if (p == "activations") c.simulate.activations = static_cast<int>(v);
  };

  struct Row {
    double v1, v2;
    int repeat;
    std::uint64_t seed;
    double rr = std::nan(""), precision = std::nan(""), recall = std::nan("");
    std::string error;
  };
  const std::vector<double> g2 = param2.empty() ? std::vector<double>{0.0} : grid2;
  std::vector<Row> rows(grid.size() * g2.size() * repeats);

  parallel_for(static_cast<long>(rows.size()), [&](long idx) {
    const size_t per_v1 = g2.size() * repeats;
    const size_t i1 = idx / per_v1;
    const size_t i2 = (idx % per_v1) / repeats;
    const int rep = static_cast<int>(idx % repeats);
    Row& row = rows[idx];
    row.v1 = grid[i1];
    row.v2 = g2[i2];
    row.repeat = rep;
    ExperimentConfig c = cfg;
    apply(c, param, row.v1);
    if (!param2.empty()) apply(c, param2, row.v2);
    c.seed = cfg.seed + 9973 * static_cast<std::uint64_t>(rep + 1);
    row.seed = c.seed;
    try {
      BenchmarkRun run = simulate_benchmark(c);
      SparseModel fit = infer_all(run.data, c);
      EvaluationReport rep_out = evaluate_against_truth(fit, run.truth, c.seed);
      row.rr = rep_out.rel_error;
      row.precision = rep_out.precision;
      row.recall = rep_out.recall;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  std::string csv = param + (param2.empty() ? "" : "," + param2) +
                    ",repeat,seed,relative_error,precision,recall,error\n";
  for (const auto& r : rows) {
    char buf[320];
    if (param2.empty())
      std::snprintf(buf, sizeof(buf), "%.17g,%d,%llu,%.17g,%.17g,%.17g,%s\n", r.v1, r.repeat,
                    static_cast<unsigned long long>(r.seed), r.rr, r.precision, r.recall,
                    r.error.c_str());
    else
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%llu,%.17g,%.17g,%.17g,%s\n", r.v1, r.v2,
                    r.repeat, static_cast<unsigned long long>(r.seed), r.rr, r.precision,
                    r.recall, r.error.c_str());
    csv += buf;
  }

  // Aggregate mean/std of the relative error per grid point.
  std::string agg = param + (param2.empty() ? "" : "," + param2) +
                    ",runs,rr_mean,rr_std,precision_mean,recall_mean\n";
  for (size_t i1 = 0; i1 < grid.size(); ++i1)
    for (size_t i2 = 0; i2 < g2.size(); ++i2) {
      double sum = 0, sum2 = 0, psum = 0, rsum = 0;
      int count = 0;
      for (const auto& r : rows)
        if (r.v1 == grid[i1] && r.v2 == g2[i2] && r.error.empty() && std::isfinite(r.rr)) {
          sum += r.rr;
          sum2 += r.rr * r.rr;
          psum += r.precision;
          rsum += r.recall;
          ++count;
        }
      const double mean = count ? sum / count : std::nan("");
      const double sd = count > 1 ? std::sqrt(std::max(0.0, (sum2 - sum * sum / count) / (count - 1)))
                                  : std::nan("");
      char buf[320];
      if (param2.empty())
        std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", grid[i1], count,
                      mean, sd, count ? psum / count : std::nan(""),
                      count ? rsum / count : std::nan(""));
      else
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", grid[i1],
                      g2[i2], count, mean, sd, count ? psum / count : std::nan(""),
                      count ? rsum / count : std::nan(""));
      agg += buf;
    }

  const std::string sweep_path = detail::out_path(out_dir, "sweep.csv");
  const std::string agg_path = detail::out_path(out_dir, "sweep_summary.csv");
  write_text_file(sweep_path, csv);
  write_text_file(agg_path, agg);
  manifest.outputs = {sweep_path, agg_path};
  detail::finish_manifest(manifest, sw, out_dir);
  std::cout << "[pdl] sweep: " << rows.size() << " runs over " << grid.size()
            << (param2.empty() ? std::string("") : " x " + std::to_string(g2.size()))
            << " grid value(s) -> " << out_dir << "\n";
  return 0;
}

/// Maps exceptions to the documented exit codes: 0 ok, 3 data error,
/// 4 numerical failure (usage errors are the front end's code 2).
template <typename Fn>
int run_guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const data_error& e) {
    std::cerr << "[pdl] data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "[pdl] numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "[pdl] error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace pdl
