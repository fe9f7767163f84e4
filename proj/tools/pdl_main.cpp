// Command-line front end for the population-dynamics learning toolkit.
//
// Subcommands: simulate | infer | resim | tune | sweep. Every subcommand
// accepts --config <file.json> plus individual flag overrides; flags win over
// the config file, which wins over built-in defaults. Exit codes: 0 success,
// 2 usage error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <optional>
#include <string>
#include <vector>

#include "pdl/pdl.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> m1, m2, spline_order, max_degree, k_max, nos, substeps, activations;
  std::optional<double> margin, theta, hard_threshold, dt, t_end;
  std::optional<std::string> builtin;
  std::vector<double> theta_grid, sigma;
  std::vector<std::string> forced;
};

void add_common_flags(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "master random seed");
  app->add_option("--m1", f.m1, "spatial test functions per variable");
  app->add_option("--m2", f.m2, "temporal test functions");
  app->add_option("--spline-order", f.spline_order, "spatial spline order (2..4)");
  app->add_option("--margin", f.margin, "relative domain margin beyond the data range");
  app->add_option("--max-degree", f.max_degree, "polynomial dictionary degree");
  app->add_option("--theta", f.theta, "residual stopping tolerance");
  app->add_option("--theta-grid", f.theta_grid, "tolerance grid for BIC autotuning")
      ->expected(-1);
  app->add_option("--k-max", f.k_max, "greedy iteration cap (0 = automatic)");
  app->add_option("--hard-threshold", f.hard_threshold, "post-fit drift coefficient cutoff");
  app->add_option("--nos", f.nos, "samples per cloud");
  app->add_option("--dt", f.dt, "measurement time step");
  app->add_option("--t-end", f.t_end, "simulation horizon");
  app->add_option("--substeps", f.substeps, "integrator substeps per measurement interval");
  app->add_option("--builtin", f.builtin, "benchmark name (quadwell | cascade)");
  app->add_option("--activations", f.activations, "number of activation interventions");
  app->add_option("--sigma", f.sigma, "per-variable noise levels")->expected(-1);
  app->add_option("--forced", f.forced, "variables handled as externally forced")->expected(-1);
}

pdl::ExperimentConfig resolve_config(const CommonFlags& f) {
  pdl::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = pdl::load_config(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.m1) cfg.basis.m1 = *f.m1;
  if (f.m2) cfg.basis.m2 = *f.m2;
  if (f.spline_order) cfg.basis.spline_order = *f.spline_order;
  if (f.margin) cfg.basis.margin = *f.margin;
  if (f.max_degree) cfg.dictionary.max_degree = *f.max_degree;
  if (f.theta) cfg.omp.theta = *f.theta;
  if (!f.theta_grid.empty()) cfg.omp.theta_grid = f.theta_grid;
  if (f.k_max) cfg.omp.k_max = *f.k_max;
  if (f.hard_threshold) cfg.omp.hard_threshold = *f.hard_threshold;
  if (f.nos) cfg.simulate.nos = *f.nos;
  if (f.dt) cfg.simulate.dt = *f.dt;
  if (f.t_end) cfg.simulate.t_end = *f.t_end;
  if (f.substeps) cfg.simulate.substeps = *f.substeps;
  if (f.builtin) cfg.simulate.builtin = *f.builtin;
  if (f.activations) cfg.simulate.activations = *f.activations;
  if (!f.sigma.empty()) cfg.simulate.sigma = f.sigma;
  if (!f.forced.empty()) cfg.forced_variables = f.forced;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdl: learn sparse stochastic dynamics from population snapshots"};
  app.require_subcommand(1);

  CommonFlags sim_f, inf_f, res_f, tune_f, sweep_f;
  std::string sim_out = "runs/simulate", inf_out = "runs/infer", res_out = "runs/resim";
  std::string tune_out = "runs/tune", sweep_out = "runs/sweep";
  std::vector<std::string> inf_data, tune_data;
  std::optional<std::string> inf_truth;
  std::string res_data;
  double res_keep = 1.0, res_dt = 0.1, res_lambda = 0.0;
  int res_basis = 0;
  std::optional<int> res_nos;
  std::string sweep_param, sweep_param2;
  std::vector<double> sweep_grid, sweep_grid2;
  int sweep_repeats = 1;

  CLI::App* sim = app.add_subcommand("simulate", "generate a built-in synthetic benchmark");
  add_common_flags(sim, sim_f);
  sim->add_option("--out", sim_out, "output directory");

  CLI::App* inf = app.add_subcommand("infer", "fit drift and diffusion from population data");
  add_common_flags(inf, inf_f);
  inf->add_option("--data", inf_data, "input dataset file(s) (.json or .csv)")
      ->required()
      ->expected(-1);
  inf->add_option("--truth", inf_truth, "ground-truth model for evaluation");
  inf->add_option("--out", inf_out, "output directory");

  CLI::App* res = app.add_subcommand("resim", "collocate a dataset and redraw finer clouds");
  add_common_flags(res, res_f);
  res->add_option("--data", res_data, "input dataset file (single intervention)")->required();
  res->add_option("--keep", res_keep, "fraction of clouds kept before collocation");
  res->add_option("--dt-new", res_dt, "time step of the regenerated grid")->required();
  res->add_option("--resim-nos", res_nos, "samples per regenerated cloud");
  res->add_option("--lambda", res_lambda, "smoothing penalty (0 = automatic)");
  res->add_option("--basis-size", res_basis, "collocation basis size (0 = automatic)");
  res->add_option("--out", res_out, "output directory");

  CLI::App* tune = app.add_subcommand("tune", "scan the tolerance grid and report BIC curves");
  add_common_flags(tune, tune_f);
  tune->add_option("--data", tune_data, "input dataset file(s)")->required()->expected(-1);
  tune->add_option("--out", tune_out, "output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "benchmark accuracy across a parameter grid");
  add_common_flags(sweep, sweep_f);
  sweep->add_option("--param", sweep_param, "swept parameter (nos|dt|m1|m2|activations)")
      ->required();
  sweep->add_option("--grid", sweep_grid, "values of the swept parameter")
      ->required()
      ->expected(-1);
  sweep->add_option("--param2", sweep_param2, "optional second parameter");
  sweep->add_option("--grid2", sweep_grid2, "values of the second parameter")->expected(-1);
  sweep->add_option("--repeats", sweep_repeats, "independent repeats per grid point");
  sweep->add_option("--out", sweep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return pdl::run_guarded([&]() -> int {
    if (sim->parsed()) return pdl::cmd_simulate(resolve_config(sim_f), sim_out);
    if (inf->parsed()) return pdl::cmd_infer(resolve_config(inf_f), inf_data, inf_out, inf_truth);
    if (res->parsed())
      return pdl::cmd_resim(resolve_config(res_f), res_data, res_keep, res_dt, res_nos,
                            res_lambda, res_basis, res_out);
    if (tune->parsed()) return pdl::cmd_tune(resolve_config(tune_f), tune_data, tune_out);
    if (sweep->parsed())
      return pdl::cmd_sweep(resolve_config(sweep_f), sweep_param, sweep_grid, sweep_param2,
                            sweep_grid2, sweep_repeats, sweep_out);
    return 2;
  });
}
