// lgcp_cli.cpp -- command-line surface: simulate, fit, resimulate, summary,
// envelope, and scripted studies.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lgcp/config.hpp"
#include "lgcp/study.hpp"

namespace fs = std::filesystem;
using namespace lgcp;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
  std::uint64_t seed = 1;
  std::string grid = "";
  std::string out_dir = "out";
  int threads = 0;
  bool paranoid = false;

  int resolved_threads() const { return threads > 0 ? threads : default_threads(); }

  std::pair<int, int> grid_dims(int def_rows, int def_cols) const {
    if (grid.empty()) return {def_rows, def_cols};
    auto x = grid.find('x');
    if (x == std::string::npos) throw ParseError("--grid expects ROWSxCOLS");
    return {std::stoi(grid.substr(0, x)), std::stoi(grid.substr(x + 1))};
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "random seed");
  cmd->add_option("--grid", args.grid, "grid dimensions ROWSxCOLS");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
  cmd->add_flag("--paranoid", args.paranoid, "full recomputation in the resampler");
}

// every run writes its manifest before any results
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& config_echo, std::uint64_t seed) {
  fs::create_directories(out_dir);
  nlohmann::json j{{"tool", "lgcp"},
                   {"version", kVersion},
                   {"command", command},
                   {"seed", seed},
                   {"config", config_echo}};
  std::ofstream out(out_dir + "/manifest.json");
  out << j.dump(1) << "\n";
}

Window window_from_flags(double x0, double x1, double y0, double y1) {
  return Window(x0, x1, y0, y1);
}

int cmd_simulate(const CommonArgs& common, const std::string& model, double lambda,
                 double lambda_slope, double beta, double gamma, double radius, double kappa,
                 double kappa_slope, double sigma, double mu, int sweeps, const Window& win) {
  nlohmann::json echo{{"model", model}};
  PointPattern pat(win);
  if (model == "poisson") {
    echo["lambda"] = lambda;
    echo["lambda_slope"] = lambda_slope;
    write_manifest(common.out_dir, "simulate", echo, common.seed);
    pat = sim_poisson(TrendFn::linear(lambda_slope, lambda), win, common.seed);
  } else if (model == "strauss") {
    echo["beta"] = beta;
    echo["gamma"] = gamma;
    echo["r"] = radius;
    echo["sweeps"] = sweeps;
    write_manifest(common.out_dir, "simulate", echo, common.seed);
    pat = sim_strauss(StraussParams(beta, gamma, radius), win, common.seed, sweeps);
  } else if (model == "thomas") {
    echo["kappa"] = kappa;
    echo["kappa_slope"] = kappa_slope;
    echo["sigma"] = sigma;
    echo["mu"] = mu;
    write_manifest(common.out_dir, "simulate", echo, common.seed);
    pat = sim_thomas(ThomasParams(TrendFn::linear(kappa_slope, kappa), sigma, mu), win,
                     common.seed);
  } else {
    throw ParseError("simulate: unknown --model '" + model + "'");
  }
  write_pattern(pat, common.out_dir + "/pattern.csv");
  std::cout << "wrote " << pat.size() << " points to " << common.out_dir << "/pattern.csv\n";
  return 0;
}

int cmd_fit(const CommonArgs& common, const std::string& pattern_path,
            const std::string& config_path, const std::vector<std::string>& covariates,
            const std::string& mask_path, const std::string& edge_rule_name) {
  auto cfg = read_model_config(config_path);
  auto pat = read_pattern(pattern_path);
  auto [rows, cols] = common.grid_dims(cfg.grid_rows > 0 ? cfg.grid_rows : 64,
                                       cfg.grid_cols > 0 ? cfg.grid_cols : 64);
  Window win = pat.window;
  if (!mask_path.empty()) {
    win.cell_mask = read_mask_csv(mask_path, rows, cols);
    win.mask_rows = rows;
    win.mask_cols = cols;
  }
  GridSpec grid(rows, cols, win);
  pat.window = win;

  nlohmann::json echo{{"pattern", pattern_path}, {"config", config_path},
                      {"rows", rows},           {"cols", cols},
                      {"mask", mask_path},      {"edge_rule", edge_rule_name}};
  write_manifest(common.out_dir, "fit", echo, common.seed);

  EdgeRule rule = EdgeRule::none;
  if (edge_rule_name == "censor" || (edge_rule_name == "auto" && win.has_mask()))
    rule = EdgeRule::censor;

  ModelData data;
  data.grid = grid;
  auto counts = grid_counts(pat, grid);
  data.counts = &counts;
  data.points = &pat;
  auto zc = nearest_point_distance(pat, grid, rule);
  bool uses_zc = false;
  for (const auto& c : cfg.spec.components)
    if (c.kind == ComponentKind::rw1_function && c.covariate == "zc") uses_zc = true;
  BinnedCovariate binned;
  if (uses_zc) {
    binned = bin_covariate(zc, cfg.n_bins);
    data.binned["zc"] = binned;
  }
  for (const auto& spec : covariates) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) throw ParseError("--covariate expects NAME=PATH");
    data.cell_fields[spec.substr(0, eq)] = read_covariate_csv(spec.substr(eq + 1), rows, cols);
  }

  auto model = assemble(cfg.spec, data);
  EngineOptions eopts;
  eopts.n_threads = common.resolved_threads();
  LgmEngine engine(model, eopts);
  auto fit = engine.fit();

  SavedFit sf;
  sf.grid = grid;
  sf.fit = fit;
  sf.edge_rule = rule;
  sf.n_points = static_cast<int>(pat.size());
  bool has_count_block = false;
  for (const auto& b : cfg.spec.blocks)
    if (b.family == Family::poisson_count) has_count_block = true;
  if (has_count_block) {
    sf.baseline_eta = frozen_baseline(model, fit, data);
    if (uses_zc) {
      sf.spline_knots = binned.bin_midpoints;
      sf.spline_values = fit.component("f_zc").mean;
    }
  } else {
    sf.baseline_eta.assign(static_cast<std::size_t>(grid.n_cells()), 0.0);
  }
  write_fit_json(sf, common.out_dir + "/fit.json");

  if (uses_zc) {
    const auto& f = fit.component("f_zc");
    std::ofstream out(common.out_dir + "/f_zc.csv");
    out << "z,mean,lo95,hi95\n";
    for (int k = 0; k < f.length; ++k) {
      auto ku = static_cast<std::size_t>(k);
      out << format_g17(binned.bin_midpoints[ku]) << ',' << format_g17(f.mean[ku]) << ','
          << format_g17(f.mean[ku] - 1.96 * f.sd[ku]) << ','
          << format_g17(f.mean[ku] + 1.96 * f.sd[ku]) << '\n';
    }
  }
  for (const auto& c : fit.components)
    if (c.kind == ComponentKind::rw2_spatial) {
      write_grid_csv(c.mean, rows, cols, common.out_dir + "/" + c.name + "_mean.csv");
      write_grid_csv(c.sd, rows, cols, common.out_dir + "/" + c.name + "_sd.csv");
    }
  {
    std::ofstream out(common.out_dir + "/dic.txt");
    out << "dic " << format_g17(fit.dic) << "\np_d " << format_g17(fit.p_d) << "\n";
  }
  std::cout << "fit complete: dic " << fit.dic << ", p_d " << fit.p_d << "\n";
  return 0;
}

int cmd_resimulate(const CommonArgs& common, const std::string& fit_path, long iters,
                   int n_points_override) {
  auto sf = read_fit_json(fit_path);
  nlohmann::json echo{{"fit", fit_path}, {"iters", iters}, {"paranoid", common.paranoid}};
  write_manifest(common.out_dir, "resimulate", echo, common.seed);
  int n_points = n_points_override > 0 ? n_points_override : sf.n_points;
  require(n_points > 0, "resimulate: the fit records no point count; pass --points");
  ResampleOptions opts;
  opts.paranoid = common.paranoid;
  auto pat = metropolis_resample(sf.fitted_intensity(), n_points, iters, common.seed, opts);
  write_pattern(pat, common.out_dir + "/pattern.csv");
  std::cout << "resimulated " << pat.size() << " points after " << iters << " iterations\n";
  return 0;
}

int cmd_summary(const CommonArgs& common, const std::string& pattern_path,
                const std::string& stat, double r_max, int n_r, const std::string& fit_path) {
  auto pat = read_pattern(pattern_path);
  nlohmann::json echo{{"pattern", pattern_path}, {"stat", stat}, {"r_max", r_max}, {"n_r", n_r}};
  write_manifest(common.out_dir, "summary", echo, common.seed);
  double rm = r_max > 0 ? r_max
                        : 0.25 * std::min(pat.window.width(), pat.window.height());
  SummaryFunction s;
  if (stat == "K") {
    s = k_function(pat, rm, n_r);
  } else if (stat == "L") {
    s = l_function(pat, rm, n_r);
  } else if (stat == "Linhom") {
    require(!fit_path.empty(), "summary: Linhom needs --fit for the intensity");
    auto sf = read_fit_json(fit_path);
    s = l_inhom(pat, sf.intensity(), sf.grid, rm, n_r);
  } else {
    throw ParseError("summary: unknown --stat '" + stat + "'");
  }
  write_summary_csv(s, common.out_dir + "/summary.csv");
  std::cout << "wrote " << common.out_dir << "/summary.csv\n";
  return 0;
}

int cmd_envelope(const CommonArgs& common, const std::string& fit_path, int n_sim, long iters,
                 const std::string& stat, double r_max, int n_r,
                 const std::string& original_path) {
  auto sf = read_fit_json(fit_path);
  nlohmann::json echo{{"fit", fit_path}, {"n_sim", n_sim}, {"iters", iters}, {"stat", stat}};
  write_manifest(common.out_dir, "envelope", echo, common.seed);
  auto fi = sf.fitted_intensity();
  double rm = r_max > 0 ? r_max
                        : 0.25 * std::min(sf.grid.window.width(), sf.grid.window.height());
  auto lam = sf.intensity();
  auto statistic = [&](int k) {
    auto sim = metropolis_resample(fi, sf.n_points, iters,
                                   common.seed + static_cast<std::uint64_t>(k));
    return stat == "Linhom" ? l_inhom(sim, lam, sf.grid, rm, n_r) : l_function(sim, rm, n_r);
  };
  auto band = envelopes(statistic, n_sim, common.resolved_threads());
  write_envelope_csv(band, common.out_dir + "/envelope.csv");
  if (!original_path.empty()) {
    auto orig = read_pattern(original_path);
    auto s = stat == "Linhom" ? l_inhom(orig, lam, sf.grid, rm, n_r) : l_function(orig, rm, n_r);
    write_summary_csv(s, common.out_dir + "/original.csv");
  }
  std::cout << "wrote " << common.out_dir << "/envelope.csv\n";
  return 0;
}

int cmd_study(const CommonArgs& common, const std::string& name, long iters, int n_sim,
              int n_bins, bool plots) {
  nlohmann::json echo{{"study", name}, {"iters", iters}, {"n_sim", n_sim}, {"n_bins", n_bins}};
  write_manifest(common.out_dir, "study", echo, common.seed);
  StudyOptions opts;
  opts.seed = common.seed;
  auto [rows, cols] = common.grid_dims(100, 100);
  opts.grid_rows = rows;
  opts.grid_cols = cols;
  opts.n_bins = n_bins;
  opts.resim_iters = iters;
  opts.n_envelope = n_sim;
  opts.n_threads = common.resolved_threads();
  opts.out_dir = common.out_dir;
  opts.plots = plots;
  StudyResult res;
  try {
    res = run_study(name, opts);
  } catch (const ParameterError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "study stage failed: " << e.what() << "\n";
    return 4;
  }
  for (const auto& v : res.verdicts)
    std::cout << v.name << ": " << (v.pass ? "PASS" : "FAIL")
              << (v.detail.empty() ? "" : " (" + v.detail + ")") << "\n";
  return res.all_pass() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"log-Gaussian Cox process toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonArgs common;

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a pattern");
  std::string sim_model = "poisson";
  double lambda = 100.0, lambda_slope = 0.0;
  double beta = 700.0, gamma = 0.5, radius = 0.05;
  double kappa = 10.0, kappa_slope = 0.0, sigma = 0.05, mu = 50.0;
  int sweeps = 100;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  add_common(sim, common);
  sim->add_option("--model", sim_model, "poisson | strauss | thomas");
  sim->add_option("--lambda", lambda, "Poisson intensity (constant term)");
  sim->add_option("--lambda-slope", lambda_slope, "Poisson intensity slope in x");
  sim->add_option("--beta", beta, "Strauss intensity parameter");
  sim->add_option("--gamma", gamma, "Strauss interaction parameter");
  sim->add_option("--r", radius, "Strauss interaction radius");
  sim->add_option("--kappa", kappa, "Thomas parent intensity (constant term)");
  sim->add_option("--kappa-slope", kappa_slope, "Thomas parent intensity slope in x");
  sim->add_option("--sigma", sigma, "Thomas offspring displacement sd");
  sim->add_option("--mu", mu, "Thomas expected offspring per cluster");
  sim->add_option("--sweeps", sweeps, "Strauss sweeps");
  sim->add_option("--xmin", x0, "window x_min");
  sim->add_option("--xmax", x1, "window x_max");
  sim->add_option("--ymin", y0, "window y_min");
  sim->add_option("--ymax", y1, "window y_max");

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model to a pattern");
  std::string pattern_path, config_path, mask_path, edge_rule = "auto";
  std::vector<std::string> covariates;
  add_common(fit, common);
  fit->add_option("--pattern", pattern_path, "pattern CSV")->required();
  fit->add_option("--config", config_path, "model config JSON")->required();
  fit->add_option("--covariate", covariates, "cell covariate NAME=PATH (repeatable)");
  fit->add_option("--mask", mask_path, "cell mask CSV");
  fit->add_option("--edge-rule", edge_rule, "auto | none | censor");

  // resimulate
  auto* resim = app.add_subcommand("resimulate", "Metropolis resampling from a fit");
  std::string fit_path;
  long iters = 100000;
  int points_override = 0;
  add_common(resim, common);
  resim->add_option("--fit", fit_path, "fit.json from a fit run")->required();
  resim->add_option("--iters", iters, "Metropolis iterations");
  resim->add_option("--points", points_override, "override the point count");

  // summary
  auto* summ = app.add_subcommand("summary", "K/L summary functions");
  std::string summ_pattern, summ_stat = "L", summ_fit;
  double r_max = 0.0;
  int n_r = 512;
  add_common(summ, common);
  summ->add_option("--pattern", summ_pattern, "pattern CSV")->required();
  summ->add_option("--stat", summ_stat, "K | L | Linhom");
  summ->add_option("--rmax", r_max, "max distance (default: min side / 4)");
  summ->add_option("--nr", n_r, "number of r values");
  summ->add_option("--fit", summ_fit, "fit.json (intensity for Linhom)");

  // envelope
  auto* env = app.add_subcommand("envelope", "resimulation envelopes from a fit");
  std::string env_fit, env_stat = "L", env_original;
  int n_sim = 50;
  long env_iters = 100000;
  double env_rmax = 0.0;
  int env_nr = 256;
  add_common(env, common);
  env->add_option("--fit", env_fit, "fit.json")->required();
  env->add_option("--nsim", n_sim, "number of replicates");
  env->add_option("--iters", env_iters, "Metropolis iterations per replicate");
  env->add_option("--stat", env_stat, "L | Linhom");
  env->add_option("--rmax", env_rmax, "max distance");
  env->add_option("--nr", env_nr, "number of r values");
  env->add_option("--original", env_original, "overlay this pattern's statistic");

  // study
  auto* study = app.add_subcommand("study", "scripted end-to-end studies");
  std::string study_name;
  long study_iters = 100000;
  int study_nsim = 50, study_bins = 25;
  bool plots = false;
  add_common(study, common);
  study->add_option("--name", study_name, "strauss | thomas | inhom | null")->required();
  study->add_option("--iters", study_iters, "resampler iterations");
  study->add_option("--nsim", study_nsim, "envelope replicates");
  study->add_option("--bins", study_bins, "covariate bins");
  study->add_flag("--plots", plots, "emit SVG plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(common, sim_model, lambda, lambda_slope, beta, gamma, radius, kappa,
                          kappa_slope, sigma, mu, sweeps, window_from_flags(x0, x1, y0, y1));
    if (fit->parsed())
      return cmd_fit(common, pattern_path, config_path, covariates, mask_path, edge_rule);
    if (resim->parsed()) return cmd_resimulate(common, fit_path, iters, points_override);
    if (summ->parsed()) return cmd_summary(common, summ_pattern, summ_stat, r_max, n_r, summ_fit);
    if (env->parsed())
      return cmd_envelope(common, env_fit, n_sim, env_iters, env_stat, env_rmax, env_nr,
                          env_original);
    if (study->parsed()) return cmd_study(common, study_name, study_iters, study_nsim, study_bins, plots);
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
