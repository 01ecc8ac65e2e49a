// study.hpp -- end-to-end simulation studies: generate a pattern, fit the
// constructed-covariate model, resimulate via the Metropolis resampler, and
// check summary functions against envelopes. Also the synthetic three-block
// marked-pattern model used for joint-model checks.
#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "lgcp/engine.hpp"
#include "lgcp/fit_io.hpp"
#include "lgcp/resimulate.hpp"
#include "lgcp/simulate.hpp"
#include "lgcp/summaries.hpp"
#include "lgcp/svg.hpp"

namespace lgcp {

struct StudyOptions {
  std::uint64_t seed = 1;
  int grid_rows = 100, grid_cols = 100;
  int n_bins = 25;
  long resim_iters = 100000;
  int n_envelope = 50;
  int n_threads = 1;
  std::string out_dir;  // empty: no files written
  bool plots = false;
};

struct StudyVerdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct StudyResult {
  std::string study;
  std::vector<StudyVerdict> verdicts;
  PointPattern pattern;
  SavedFit fit;
  SummaryFunction l_original;   // L or L_inhom of the generating pattern
  EnvelopeBand band;            // over resimulated patterns
  bool all_pass() const {
    for (const auto& v : verdicts)
      if (!v.pass) return false;
    return !verdicts.empty();
  }
};

// ---------------------------------------------------------------------------
// model (eta = b0 + f(zc) [+ f_s]) fitting
// ---------------------------------------------------------------------------

struct CovariateModelFit {
  GridSpec grid;
  BinnedCovariate binned;
  FitResult fit;
  SavedFit saved;
};

inline CovariateModelFit fit_constructed_covariate_model(const PointPattern& pattern,
                                                         const GridSpec& grid, int n_bins,
                                                         bool with_spatial,
                                                         const EngineOptions& eopts,
                                                         EdgeRule edge_rule = EdgeRule::none) {
  CovariateModelFit out;
  out.grid = grid;
  auto counts = grid_counts(pattern, grid);
  auto zc = nearest_point_distance(pattern, grid, edge_rule);
  out.binned = bin_covariate(zc, n_bins);

  ModelData data;
  data.grid = grid;
  data.counts = &counts;
  data.binned["zc"] = out.binned;

  ModelSpec spec;
  spec.components = {intercept_component("b0", 0.001),
                     rw1_component("f_zc", "zc", n_bins, PrecisionPrior(1.0, 5e-5))};
  BlockSpec blk;
  blk.name = "pattern";
  blk.family = Family::poisson_count;
  blk.data = "counts";
  blk.terms = {{"b0"}, {"f_zc"}};
  if (with_spatial) {
    spec.components.push_back(rw2_component("f_s", PrecisionPrior(1.0, 5e-5)));
    blk.terms.push_back({"f_s"});
  }
  spec.blocks = {blk};

  auto model = assemble(spec, data);
  LgmEngine engine(model, eopts);
  out.fit = engine.fit();

  out.saved.grid = grid;
  out.saved.fit = out.fit;
  out.saved.edge_rule = edge_rule;
  out.saved.n_points = static_cast<int>(pattern.size());
  out.saved.baseline_eta = frozen_baseline(model, out.fit, data);
  out.saved.spline_knots = out.binned.bin_midpoints;
  out.saved.spline_values = out.fit.component("f_zc").mean;
  return out;
}

// ---------------------------------------------------------------------------
// credible functionals of the fitted covariate effect
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t nearest_bin(const std::vector<double>& mids, double arg) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < mids.size(); ++k)
    if (std::abs(mids[k] - arg) < std::abs(mids[best] - arg)) best = k;
  return best;
}

}  // namespace detail

// posterior of f(a) - f(b): mean and sd from the mixed component covariance
inline std::pair<double, double> f_difference(const ComponentSummary& f,
                                              const std::vector<double>& mids, double a,
                                              double b) {
  require(f.has_cov, "f_difference: component lacks a dense covariance");
  std::size_t i = detail::nearest_bin(mids, a), j = detail::nearest_bin(mids, b);
  const int L = f.length;
  double mean = f.mean[i] - f.mean[j];
  double var = f.cov[i * static_cast<std::size_t>(L) + i] + f.cov[j * static_cast<std::size_t>(L) + j] -
               2.0 * f.cov[i * static_cast<std::size_t>(L) + j];
  return {mean, std::sqrt(std::max(var, 0.0))};
}

// posterior of the least-squares slope of f over bins with midpoint >= lo
inline std::pair<double, double> f_tail_slope(const ComponentSummary& f,
                                              const std::vector<double>& mids, double lo) {
  require(f.has_cov, "f_tail_slope: component lacks a dense covariance");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < mids.size(); ++k)
    if (mids[k] >= lo) idx.push_back(k);
  require(idx.size() >= 3, "f_tail_slope: too few tail bins");
  double xbar = 0.0;
  for (auto k : idx) xbar += mids[k] / idx.size();
  double sxx = 0.0;
  for (auto k : idx) sxx += (mids[k] - xbar) * (mids[k] - xbar);
  std::vector<double> c(mids.size(), 0.0);
  for (auto k : idx) c[k] = (mids[k] - xbar) / sxx;
  double mean = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) mean += c[k] * f.mean[k];
  double var = 0.0;
  const auto L = static_cast<std::size_t>(f.length);
  for (std::size_t p = 0; p < c.size(); ++p)
    for (std::size_t q = 0; q < c.size(); ++q) var += c[p] * c[q] * f.cov[p * L + q];
  return {mean, std::sqrt(std::max(var, 0.0))};
}

// pointwise 95% band of f contains zero everywhere
inline bool f_band_contains_zero(const ComponentSummary& f) {
  for (int k = 0; k < f.length; ++k)
    if (std::abs(f.mean[static_cast<std::size_t>(k)]) >
        1.96 * f.sd[static_cast<std::size_t>(k)])
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// study output helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void write_study_files(const StudyResult& res, const BinnedCovariate& binned,
                              const StudyOptions& opts) {
  if (opts.out_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  auto path = [&](const std::string& name) { return opts.out_dir + "/" + name; };

  write_pattern(res.pattern, path("pattern.csv"));
  write_fit_json(res.fit, path("fit.json"));
  {
    const auto& f = res.fit.fit.component("f_zc");
    std::ofstream out(path("f_zc.csv"));
    out << "z,mean,lo95,hi95\n";
    char buf[160];
    for (int k = 0; k < f.length; ++k) {
      auto ku = static_cast<std::size_t>(k);
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", binned.bin_midpoints[ku],
                    f.mean[ku], f.mean[ku] - 1.96 * f.sd[ku], f.mean[ku] + 1.96 * f.sd[ku]);
      out << buf;
    }
  }
  for (const auto& c : res.fit.fit.components)
    if (c.kind == ComponentKind::rw2_spatial) {
      write_grid_csv(c.mean, res.fit.grid.n_row, res.fit.grid.n_col, path(c.name + "_mean.csv"));
      write_grid_csv(c.sd, res.fit.grid.n_row, res.fit.grid.n_col, path(c.name + "_sd.csv"));
    }
  write_summary_csv(res.l_original, path("l_original.csv"));
  write_envelope_csv(res.band, path("l_envelope.csv"));
  {
    std::ofstream out(path("dic.txt"));
    out << "dic " << res.fit.fit.dic << "\np_d " << res.fit.fit.p_d << "\n";
  }
  {
    std::ofstream out(path("verdict.txt"));
    for (const auto& v : res.verdicts)
      out << (v.pass ? "PASS" : "FAIL") << " " << v.name << ": " << v.detail << "\n";
  }
  if (opts.plots) {
    SvgPlot plot;
    plot.add_line(res.band.r, res.band.lower, "#999", 1.0, "4 3");
    plot.add_line(res.band.r, res.band.upper, "#999", 1.0, "4 3");
    plot.add_line(res.band.r, res.band.mean, "#555", 1.2, "6 3");
    plot.add_line(res.l_original.r, res.l_original.value, "#000", 1.8);
    plot.write(path("l_envelope.svg"));
    const auto& f = res.fit.fit.component("f_zc");
    SvgPlot fplot;
    std::vector<double> lo(f.mean.size()), hi(f.mean.size());
    for (std::size_t k = 0; k < f.mean.size(); ++k) {
      lo[k] = f.mean[k] - 1.96 * f.sd[k];
      hi[k] = f.mean[k] + 1.96 * f.sd[k];
    }
    fplot.add_line(binned.bin_midpoints, f.mean, "#000", 1.8);
    fplot.add_line(binned.bin_midpoints, lo, "#999", 1.0, "4 3");
    fplot.add_line(binned.bin_midpoints, hi, "#999", 1.0, "4 3");
    fplot.write(path("f_zc.svg"));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// the four studies
// ---------------------------------------------------------------------------

inline EngineOptions study_engine_options(const StudyOptions& opts) {
  EngineOptions e;
  e.n_threads = opts.n_threads;
  return e;
}

inline StudyResult study_strauss(const StudyOptions& opts) {
  StudyResult res;
  res.study = "strauss";
  Window w = Window::unit_square();
  GridSpec grid(opts.grid_rows, opts.grid_cols, w);
  res.pattern = sim_strauss(StraussParams(700.0, 0.5, 0.05), w, opts.seed);
  auto cm = fit_constructed_covariate_model(res.pattern, grid, opts.n_bins, false,
                                            study_engine_options(opts));
  res.fit = cm.saved;

  const auto& f = cm.fit.component("f_zc");
  auto [d, sd] = f_difference(f, cm.binned.bin_midpoints, 0.045, 0.005);
  res.verdicts.push_back({"f increasing on [0,0.05]",
                          d - 1.645 * sd > 0.0,
                          "f(0.045)-f(0.005) = " + std::to_string(d) + " (sd " + std::to_string(sd) + ")"});
  auto [slope, ssd] = f_tail_slope(f, cm.binned.bin_midpoints, 0.07);
  res.verdicts.push_back({"f flat beyond 0.07",
                          std::abs(slope) < 1.96 * ssd,
                          "tail slope = " + std::to_string(slope) + " (sd " + std::to_string(ssd) + ")"});

  double r_max = 0.25;
  res.l_original = l_function(res.pattern, r_max, 256);
  auto fi = res.fit.fitted_intensity();
  int n_pts = static_cast<int>(res.pattern.size());
  res.band = envelopes(
      [&](int k) {
        auto sim = metropolis_resample(fi, n_pts, opts.resim_iters,
                                       opts.seed + 1 + static_cast<std::uint64_t>(k));
        return l_function(sim, r_max, 256);
      },
      opts.n_envelope, opts.n_threads);
  bool inside = true;
  for (std::size_t k = 0; k < res.band.r.size(); ++k)
    if (res.l_original.value[k] < res.band.lower[k] || res.l_original.value[k] > res.band.upper[k])
      inside = false;
  res.verdicts.push_back({"original L inside envelopes at all distances", inside, ""});
  detail::write_study_files(res, cm.binned, opts);
  return res;
}

inline StudyResult study_thomas(const StudyOptions& opts) {
  StudyResult res;
  res.study = "thomas";
  Window w = Window::unit_square();
  GridSpec grid(opts.grid_rows, opts.grid_cols, w);
  res.pattern = sim_thomas(ThomasParams(10.0, 0.05, 50.0), w, opts.seed);
  auto cm = fit_constructed_covariate_model(res.pattern, grid, opts.n_bins, false,
                                            study_engine_options(opts));
  res.fit = cm.saved;

  const auto& f = cm.fit.component("f_zc");
  auto [d, sd] = f_difference(f, cm.binned.bin_midpoints, 0.01, 0.1);
  res.verdicts.push_back({"f decreasing at small distances",
                          d - 1.645 * sd > 0.0,
                          "f(0.01)-f(0.1) = " + std::to_string(d) + " (sd " + std::to_string(sd) + ")"});

  double r_max = 0.25;
  res.l_original = l_function(res.pattern, r_max, 256);
  auto fi = res.fit.fitted_intensity();
  int n_pts = static_cast<int>(res.pattern.size());
  res.band = envelopes(
      [&](int k) {
        auto sim = metropolis_resample(fi, n_pts, opts.resim_iters,
                                       opts.seed + 1 + static_cast<std::uint64_t>(k));
        return l_function(sim, r_max, 256);
      },
      opts.n_envelope, opts.n_threads);
  // weaker local clustering than the generator: mean resimulated L above the
  // Poisson line but below the original at small r
  std::size_t at = detail::nearest_bin(res.band.r, 0.05);
  bool above_poisson = res.band.mean[at] > res.band.r[at];
  bool below_original = res.band.mean[at] < res.l_original.value[at];
  res.verdicts.push_back({"resimulated clustering present but weaker",
                          above_poisson && below_original,
                          "mean L(0.05) = " + std::to_string(res.band.mean[at]) + ", original " +
                              std::to_string(res.l_original.value[at])});
  detail::write_study_files(res, cm.binned, opts);
  return res;
}

inline StudyResult study_inhom(const StudyOptions& opts) {
  StudyResult res;
  res.study = "inhom";
  Window w = Window::unit_square();
  GridSpec grid(opts.grid_rows, opts.grid_cols, w);
  auto clustered = sim_thomas(ThomasParams(TrendFn::linear(50.0, 0.0), 0.01, 5.0), w, opts.seed);
  auto noise = sim_poisson(TrendFn::linear(0.25, 0.0), w, opts.seed + 7777);
  res.pattern = superimpose(clustered, noise);
  auto cm = fit_constructed_covariate_model(res.pattern, grid, opts.n_bins, true,
                                            study_engine_options(opts));
  res.fit = cm.saved;

  const auto& fs = cm.fit.component("f_s");
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  const int n_cells = grid.n_cells();
  for (int c = 0; c < n_cells; ++c) {
    mx += cell_center(grid, c).x / n_cells;
    my += fs.mean[static_cast<std::size_t>(c)] / n_cells;
  }
  for (int c = 0; c < n_cells; ++c) {
    double dx = cell_center(grid, c).x - mx;
    double dy = fs.mean[static_cast<std::size_t>(c)] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  double corr = sxy / std::sqrt(sxx * syy);
  res.verdicts.push_back({"spatial effect tracks the trend",
                          corr > 0.5,
                          "corr(f_s, x1) = " + std::to_string(corr)});
  const auto& f = cm.fit.component("f_zc");
  auto [d, sd] = f_difference(f, cm.binned.bin_midpoints, 0.005, 0.05);
  res.verdicts.push_back({"f decreasing at small distances",
                          d > 0.0,
                          "f(0.005)-f(0.05) = " + std::to_string(d) + " (sd " + std::to_string(sd) + ")"});

  double r_max = 0.25;
  auto lam = res.fit.intensity();
  res.l_original = l_inhom(res.pattern, lam, grid, r_max, 256);
  auto fi = res.fit.fitted_intensity();
  int n_pts = static_cast<int>(res.pattern.size());
  res.band = envelopes(
      [&](int k) {
        auto sim = metropolis_resample(fi, n_pts, opts.resim_iters,
                                       opts.seed + 1 + static_cast<std::uint64_t>(k));
        return l_inhom(sim, lam, grid, r_max, 256);
      },
      opts.n_envelope, opts.n_threads);
  detail::write_study_files(res, cm.binned, opts);
  return res;
}

inline StudyResult study_null(const StudyOptions& opts) {
  StudyResult res;
  res.study = "null";
  Window w = Window::unit_square();
  GridSpec grid(opts.grid_rows, opts.grid_cols, w);
  res.pattern = sim_poisson(700.0, w, opts.seed);
  auto cm = fit_constructed_covariate_model(res.pattern, grid, opts.n_bins, false,
                                            study_engine_options(opts));
  res.fit = cm.saved;
  const auto& f = cm.fit.component("f_zc");
  res.verdicts.push_back({"f 95% band contains 0 everywhere", f_band_contains_zero(f), ""});

  double r_max = 0.25;
  res.l_original = l_function(res.pattern, r_max, 256);
  auto fi = res.fit.fitted_intensity();
  int n_pts = static_cast<int>(res.pattern.size());
  res.band = envelopes(
      [&](int k) {
        auto sim = metropolis_resample(fi, n_pts, opts.resim_iters,
                                       opts.seed + 1 + static_cast<std::uint64_t>(k));
        return l_function(sim, r_max, 256);
      },
      opts.n_envelope, opts.n_threads);
  detail::write_study_files(res, cm.binned, opts);
  return res;
}

inline StudyResult run_study(const std::string& name, const StudyOptions& opts) {
  if (name == "strauss") return study_strauss(opts);
  if (name == "thomas") return study_thomas(opts);
  if (name == "inhom") return study_inhom(opts);
  if (name == "null") return study_null(opts);
  throw ParameterError("unknown study '" + name + "'");
}

// ---------------------------------------------------------------------------
// synthetic three-block marked-pattern model (pattern + two dependent marks
// sharing one scaled spatial effect)
// ---------------------------------------------------------------------------

struct MarkedSimParams {
  GridSpec grid = GridSpec(16, 16, Window::unit_square());
  double beta01 = 6.2, beta02 = 1.0, beta03 = 0.5;
  double beta2 = -1.2, beta3 = 1.7, beta4 = 1.4;
  double fs_amplitude = 1.0;
  double sd_u = 0.15;     // pattern cell noise
  double sd_leaf = 0.7;   // leaf-mark observation noise
  double sd_w = 0.2;      // frequency-mark overdispersion
  std::uint64_t seed = 1;
};

struct MarkedSimData {
  PointPattern pattern;  // marks: "leaf", "freq"
  CountGrid counts;
  std::vector<double> true_fs;
};

inline MarkedSimData simulate_marked_pattern(const MarkedSimParams& p) {
  Rng rng(p.seed);
  const GridSpec& grid = p.grid;
  MarkedSimData out;
  out.true_fs.resize(static_cast<std::size_t>(grid.n_cells()));
  double fs_mean = 0.0;
  for (int c = 0; c < grid.n_cells(); ++c) {
    Point ctr = cell_center(grid, c);
    out.true_fs[static_cast<std::size_t>(c)] =
        p.fs_amplitude * std::sin(2.0 * M_PI * ctr.x) * std::cos(2.0 * M_PI * ctr.y);
    fs_mean += out.true_fs[static_cast<std::size_t>(c)] / grid.n_cells();
  }
  for (auto& v : out.true_fs) v -= fs_mean;  // identified up to the intercept

  out.pattern.window = grid.window;
  out.counts.grid = grid;
  out.counts.counts.assign(static_cast<std::size_t>(grid.n_cells()), 0);
  std::vector<double> leaf, freq;
  const double area = grid.cell_area();
  for (int c = 0; c < grid.n_cells(); ++c) {
    double eta = p.beta01 + out.true_fs[static_cast<std::size_t>(c)] + rng.normal(0.0, p.sd_u);
    long y = rng.poisson(area * std::exp(eta));
    out.counts.counts[static_cast<std::size_t>(c)] = y;
    int i = c / grid.n_col, j = c % grid.n_col;
    for (long k = 0; k < y; ++k) {
      Point pt{grid.window.x_min + (j + rng.uniform()) * grid.cell_width(),
               grid.window.y_min + (i + rng.uniform()) * grid.cell_height()};
      out.pattern.points.push_back(pt);
      double m1 = p.beta02 + p.beta2 * out.true_fs[static_cast<std::size_t>(c)] +
                  rng.normal(0.0, p.sd_leaf);
      double nu = p.beta03 + p.beta3 * out.true_fs[static_cast<std::size_t>(c)] + p.beta4 * m1 +
                  rng.normal(0.0, p.sd_w);
      leaf.push_back(m1);
      freq.push_back(static_cast<double>(rng.poisson(std::exp(nu))));
    }
  }
  out.pattern.marks["leaf"] = std::move(leaf);
  out.pattern.marks["freq"] = std::move(freq);
  return out;
}

// Model-building steps mirroring a stepwise workflow: 1 error terms only,
// 2 + intercepts, 3 + mark fixed effect, 4 + shared scaled spatial effect.
inline ModelSpec marked_model_spec(int step) {
  require(step >= 1 && step <= 4, "marked_model_spec: step in 1..4");
  ModelSpec spec;
  spec.components = {iid_component("u", PrecisionPrior(1.0, 5e-5)),
                     iid_component("w", PrecisionPrior(1.0, 5e-5))};
  BlockSpec pattern;
  pattern.name = "pattern";
  pattern.family = Family::poisson_count;
  pattern.data = "counts";
  pattern.terms = {{"u"}};
  BlockSpec leaf;
  leaf.name = "leaf";
  leaf.family = Family::gaussian;
  leaf.unit = ObsUnit::points;
  leaf.data = "leaf";
  leaf.obs_precision.is_hyper = true;
  leaf.obs_precision.prior = PrecisionPrior(1.0, 5e-5);
  BlockSpec freq;
  freq.name = "freq";
  freq.family = Family::poisson_log;
  freq.unit = ObsUnit::points;
  freq.data = "freq";
  freq.terms = {{"w"}};
  if (step >= 2) {
    spec.components.push_back(intercept_component("b01", 0.001));
    spec.components.push_back(intercept_component("b02", 0.001));
    spec.components.push_back(intercept_component("b03", 0.001));
    pattern.terms.push_back({"b01"});
    leaf.terms.push_back({"b02"});
    freq.terms.push_back({"b03"});
  }
  if (step >= 3) {
    spec.components.push_back(fixed_effect_component("b4", 0.001));
    PredictorTerm t;
    t.component = "b4";
    t.obs_multiplier = "leaf";
    freq.terms.push_back(t);
  }
  if (step >= 4) {
    spec.components.push_back(rw2_component("f_s", PrecisionPrior(1.0, 5e-5)));
    pattern.terms.push_back({"f_s"});  // scale fixed at 1
    PredictorTerm t2;
    t2.component = "f_s";
    t2.hyper_scale = "beta2";
    leaf.terms.push_back(t2);
    PredictorTerm t3;
    t3.component = "f_s";
    t3.hyper_scale = "beta3";
    freq.terms.push_back(t3);
    spec.scalings = {{"beta2", 0.0, 10.0}, {"beta3", 0.0, 10.0}};
  }
  spec.blocks = {pattern, leaf, freq};
  return spec;
}

inline FitResult fit_marked_model(const MarkedSimData& sim, int step, const EngineOptions& eopts) {
  ModelData data;
  data.grid = sim.counts.grid;
  data.counts = &sim.counts;
  data.points = &sim.pattern;
  auto model = assemble(marked_model_spec(step), data);
  LgmEngine engine(model, eopts);
  return engine.fit();
}

}  // namespace lgcp
