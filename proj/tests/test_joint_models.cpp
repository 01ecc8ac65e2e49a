#include <catch2/catch_amalgamated.hpp>

#include "lgcp/study.hpp"
#include "support/oracles.hpp"

using namespace lgcp;

TEST_CASE("marked simulation: three consistent data blocks") {
  MarkedSimParams p;
  p.seed = 5;
  auto sim = simulate_marked_pattern(p);
  REQUIRE(sim.pattern.size() > 100);
  REQUIRE(sim.pattern.marks.at("leaf").size() == sim.pattern.size());
  REQUIRE(sim.pattern.marks.at("freq").size() == sim.pattern.size());
  REQUIRE(sim.counts.total() == static_cast<long>(sim.pattern.size()));
  for (double m : sim.pattern.marks.at("freq")) {
    REQUIRE(m >= 0.0);
    REQUIRE(m == std::floor(m));
  }
}

TEST_CASE("marked model: three likelihood blocks share one scaled spatial field") {
  MarkedSimParams p;
  p.seed = 11;
  auto sim = simulate_marked_pattern(p);
  ModelData data;
  data.grid = sim.counts.grid;
  data.counts = &sim.counts;
  data.points = &sim.pattern;
  auto model = assemble(marked_model_spec(4), data);

  // theta: tau_u, tau_w, tau_fs, obs precision, beta2, beta3
  REQUIRE(model.n_hyper() == 6);
  int n_cells = sim.counts.grid.n_cells();
  auto n_pts = static_cast<int>(sim.pattern.size());
  REQUIRE(model.n_latent == n_cells /*u*/ + n_pts /*w*/ + 3 /*intercepts*/ + 1 /*b4*/ + n_cells /*f_s*/);
  REQUIRE(model.rows.size() == static_cast<std::size_t>(n_cells + 2 * n_pts));

  // the leaf and freq rows must carry the copy-scaling hyper on the f_s column
  int fs_idx = model.component_index("f_s");
  auto [fs_lo, fs_hi] = model.component_range(fs_idx);
  int leaf_scaled = 0, freq_scaled = 0, pattern_fixed = 0;
  for (const auto& row : model.rows) {
    const auto& blk = model.spec.blocks[static_cast<std::size_t>(row.block)];
    for (const auto& e : row.entries) {
      if (e.col < fs_lo || e.col >= fs_hi) continue;
      if (blk.name == "pattern") {
        REQUIRE(e.hyper == -1);  // scale fixed at 1
        ++pattern_fixed;
      } else if (blk.name == "leaf") {
        REQUIRE(e.hyper >= 0);
        ++leaf_scaled;
      } else {
        REQUIRE(e.hyper >= 0);
        ++freq_scaled;
      }
    }
  }
  REQUIRE(pattern_fixed == n_cells);
  REQUIRE(leaf_scaled == n_pts);
  REQUIRE(freq_scaled == n_pts);

  // mark-on-mark fixed effect: freq rows carry the leaf value as coefficient
  int b4_col = model.comp_offset[static_cast<std::size_t>(model.component_index("b4"))];
  std::size_t freq_row0 = static_cast<std::size_t>(n_cells + n_pts);
  bool found = false;
  for (const auto& e : model.rows[freq_row0].entries)
    if (e.col == b4_col) {
      REQUIRE(e.coeff == sim.pattern.marks.at("leaf")[0]);
      found = true;
    }
  REQUIRE(found);
}

TEST_CASE("marked model: full fit recovers the generator signs") {
  MarkedSimParams p;
  p.seed = 21;
  auto sim = simulate_marked_pattern(p);
  EngineOptions eo;
  eo.n_threads = 2;
  auto fit = fit_marked_model(sim, 4, eo);

  double b2 = 0, b3 = 0;
  for (const auto& h : fit.hyper_summaries) {
    if (h.name == "beta2") b2 = h.mean;
    if (h.name == "beta3") b3 = h.mean;
  }
  REQUIRE(b2 < 0.0);
  REQUIRE(b3 > 0.0);
  REQUIRE(fit.component("b4").mean[0] > 0.0);

  // the spatial field tracks the generating surface
  const auto& fs = fit.component("f_s");
  double num = 0, da = 0, db = 0;
  for (std::size_t c = 0; c < fs.mean.size(); ++c) {
    num += fs.mean[c] * sim.true_fs[c];
    da += fs.mean[c] * fs.mean[c];
    db += sim.true_fs[c] * sim.true_fs[c];
  }
  REQUIRE(num / std::sqrt(da * db) > 0.6);
}

TEST_CASE("marked model: stepwise DIC decreases as structure is added") {
  MarkedSimParams p;
  p.seed = 31;
  auto sim = simulate_marked_pattern(p);
  EngineOptions eo;
  eo.n_threads = 2;
  std::vector<double> dic;
  for (int step = 1; step <= 4; ++step) dic.push_back(fit_marked_model(sim, step, eo).dic);
  for (std::size_t k = 1; k < dic.size(); ++k) REQUIRE(dic[k] < dic[k - 1]);
}

TEST_CASE("joint covariate model: missing observations are skipped but predicted") {
  // pattern + one noisy covariate observed in a few cells, linked by a shared
  // spatial field
  GridSpec grid(8, 8, Window::unit_square());
  Rng rng(77);
  std::vector<double> true_fs(64);
  for (int c = 0; c < 64; ++c) true_fs[static_cast<std::size_t>(c)] = std::sin(2.0 * M_PI * cell_center(grid, c).x);
  CountGrid counts;
  counts.grid = grid;
  counts.counts.resize(64);
  for (int c = 0; c < 64; ++c)
    counts.counts[static_cast<std::size_t>(c)] = rng.poisson(grid.cell_area() * std::exp(5.0 + true_fs[static_cast<std::size_t>(c)]));
  std::vector<double> z1(64, missing_value());
  for (int c = 0; c < 64; c += 3) z1[static_cast<std::size_t>(c)] = true_fs[static_cast<std::size_t>(c)] + rng.normal(0.0, 0.1);

  ModelSpec spec;
  spec.components = {intercept_component("b0", 0.001), rw2_component("f_s", PrecisionPrior(1.0, 5e-5))};
  BlockSpec pattern;
  pattern.name = "pattern";
  pattern.family = Family::poisson_count;
  pattern.data = "counts";
  pattern.terms = {{"b0"}, {"f_s"}};
  BlockSpec cov;
  cov.name = "z1";
  cov.family = Family::gaussian;
  cov.unit = ObsUnit::cells;
  cov.data = "z1";
  cov.terms = {{"f_s"}};
  cov.obs_precision.is_hyper = true;
  cov.obs_precision.prior = PrecisionPrior(1.0, 5e-5);
  spec.blocks = {pattern, cov};

  ModelData data;
  data.grid = grid;
  data.counts = &counts;
  data.cell_fields["z1"] = z1;
  auto model = assemble(spec, data);

  int observed = 0;
  for (double v : z1)
    if (!is_missing(v)) ++observed;
  REQUIRE(model.rows.size() == static_cast<std::size_t>(64 + observed));

  EngineOptions eo;
  eo.n_threads = 2;
  LgmEngine engine(model, eo);
  auto fit = engine.fit();
  // latent values exist for every cell, including unobserved-covariate cells
  const auto& fs = fit.component("f_s");
  REQUIRE(static_cast<int>(fs.mean.size()) == 64);
  for (double sd : fs.sd) REQUIRE(sd > 0.0);
  double num = 0, da = 0, db = 0;
  for (std::size_t c = 0; c < fs.mean.size(); ++c) {
    num += fs.mean[c] * true_fs[c];
    da += fs.mean[c] * fs.mean[c];
    db += true_fs[c] * true_fs[c];
  }
  REQUIRE(num / std::sqrt(da * db) > 0.7);
}

TEST_CASE("masked cells carry no likelihood but keep latent predictions") {
  GridSpec base(6, 6, Window::unit_square());
  Window w = Window::unit_square();
  w.cell_mask.assign(36, 1);
  for (int c = 0; c < 6; ++c) w.cell_mask[static_cast<std::size_t>(c)] = 0;  // mask the first row
  w.mask_rows = 6;
  w.mask_cols = 6;
  GridSpec grid(6, 6, w);
  Rng rng(9);
  CountGrid counts;
  counts.grid = grid;
  counts.counts.assign(36, 0);
  for (int c = 6; c < 36; ++c) counts.counts[static_cast<std::size_t>(c)] = rng.poisson(3.0);

  ModelSpec spec;
  spec.components = {intercept_component("b0", 0.001), rw2_component("f_s", PrecisionPrior(1.0, 5e-5))};
  BlockSpec pattern;
  pattern.name = "pattern";
  pattern.family = Family::poisson_count;
  pattern.data = "counts";
  pattern.terms = {{"b0"}, {"f_s"}};
  spec.blocks = {pattern};
  ModelData data;
  data.grid = grid;
  data.counts = &counts;
  auto model = assemble(spec, data);
  REQUIRE(model.rows.size() == 30);  // 36 cells minus 6 masked

  LgmEngine engine(model);
  auto fit = engine.fit();
  REQUIRE(static_cast<int>(fit.component("f_s").mean.size()) == 36);
}

TEST_CASE("copy scaling with fixed scale enters the design map directly") {
  GridSpec grid(4, 4, Window::unit_square());
  Rng rng(3);
  CountGrid counts;
  counts.grid = grid;
  counts.counts.assign(16, 1);
  ModelSpec spec;
  spec.components = {intercept_component("b0"), rw2_component("f_s", PrecisionPrior(1.0, 5e-5))};
  BlockSpec blk;
  blk.name = "pattern";
  blk.family = Family::poisson_count;
  blk.data = "counts";
  PredictorTerm scaled;
  scaled.component = "f_s";
  scaled.fixed_scale = 2.5;
  blk.terms = {{"b0"}, scaled};
  spec.blocks = {blk};
  ModelData data;
  data.grid = grid;
  data.counts = &counts;
  auto model = assemble(spec, data);
  for (const auto& row : model.rows)
    REQUIRE(row.entries[1].coeff == 2.5);
}
