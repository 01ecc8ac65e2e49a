#include <catch2/catch_amalgamated.hpp>

#include "lgcp/resimulate.hpp"
#include "lgcp/simulate.hpp"

using namespace lgcp;

namespace {

FittedIntensity toy_fit(GridSpec grid, std::vector<double> baseline,
                        std::optional<CubicSpline> spline = std::nullopt) {
  FittedIntensity fit;
  fit.grid = std::move(grid);
  fit.baseline_eta = std::move(baseline);
  fit.spline = std::move(spline);
  return fit;
}

}  // namespace

TEST_CASE("eta_hat: zero spline and constant baseline give a constant predictor") {
  GridSpec grid(4, 4, Window::unit_square());
  auto fit = toy_fit(grid, std::vector<double>(16, 1.7),
                     spline_build({0.0, 0.1, 0.2}, {0.0, 0.0, 0.0}));
  PointPattern state({{0.3, 0.3}, {0.8, 0.6}}, grid.window);
  for (double v : eta_hat(state, fit)) REQUIRE(v == Catch::Approx(1.7));
}

TEST_CASE("eta_hat: moving a point changes only cells whose covariate changed") {
  GridSpec grid(8, 8, Window::unit_square());
  auto pat = sim_poisson(60.0, grid.window, 5);
  auto fit = toy_fit(grid, std::vector<double>(64, 0.0),
                     spline_build({0.0, 0.05, 0.1, 0.3}, {0.4, 0.1, -0.2, -0.3}));
  auto eta0 = eta_hat(pat, fit);
  auto z0 = nearest_point_distance(pat, grid);
  auto moved = pat;
  moved.points[2] = {0.9, 0.15};
  auto eta1 = eta_hat(moved, fit);
  auto z1 = nearest_point_distance(moved, grid);
  for (int c = 0; c < 64; ++c) {
    bool z_same = (is_missing(z0.values[static_cast<std::size_t>(c)]) &&
                   is_missing(z1.values[static_cast<std::size_t>(c)])) ||
                  z0.values[static_cast<std::size_t>(c)] == z1.values[static_cast<std::size_t>(c)];
    if (z_same)
      REQUIRE(eta0[static_cast<std::size_t>(c)] == eta1[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("metropolis_resample: zero points is a parameter error, count is invariant") {
  GridSpec grid(3, 3, Window::unit_square());
  auto fit = toy_fit(grid, std::vector<double>(9, 0.0));
  REQUIRE_THROWS_AS(metropolis_resample(fit, 0, 10, 1), ParameterError);
  for (int n : {1, 7, 40})
    REQUIRE(metropolis_resample(fit, n, 500, 2).size() == static_cast<std::size_t>(n));
}

TEST_CASE("metropolis_resample: reproducible for identical (fit, seed, iters)") {
  GridSpec grid(5, 5, Window::unit_square());
  auto fit = toy_fit(grid, std::vector<double>(25, 0.3),
                     spline_build({0.0, 0.1, 0.2}, {0.5, 0.0, -0.5}));
  auto a = metropolis_resample(fit, 30, 2000, 99);
  auto b = metropolis_resample(fit, 30, 2000, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a.points[k].x == b.points[k].x);
    REQUIRE(a.points[k].y == b.points[k].y);
  }
}

TEST_CASE("metropolis_resample: on a 1x1 grid every move is accepted") {
  GridSpec grid(1, 1, Window::unit_square());
  auto fit = toy_fit(grid, std::vector<double>(1, 2.0),
                     spline_build({0.0, 0.5, 1.0}, {1.0, 0.5, 0.0}));
  std::vector<double> ratios;
  ResampleOptions opts;
  opts.log_ratio_sink = &ratios;
  metropolis_resample(fit, 5, 300, 7, opts);
  for (double lr : ratios) REQUIRE(lr == 0.0);
}

TEST_CASE("metropolis_resample: incremental ratios equal paranoid recomputation to 1e-10") {
  GridSpec grid(12, 12, Window::unit_square());
  std::vector<double> baseline(144);
  for (int c = 0; c < 144; ++c) baseline[static_cast<std::size_t>(c)] = 3.0 + 0.8 * cell_center(grid, c).x;
  auto fit = toy_fit(grid, baseline,
                     spline_build({0.0, 0.03, 0.08, 0.15, 0.4}, {0.8, 0.3, -0.1, -0.4, -0.5}));
  std::vector<double> inc, par;
  {
    ResampleOptions o;
    o.log_ratio_sink = &inc;
    metropolis_resample(fit, 60, 10000, 31, o);
  }
  {
    ResampleOptions o;
    o.paranoid = true;
    o.log_ratio_sink = &par;
    metropolis_resample(fit, 60, 10000, 31, o);
  }
  REQUIRE(inc.size() == par.size());
  double max_dev = 0.0;
  for (std::size_t k = 0; k < inc.size(); ++k) max_dev = std::max(max_dev, std::abs(inc[k] - par[k]));
  REQUIRE(max_dev < 1e-10);
}

TEST_CASE("metropolis_resample: 2-cell stationary law matches exact enumeration") {
  // two cells, constant predictors eta = (0.4, -0.3); the count in cell 0 is a
  // lumped birth-death chain whose stationary law is enumerable:
  // pi(k) ~ C(n,k) p^k (1-p)^(n-k) * L(k), p = area fraction of cell 0.
  GridSpec grid(1, 2, Window(0, 2, 0, 1));
  auto fit = toy_fit(grid, {0.4, -0.3});
  const int n = 12;
  const long steps = 1000000;

  // exact target over k = points in cell 0
  std::vector<double> target(n + 1);
  double area = 1.0;  // each cell
  auto lam = [&](int c) { return area * std::exp(fit.baseline_eta[static_cast<std::size_t>(c)]); };
  double z = 0.0;
  for (int k = 0; k <= n; ++k) {
    double logp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                  n * std::log(0.5) + k * std::log(lam(0)) - std::lgamma(k + 1.0) +
                  (n - k) * std::log(lam(1)) - std::lgamma(n - k + 1.0);
    target[static_cast<std::size_t>(k)] = std::exp(logp);
    z += target[static_cast<std::size_t>(k)];
  }
  for (auto& t : target) t /= z;

  // occupancy of the chain: walk manually via repeated short runs is wasteful;
  // instead reuse the sampler's own chain by recording after each step via a
  // single long run sampled through the ratio sink length (state inspected by
  // re-running with incremental bookkeeping here).
  Rng rng(1234);
  std::vector<int> cell_of(n);
  int k0 = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform(0.0, 2.0);
    cell_of[static_cast<std::size_t>(i)] = x < 1.0 ? 0 : 1;
    if (cell_of[static_cast<std::size_t>(i)] == 0) ++k0;
  }
  std::vector<double> occupancy(n + 1, 0.0);
  auto term = [&](int c, int y) {
    return y * std::log(lam(c)) - lam(c) - std::lgamma(y + 1.0);
  };
  int in0 = k0;
  for (long s = 0; s < steps; ++s) {
    int i = static_cast<int>(rng.uniform_index(n));
    double x = rng.uniform(0.0, 2.0);
    int to = x < 1.0 ? 0 : 1;
    int from = cell_of[static_cast<std::size_t>(i)];
    if (to != from) {
      int new_in0 = in0 + (to == 0 ? 1 : -1);
      double lr = term(0, new_in0) + term(1, n - new_in0) - term(0, in0) - term(1, n - in0);
      if (lr >= 0.0 || rng.uniform() < std::exp(lr)) {
        cell_of[static_cast<std::size_t>(i)] = to;
        in0 = new_in0;
      }
    }
    occupancy[static_cast<std::size_t>(in0)] += 1.0 / steps;
  }
  double tv = 0.0;
  for (int k = 0; k <= n; ++k) tv += 0.5 * std::abs(occupancy[static_cast<std::size_t>(k)] - target[static_cast<std::size_t>(k)]);
  REQUIRE(tv < 0.02);

  // and the production sampler's final states follow the same law
  std::vector<double> freq(n + 1, 0.0);
  const int reps = 400;
  for (int rep = 0; rep < reps; ++rep) {
    auto pat = metropolis_resample(fit, n, 4000, 777 + static_cast<std::uint64_t>(rep));
    int k = 0;
    for (const auto& p : pat.points)
      if (grid.cell_of(p) == 0) ++k;
    freq[static_cast<std::size_t>(k)] += 1.0 / reps;
  }
  double tv2 = 0.0;
  for (int k = 0; k <= n; ++k) tv2 += 0.5 * std::abs(freq[static_cast<std::size_t>(k)] - target[static_cast<std::size_t>(k)]);
  REQUIRE(tv2 < 0.08);  // 400 independent draws
}

TEST_CASE("metropolis_resample: repulsion-trained spline preserves inhibition") {
  // spline rising with distance (the repulsive shape): resampled patterns
  // should carry fewer close pairs than binomial noise
  GridSpec grid(40, 40, Window::unit_square());
  auto fit = toy_fit(grid, std::vector<double>(1600, std::log(300.0)),
                     spline_build({0.0, 0.02, 0.04, 0.06, 0.1}, {-3.0, -1.5, 0.0, 0.5, 0.5}));
  double resampled_pairs = 0.0, uniform_pairs = 0.0;
  for (int s = 0; s < 5; ++s) {
    auto pat = metropolis_resample(fit, 300, 30000, 50 + static_cast<std::uint64_t>(s));
    resampled_pairs += static_cast<double>(close_pair_count(pat, 0.04));
    uniform_pairs += static_cast<double>(
        close_pair_count(sim_poisson(300.0, grid.window, 950 + static_cast<std::uint64_t>(s)), 0.04));
  }
  REQUIRE(resampled_pairs < uniform_pairs);
}
