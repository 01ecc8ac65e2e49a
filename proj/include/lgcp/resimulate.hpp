// resimulate.hpp -- model-evaluation loop: simulate patterns from a fitted
// gridded intensity via fixed-n Metropolis, with the constructed-covariate
// effect re-evaluated through a frozen spline.
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "lgcp/covariate.hpp"
#include "lgcp/pattern.hpp"
#include "lgcp/rng.hpp"
#include "lgcp/spline.hpp"

namespace lgcp {

// Frozen fit: per-cell baseline predictor (intercept + spatial effects at
// posterior means) plus a spline for the constructed-covariate term.
struct FittedIntensity {
  GridSpec grid;
  std::vector<double> baseline_eta;      // per cell
  std::optional<CubicSpline> spline;     // nullopt: no covariate term
  EdgeRule edge_rule = EdgeRule::none;

  double f_term(double zc) const {
    if (!spline || is_missing(zc)) return 0.0;
    return (*spline)(zc);
  }
};

// Per-cell predictor for a pattern state: recomputes the constructed
// covariate, evaluates the spline, adds the frozen baseline.
inline std::vector<double> eta_hat(const PointPattern& state, const FittedIntensity& fit) {
  require(!state.empty(), "eta_hat: state must be nonempty");
  require(fit.baseline_eta.size() == static_cast<std::size_t>(fit.grid.n_cells()),
          "eta_hat: baseline size mismatch");
  std::vector<double> eta = fit.baseline_eta;
  if (fit.spline) {
    auto zc = nearest_point_distance(state, fit.grid, fit.edge_rule);
    for (int c = 0; c < fit.grid.n_cells(); ++c)
      eta[static_cast<std::size_t>(c)] += fit.f_term(zc.values[static_cast<std::size_t>(c)]);
  }
  return eta;
}

struct ResampleOptions {
  bool paranoid = false;                        // full recomputation every step
  std::vector<double>* log_ratio_sink = nullptr;  // records per-step log ratios
};

// Fixed-n Metropolis: per step one point is moved to a uniform proposal and
// accepted with probability min(1, p(y'|eta') / p(y|eta)) under the gridded
// Poisson likelihood. Incremental updates reproduce the full ratio exactly;
// paranoid mode recomputes every per-cell input from scratch.
inline PointPattern metropolis_resample(const FittedIntensity& fit, int n_points, long n_iter,
                                        std::uint64_t seed, ResampleOptions opts = {}) {
  if (n_points <= 0) throw ParameterError("metropolis_resample: n_points must be positive");
  require(n_iter >= 1, "metropolis_resample: n_iter must be >= 1");
  const GridSpec& grid = fit.grid;
  const Window& win = grid.window;
  const double log_area = std::log(grid.cell_area());
  Rng rng(seed);

  PointPattern state(win);
  state.points.reserve(static_cast<std::size_t>(n_points));
  for (int k = 0; k < n_points; ++k)
    state.points.push_back({rng.uniform(win.x_min, win.x_max), rng.uniform(win.y_min, win.y_max)});

  std::vector<long> counts(static_cast<std::size_t>(grid.n_cells()), 0);
  std::vector<int> point_cell(static_cast<std::size_t>(n_points));
  for (int k = 0; k < n_points; ++k) {
    point_cell[static_cast<std::size_t>(k)] = grid.cell_of(state.points[static_cast<std::size_t>(k)]);
    counts[static_cast<std::size_t>(point_cell[static_cast<std::size_t>(k)])]++;
  }

  const bool use_spline = fit.spline.has_value();
  std::optional<NearestDistanceTracker> tracker;
  std::vector<double> fterm(static_cast<std::size_t>(grid.n_cells()), 0.0);
  if (use_spline) {
    tracker.emplace(state, grid, fit.edge_rule);
    for (int c = 0; c < grid.n_cells(); ++c)
      fterm[static_cast<std::size_t>(c)] = fit.f_term(tracker->value(c));
  }

  // per-cell log-likelihood term: y log(lam) - lam - log y!, lam = |s| e^eta
  auto cell_term = [&](int c, long y, double f) {
    double log_lam = log_area + fit.baseline_eta[static_cast<std::size_t>(c)] + f;
    return static_cast<double>(y) * log_lam - std::exp(log_lam) - std::lgamma(static_cast<double>(y) + 1.0);
  };

  // paranoid reference: all per-cell inputs from scratch for a given state
  auto full_terms = [&](const PointPattern& s, const std::vector<long>& cnt,
                        std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(grid.n_cells()), 0.0);
    std::vector<double> z;
    if (use_spline) z = nearest_point_distance(s, grid, fit.edge_rule).values;
    for (int c = 0; c < grid.n_cells(); ++c)
      out[static_cast<std::size_t>(c)] =
          cell_term(c, cnt[static_cast<std::size_t>(c)], use_spline ? fit.f_term(z[static_cast<std::size_t>(c)]) : 0.0);
  };

  std::vector<double> cur_terms, prop_terms;
  for (long step = 0; step < n_iter; ++step) {
    int idx = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_points)));
    Point to{rng.uniform(win.x_min, win.x_max), rng.uniform(win.y_min, win.y_max)};
    int c_from = point_cell[static_cast<std::size_t>(idx)];
    int c_to = grid.cell_of(to);

    double log_ratio = 0.0;
    const std::vector<NearestDistanceTracker::CellDelta>* deltas = nullptr;
    if (opts.paranoid) {
      full_terms(state, counts, cur_terms);
      PointPattern prop = state;
      prop.points[static_cast<std::size_t>(idx)] = to;
      auto prop_counts = counts;
      if (c_from != c_to) {
        prop_counts[static_cast<std::size_t>(c_from)]--;
        prop_counts[static_cast<std::size_t>(c_to)]++;
      }
      full_terms(prop, prop_counts, prop_terms);
      for (int c = 0; c < grid.n_cells(); ++c)
        log_ratio += prop_terms[static_cast<std::size_t>(c)] - cur_terms[static_cast<std::size_t>(c)];
      if (use_spline) deltas = &tracker->propose(idx, to);  // keep state machinery in sync
    } else if (use_spline) {
      deltas = &tracker->propose(idx, to);
      for (const auto& d : *deltas) {
        int c = d.cell;
        long y_old = counts[static_cast<std::size_t>(c)];
        long y_new = y_old + (c == c_to ? 1 : 0) - (c == c_from ? 1 : 0);
        log_ratio += cell_term(c, y_new, fit.f_term(d.new_value)) -
                     cell_term(c, y_old, fterm[static_cast<std::size_t>(c)]);
      }
      if (c_from != c_to) {
        auto touched = [&](int c) {
          for (const auto& d : *deltas)
            if (d.cell == c) return true;
          return false;
        };
        if (!touched(c_from))
          log_ratio += cell_term(c_from, counts[static_cast<std::size_t>(c_from)] - 1, fterm[static_cast<std::size_t>(c_from)]) -
                       cell_term(c_from, counts[static_cast<std::size_t>(c_from)], fterm[static_cast<std::size_t>(c_from)]);
        if (!touched(c_to))
          log_ratio += cell_term(c_to, counts[static_cast<std::size_t>(c_to)] + 1, fterm[static_cast<std::size_t>(c_to)]) -
                       cell_term(c_to, counts[static_cast<std::size_t>(c_to)], fterm[static_cast<std::size_t>(c_to)]);
      }
    } else if (c_from != c_to) {
      log_ratio = cell_term(c_from, counts[static_cast<std::size_t>(c_from)] - 1, 0.0) -
                  cell_term(c_from, counts[static_cast<std::size_t>(c_from)], 0.0) +
                  cell_term(c_to, counts[static_cast<std::size_t>(c_to)] + 1, 0.0) -
                  cell_term(c_to, counts[static_cast<std::size_t>(c_to)], 0.0);
    }

    if (opts.log_ratio_sink) opts.log_ratio_sink->push_back(log_ratio);

    bool accept = log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio);
    if (accept) {
      state.points[static_cast<std::size_t>(idx)] = to;
      point_cell[static_cast<std::size_t>(idx)] = c_to;
      if (c_from != c_to) {
        counts[static_cast<std::size_t>(c_from)]--;
        counts[static_cast<std::size_t>(c_to)]++;
      }
      if (use_spline) {
        tracker->commit();
        if (deltas)
          for (const auto& d : *deltas) fterm[static_cast<std::size_t>(d.cell)] = fit.f_term(d.new_value);
      }
    }
  }
  return state;
}

}  // namespace lgcp
