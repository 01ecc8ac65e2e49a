// covariate.hpp -- constructed covariates (nearest-point distance per grid
// cell), empirical covariate fields with missing values, and binning.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lgcp/buckets.hpp"
#include "lgcp/pattern.hpp"

namespace lgcp {

enum class EdgeRule { none, censor };

// Empirical per-cell covariate; cells without a measurement hold NaN.
struct CovariateField {
  std::vector<double> values;
  GridSpec grid;
  std::string name;
};

// Distance from each cell center to the nearest pattern point outside that
// cell. Missing where censored (edge rule) or where no outside point exists.
struct ConstructedCovariate {
  std::vector<double> values;
  GridSpec grid;
  EdgeRule edge_rule = EdgeRule::none;
  bool empty_pattern_warning = false;
};

// Discretized covariate argument: per-cell bin index (-1 = missing) over an
// equal-width bin grid spanning the observed values.
struct BinnedCovariate {
  std::vector<int> bin_index;
  std::vector<double> bin_midpoints;
  int n_bins = 0;
};

inline double boundary_distance(const Window& w, const Point& p) {
  return std::min(std::min(p.x - w.x_min, w.x_max - p.x),
                  std::min(p.y - w.y_min, w.y_max - p.y));
}

inline double apply_edge_rule(double raw, double bdist, EdgeRule rule) {
  if (std::isinf(raw)) return missing_value();
  if (rule == EdgeRule::censor && bdist < raw) return missing_value();
  return raw;
}

namespace detail {

// Raw (uncensored) nearest-outside-point distance for one cell; +inf when the
// whole pattern sits inside the cell.
inline double raw_cell_distance(const PointBuckets& buckets, const GridSpec& grid,
                                const std::vector<int>& point_cell, int cell_idx) {
  Point ctr = cell_center(grid, cell_idx);
  auto [d, idx] = buckets.nearest(
      ctr, [&](int q) { return point_cell[static_cast<std::size_t>(q)] == cell_idx; });
  return idx < 0 ? std::numeric_limits<double>::infinity() : d;
}

}  // namespace detail

inline ConstructedCovariate nearest_point_distance(const PointPattern& pattern,
                                                   const GridSpec& grid,
                                                   EdgeRule rule = EdgeRule::none) {
  if (!pattern.window.same_extent(grid.window))
    throw DimensionError("nearest_point_distance: pattern window differs from grid window");
  ConstructedCovariate out;
  out.grid = grid;
  out.edge_rule = rule;
  out.values.assign(static_cast<std::size_t>(grid.n_cells()), missing_value());
  if (pattern.empty()) {
    out.empty_pattern_warning = true;
    return out;
  }
  PointBuckets buckets(grid.window, pattern.size());
  std::vector<int> point_cell(pattern.size());
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    buckets.insert(static_cast<int>(k), pattern.points[k]);
    point_cell[k] = grid.cell_of(pattern.points[k]);
  }
  for (int c = 0; c < grid.n_cells(); ++c) {
    double raw = detail::raw_cell_distance(buckets, grid, point_cell, c);
    out.values[static_cast<std::size_t>(c)] =
        apply_edge_rule(raw, boundary_distance(grid.window, cell_center(grid, c)), rule);
  }
  return out;
}

// Incremental counterpart of nearest_point_distance after one point moved from
// `from` to `to`; `pattern` is the post-move state. Produces values bitwise
// equal to a full recomputation.
inline ConstructedCovariate update_distance_after_move(const ConstructedCovariate& cov,
                                                       const PointPattern& pattern,
                                                       const Point& from, const Point& to) {
  const GridSpec& grid = cov.grid;
  if (!pattern.window.same_extent(grid.window))
    throw DimensionError("update_distance_after_move: window mismatch");
  if (pattern.empty()) {
    ConstructedCovariate out = cov;
    out.values.assign(cov.values.size(), missing_value());
    out.empty_pattern_warning = true;
    return out;
  }

  PointBuckets buckets(grid.window, pattern.size());
  std::vector<int> point_cell(pattern.size());
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    buckets.insert(static_cast<int>(k), pattern.points[k]);
    point_cell[k] = grid.cell_of(pattern.points[k]);
  }

  ConstructedCovariate out = cov;
  out.empty_pattern_warning = false;
  const int cf = grid.cell_of(from);
  const int ct = grid.cell_of(to);

  for (int c = 0; c < grid.n_cells(); ++c) {
    Point ctr = cell_center(grid, c);
    double bdist = boundary_distance(grid.window, ctr);
    double v = cov.values[static_cast<std::size_t>(c)];
    bool visible = !is_missing(v);

    auto rescan = [&]() {
      double raw = detail::raw_cell_distance(buckets, grid, point_cell, c);
      out.values[static_cast<std::size_t>(c)] = apply_edge_rule(raw, bdist, cov.edge_rule);
    };

    if (c == ct) {
      // The point is no longer a candidate here. Only a visible value it
      // achieved can go stale; a censored cell can only get farther.
      if (cf != ct && visible && v == distance(ctr, from)) rescan();
      continue;
    }

    double d_new = distance(ctr, to);
    bool was_candidate = (cf != c);
    if (was_candidate && visible && v == distance(ctr, from)) {
      if (d_new <= v)
        out.values[static_cast<std::size_t>(c)] = d_new;
      else
        rescan();
      continue;
    }
    // Not previously the achiever (or newly a candidate): the minimum can
    // only improve via the new location.
    if (visible) {
      if (d_new < v) out.values[static_cast<std::size_t>(c)] = d_new;
    } else {
      // Missing = censored or no outside point; either way a close-enough
      // new location produces a visible value.
      if (cov.edge_rule == EdgeRule::censor ? !(bdist < d_new) : std::isfinite(d_new)) rescan();
    }
  }
  return out;
}

// Equal-width binning over the non-missing values; the max maps to the last bin.
inline BinnedCovariate bin_covariate(const std::vector<double>& values, int n_bins) {
  if (n_bins < 2) throw ParameterError("bin_covariate: need n_bins >= 2");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int n_obs = 0;
  for (double v : values)
    if (!is_missing(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n_obs;
    }
  if (n_obs < 2 || !(hi > lo))
    throw ParameterError("bin_covariate: degenerate covariate (needs >= 2 distinct values)");
  double width = (hi - lo) / n_bins;
  BinnedCovariate out;
  out.n_bins = n_bins;
  out.bin_midpoints.resize(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) out.bin_midpoints[static_cast<std::size_t>(k)] = lo + (k + 0.5) * width;
  out.bin_index.assign(values.size(), -1);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!is_missing(values[i]))
      out.bin_index[i] =
          std::min(n_bins - 1, static_cast<int>(std::floor((values[i] - lo) / width)));
  return out;
}

inline BinnedCovariate bin_covariate(const ConstructedCovariate& cov, int n_bins) {
  return bin_covariate(cov.values, n_bins);
}
inline BinnedCovariate bin_covariate(const CovariateField& field, int n_bins) {
  return bin_covariate(field.values, n_bins);
}

// --------------------------------------------------------------------------
// NearestDistanceTracker: the performance path for the fixed-n resampler.
// Maintains raw distances and achieving point per cell; propose() computes
// the cells a move would change without mutating, commit() applies it.
// --------------------------------------------------------------------------
class NearestDistanceTracker {
 public:
  struct CellDelta {
    int cell;
    double new_value;  // post-edge-rule value (NaN = missing)
  };

  NearestDistanceTracker(const PointPattern& pattern, const GridSpec& grid,
                         EdgeRule rule = EdgeRule::none)
      : grid_(grid), rule_(rule), buckets_(grid.window, pattern.size()) {
    require(!pattern.empty(), "tracker: pattern must be nonempty");
    points_ = pattern.points;
    point_cell_.resize(points_.size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
      buckets_.insert(static_cast<int>(k), points_[k]);
      point_cell_[k] = grid_.cell_of(points_[k]);
    }
    int n = grid_.n_cells();
    raw_.assign(static_cast<std::size_t>(n), 0.0);
    achiever_.assign(static_cast<std::size_t>(n), -1);
    bdist_.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
      Point ctr = cell_center(grid_, c);
      bdist_[static_cast<std::size_t>(c)] = boundary_distance(grid_.window, ctr);
      auto [d, idx] = buckets_.nearest(
          ctr, [&](int q) { return point_cell_[static_cast<std::size_t>(q)] == c; });
      raw_[static_cast<std::size_t>(c)] = idx < 0 ? std::numeric_limits<double>::infinity() : d;
      achiever_[static_cast<std::size_t>(c)] = idx;
      if (idx < 0) infinite_cells_.push_back(c);
    }
    refresh_bound();
  }

  const std::vector<Point>& points() const { return points_; }
  int cell_of_point(int idx) const { return point_cell_[static_cast<std::size_t>(idx)]; }

  double value(int cell) const {
    return apply_edge_rule(raw_[static_cast<std::size_t>(cell)],
                           bdist_[static_cast<std::size_t>(cell)], rule_);
  }

  ConstructedCovariate covariate() const {
    ConstructedCovariate out;
    out.grid = grid_;
    out.edge_rule = rule_;
    out.values.resize(raw_.size());
    for (int c = 0; c < grid_.n_cells(); ++c) out.values[static_cast<std::size_t>(c)] = value(c);
    return out;
  }

  // Cells whose covariate value changes if point idx moves to `to`.
  // Pending state is kept until commit() or the next propose().
  const std::vector<CellDelta>& propose(int idx, const Point& to) {
    pending_.clear();
    pending_raw_.clear();
    pending_achiever_.clear();
    pending_idx_ = idx;
    pending_to_ = to;
    const Point a = points_[static_cast<std::size_t>(idx)];
    const int ca = point_cell_[static_cast<std::size_t>(idx)];
    const int cb = grid_.cell_of(to);

    // Cells whose stored minimum the moving point achieves: re-derive them.
    for_cells_near(a, [&](int c) {
      if (achiever_[static_cast<std::size_t>(c)] != idx) return;
      Point ctr = cell_center(grid_, c);
      auto [d, q] = buckets_.nearest(ctr, [&](int p) {
        return p == idx || point_cell_[static_cast<std::size_t>(p)] == c;
      });
      double nd = q < 0 ? std::numeric_limits<double>::infinity() : d;
      int na = q;
      if (c != cb) {
        double dn = distance(ctr, to);
        if (dn < nd) {
          nd = dn;
          na = idx;
        }
      }
      push_pending(c, nd, na);
    });
    // Cells the new location now serves better.
    for_cells_near(to, [&](int c) {
      if (c == cb || achiever_[static_cast<std::size_t>(c)] == idx) return;
      double dn = distance(cell_center(grid_, c), to);
      if (dn < raw_[static_cast<std::size_t>(c)]) push_pending(c, dn, idx);
    });
    // Cells with no outside point are not covered by the distance bound.
    for (int c : infinite_cells_) {
      if (c == cb || achiever_[static_cast<std::size_t>(c)] == idx) continue;
      double dn = distance(cell_center(grid_, c), to);
      if (dn < raw_[static_cast<std::size_t>(c)]) push_pending(c, dn, idx);
    }
    return pending_;
  }

  void commit() {
    int idx = pending_idx_;
    for (std::size_t k = 0; k < pending_.size(); ++k) {
      int c = pending_[k].cell;
      bool was_inf = std::isinf(raw_[static_cast<std::size_t>(c)]);
      raw_[static_cast<std::size_t>(c)] = pending_raw_[k];
      achiever_[static_cast<std::size_t>(c)] = pending_achiever_[k];
      if (std::isfinite(pending_raw_[k])) {
        bound_ = std::max(bound_, pending_raw_[k]);
        if (was_inf)
          infinite_cells_.erase(std::find(infinite_cells_.begin(), infinite_cells_.end(), c));
      } else if (!was_inf) {
        infinite_cells_.push_back(c);
      }
    }
    buckets_.move(idx, pending_to_);
    points_[static_cast<std::size_t>(idx)] = pending_to_;
    point_cell_[static_cast<std::size_t>(idx)] = grid_.cell_of(pending_to_);
    if (++commits_since_refresh_ >= 4096) refresh_bound();
  }

 private:
  void push_pending(int c, double new_raw, int new_achiever) {
    pending_.push_back(
        {c, apply_edge_rule(new_raw, bdist_[static_cast<std::size_t>(c)], rule_)});
    pending_raw_.push_back(new_raw);
    pending_achiever_.push_back(new_achiever);
  }

  // Visit cells whose center lies within the current distance bound of p.
  template <typename Fn>
  void for_cells_near(const Point& p, Fn&& fn) const {
    double m = bound_ + 1e-12;
    int r0 = grid_.row_of(std::max(p.y - m, grid_.window.y_min));
    int r1 = grid_.row_of(std::min(p.y + m, grid_.window.y_max));
    int c0 = grid_.col_of(std::max(p.x - m, grid_.window.x_min));
    int c1 = grid_.col_of(std::min(p.x + m, grid_.window.x_max));
    for (int i = r0; i <= r1; ++i)
      for (int j = c0; j <= c1; ++j) fn(grid_.cell_index(i, j));
  }

  void refresh_bound() {
    bound_ = 0.0;
    for (double r : raw_)
      if (std::isfinite(r)) bound_ = std::max(bound_, r);
    commits_since_refresh_ = 0;
  }

  GridSpec grid_;
  EdgeRule rule_;
  PointBuckets buckets_;
  std::vector<Point> points_;
  std::vector<int> point_cell_;
  std::vector<double> raw_;
  std::vector<int> achiever_;
  std::vector<double> bdist_;
  std::vector<int> infinite_cells_;
  double bound_ = 0.0;
  int commits_since_refresh_ = 0;

  std::vector<CellDelta> pending_;
  std::vector<double> pending_raw_;
  std::vector<int> pending_achiever_;
  int pending_idx_ = -1;
  Point pending_to_;
};

}  // namespace lgcp
