// summaries.hpp -- Ripley K / Besag L summary functions with isotropic edge
// correction on rectangular windows, the inhomogeneous variant, and
// simulation envelopes.
#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <vector>

#include "lgcp/common.hpp"
#include "lgcp/pattern.hpp"

namespace lgcp {

enum class SummaryKind { K, L, L_inhom };

struct SummaryFunction {
  std::vector<double> r;
  std::vector<double> value;
  SummaryKind kind = SummaryKind::K;
};

struct EnvelopeBand {
  std::vector<double> r;
  std::vector<double> lower, upper, mean;
  int n_sim = 0;
};

// Reciprocal of the fraction of the circle (center p, radius d) inside the
// rectangle. Valid for d below half the shorter window side, which the
// r_max <= min(side)/4 precondition guarantees.
inline double ripley_isotropic_weight(const Window& w, const Point& p, double d) {
  if (d <= 0.0) return 1.0;
  const double dist[4] = {p.x - w.x_min, w.x_max - p.x, p.y - w.y_min, w.y_max - p.y};
  double exterior = 0.0;
  for (double e : dist)
    if (e < d) exterior += 2.0 * std::acos(e / d);
  // corner overlap: pairs of one horizontal and one vertical edge
  for (int a = 0; a < 2; ++a)
    for (int b = 2; b < 4; ++b)
      if (dist[a] * dist[a] + dist[b] * dist[b] < d * d)
        exterior -= std::acos(dist[a] / d) + std::acos(dist[b] / d) - M_PI / 2.0;
  double fraction = 1.0 - exterior / (2.0 * M_PI);
  return 1.0 / fraction;
}

namespace detail {

inline std::vector<double> r_grid(double r_max, int n_r) {
  require(n_r >= 2, "summary: need at least 2 r values");
  require(r_max > 0.0, "summary: r_max must be positive");
  std::vector<double> r(static_cast<std::size_t>(n_r));
  for (int k = 0; k < n_r; ++k) r[static_cast<std::size_t>(k)] = r_max * k / (n_r - 1);
  return r;
}

inline void check_r_max(const PointPattern& pattern, double r_max) {
  double min_side = std::min(pattern.window.width(), pattern.window.height());
  require(r_max <= 0.25 * min_side + 1e-12, "summary: r_max must be <= min window side / 4");
}

// accumulate weighted pair counts into cumulative bins over the r grid
template <typename PairWeight>
std::vector<double> pair_histogram(const PointPattern& pattern, double r_max, int n_r,
                                   PairWeight&& weight) {
  std::vector<double> acc(static_cast<std::size_t>(n_r), 0.0);
  const double step = r_max / (n_r - 1);
  const auto& pts = pattern.points;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      double d = distance(pts[i], pts[j]);
      if (d > r_max) continue;
      int k = static_cast<int>(std::ceil(d / step - 1e-12));
      if (k >= n_r) continue;
      acc[static_cast<std::size_t>(k)] += weight(i, j, d);
    }
  for (int k = 1; k < n_r; ++k) acc[static_cast<std::size_t>(k)] += acc[static_cast<std::size_t>(k - 1)];
  return acc;
}

}  // namespace detail

inline SummaryFunction k_function(const PointPattern& pattern, double r_max, int n_r = 512) {
  if (pattern.size() < 2) throw InsufficientDataError("k_function: need at least 2 points");
  detail::check_r_max(pattern, r_max);
  const double n = static_cast<double>(pattern.size());
  auto acc = detail::pair_histogram(pattern, r_max, n_r, [&](std::size_t i, std::size_t, double d) {
    return ripley_isotropic_weight(pattern.window, pattern.points[i], d);
  });
  SummaryFunction out;
  out.kind = SummaryKind::K;
  out.r = detail::r_grid(r_max, n_r);
  out.value.resize(acc.size());
  const double scale = pattern.window.area() / (n * (n - 1.0));
  for (std::size_t k = 0; k < acc.size(); ++k) out.value[k] = scale * acc[k];
  return out;
}

inline SummaryFunction l_function(const PointPattern& pattern, double r_max, int n_r = 512) {
  SummaryFunction out = k_function(pattern, r_max, n_r);
  out.kind = SummaryKind::L;
  for (auto& v : out.value) v = std::sqrt(v / M_PI);
  return out;
}

// Inhomogeneous K/L (second-order reweighted): pair terms carry
// 1/(lambda_i lambda_j), normalized by |W|; lambda read from the cell
// containing each point.
inline SummaryFunction l_inhom(const PointPattern& pattern, const std::vector<double>& intensity,
                               const GridSpec& grid, double r_max, int n_r = 512) {
  if (pattern.size() < 2) throw InsufficientDataError("l_inhom: need at least 2 points");
  detail::check_r_max(pattern, r_max);
  require(static_cast<int>(intensity.size()) == grid.n_cells(), "l_inhom: intensity size mismatch");
  std::vector<double> lam(pattern.size());
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    lam[i] = intensity[static_cast<std::size_t>(grid.cell_of(pattern.points[i]))];
    if (!(lam[i] > 0.0))
      throw ParameterError("l_inhom: nonpositive intensity at an occupied cell");
  }
  auto acc = detail::pair_histogram(pattern, r_max, n_r, [&](std::size_t i, std::size_t j, double d) {
    return ripley_isotropic_weight(pattern.window, pattern.points[i], d) / (lam[i] * lam[j]);
  });
  SummaryFunction out;
  out.kind = SummaryKind::L_inhom;
  out.r = detail::r_grid(r_max, n_r);
  out.value.resize(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k)
    out.value[k] = std::sqrt(acc[k] / pattern.window.area() / M_PI);
  return out;
}

// Pointwise min/max/mean of a statistic over n_sim replicate patterns.
// statistic(replicate_index) must return curves on a common r grid.
inline EnvelopeBand envelopes(const std::function<SummaryFunction(int)>& statistic, int n_sim,
                              int n_threads = 1) {
  require(n_sim >= 2, "envelopes: need n_sim >= 2");
  std::vector<SummaryFunction> sims(static_cast<std::size_t>(n_sim));
  std::vector<std::string> errors(static_cast<std::size_t>(n_sim));
  parallel_for(static_cast<std::size_t>(n_sim), n_threads, [&](std::size_t k) {
    try {
      sims[k] = statistic(static_cast<int>(k));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < sims.size(); ++k)
    if (!errors[k].empty())
      throw Error("envelopes: replicate " + std::to_string(k) + " failed: " + errors[k]);
  EnvelopeBand band;
  band.n_sim = n_sim;
  band.r = sims[0].r;
  const std::size_t m = band.r.size();
  band.lower.assign(m, std::numeric_limits<double>::infinity());
  band.upper.assign(m, -std::numeric_limits<double>::infinity());
  band.mean.assign(m, 0.0);
  for (const auto& s : sims) {
    require(s.r.size() == m, "envelopes: inconsistent r grids across replicates");
    for (std::size_t k = 0; k < m; ++k) {
      band.lower[k] = std::min(band.lower[k], s.value[k]);
      band.upper[k] = std::max(band.upper[k], s.value[k]);
      band.mean[k] += s.value[k] / n_sim;
    }
  }
  return band;
}

inline void write_summary_csv(const SummaryFunction& s, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << "r,value\n";
  char buf[80];
  for (std::size_t k = 0; k < s.r.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", s.r[k], s.value[k]);
    out << buf;
  }
}

inline void write_envelope_csv(const EnvelopeBand& b, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << "r,lower,mean,upper\n";
  char buf[140];
  for (std::size_t k = 0; k < b.r.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", b.r[k], b.lower[k], b.mean[k],
                  b.upper[k]);
    out << buf;
  }
}

}  // namespace lgcp
