// simulate.hpp -- pattern generators: Poisson (homogeneous/inhomogeneous),
// Strauss via birth-death-move Metropolis-Hastings, Thomas clusters,
// and superposition.
#pragma once

#include <cmath>
#include <vector>

#include "lgcp/buckets.hpp"
#include "lgcp/pattern.hpp"
#include "lgcp/rng.hpp"

namespace lgcp {

struct StraussParams {
  double beta;   // intensity parameter
  double gamma;  // interaction parameter in [0, 1]
  double r;      // interaction radius

  StraussParams(double b, double g, double radius) : beta(b), gamma(g), r(radius) {
    if (!(beta > 0.0)) throw ParameterError("strauss: beta > 0");
    if (gamma < 0.0 || gamma > 1.0)
      throw ParameterError("strauss: gamma must lie in [0, 1]");
    if (!(r > 0.0)) throw ParameterError("strauss: r > 0");
  }
};

// Intensity surface: a linear trend a*x + b or a per-cell grid.
struct TrendFn {
  enum class Kind { linear, grid } kind = Kind::linear;
  double a = 0.0, b = 0.0;
  std::vector<double> cell_values;
  GridSpec grid;

  static TrendFn constant(double level) { return linear(0.0, level); }
  static TrendFn linear(double slope_x, double intercept) {
    TrendFn t;
    t.kind = Kind::linear;
    t.a = slope_x;
    t.b = intercept;
    return t;
  }
  static TrendFn from_grid(std::vector<double> values, GridSpec g) {
    TrendFn t;
    t.kind = Kind::grid;
    t.cell_values = std::move(values);
    t.grid = std::move(g);
    require(t.cell_values.size() == static_cast<std::size_t>(t.grid.n_cells()),
            "trend grid size mismatch");
    return t;
  }

  // Evaluation outside the window clamps coordinates in (negative linear
  // trends clamp to zero): intensities are never negative.
  double eval(const Point& p) const {
    if (kind == Kind::linear) return std::max(0.0, a * p.x + b);
    Point q{std::clamp(p.x, grid.window.x_min, grid.window.x_max),
            std::clamp(p.y, grid.window.y_min, grid.window.y_max)};
    return cell_values[static_cast<std::size_t>(grid.cell_of(q))];
  }

  double supremum(const Window& w) const {
    if (kind == Kind::linear)
      return std::max(0.0, std::max(a * w.x_min + b, a * w.x_max + b));
    double m = 0.0;
    for (double v : cell_values) m = std::max(m, v);
    return m;
  }

  void check_nonnegative(const Window& w) const {
    if (kind == Kind::linear) {
      if (a * w.x_min + b < 0.0 || a * w.x_max + b < 0.0)
        throw ParameterError("poisson trend: negative intensity inside window");
    } else {
      for (double v : cell_values)
        if (v < 0.0) throw ParameterError("poisson trend: negative cell intensity");
    }
  }
};

struct ThomasParams {
  TrendFn kappa = TrendFn::constant(1.0);  // parent intensity
  double sigma;                            // offspring displacement sd
  double mu;                               // expected offspring per cluster

  ThomasParams(double kappa_const, double s, double m)
      : kappa(TrendFn::constant(kappa_const)), sigma(s), mu(m) {
    check();
  }
  ThomasParams(TrendFn kappa_fn, double s, double m)
      : kappa(std::move(kappa_fn)), sigma(s), mu(m) {
    check();
  }
  void check() const {
    if (!(sigma > 0.0)) throw ParameterError("thomas: sigma > 0");
    if (!(mu > 0.0)) throw ParameterError("thomas: mu > 0");
  }
};

inline PointPattern sim_poisson(const TrendFn& intensity, const Window& window,
                                std::uint64_t seed) {
  intensity.check_nonnegative(window);
  Rng rng(seed);
  PointPattern pat(window);
  double sup = intensity.supremum(window);
  if (sup <= 0.0) return pat;
  long n = rng.poisson(sup * window.area());
  pat.points.reserve(static_cast<std::size_t>(n));
  bool homogeneous =
      intensity.kind == TrendFn::Kind::linear && intensity.a == 0.0 && intensity.b >= 0.0;
  for (long k = 0; k < n; ++k) {
    Point p{rng.uniform(window.x_min, window.x_max), rng.uniform(window.y_min, window.y_max)};
    if (homogeneous || rng.uniform() * sup < intensity.eval(p)) pat.points.push_back(p);
  }
  return pat;
}

inline PointPattern sim_poisson(double intensity, const Window& window, std::uint64_t seed) {
  if (intensity < 0.0) throw ParameterError("sim_poisson: negative intensity");
  return sim_poisson(TrendFn::constant(intensity), window, seed);
}

// Thomas cluster process: Poisson parents on the window dilated by 4*sigma
// (edge compensation), Poisson(mu) offspring per parent with isotropic
// Gaussian(sigma) displacement, offspring outside the window discarded.
inline PointPattern sim_thomas(const ThomasParams& params, const Window& window,
                               std::uint64_t seed) {
  params.check();
  Rng rng(seed);
  double m = 4.0 * params.sigma;
  Window dilated(window.x_min - m, window.x_max + m, window.y_min - m, window.y_max + m);
  double sup = params.kappa.supremum(dilated);
  PointPattern pat(window);
  if (sup <= 0.0) return pat;
  long n_prop = rng.poisson(sup * dilated.area());
  for (long k = 0; k < n_prop; ++k) {
    Point parent{rng.uniform(dilated.x_min, dilated.x_max),
                 rng.uniform(dilated.y_min, dilated.y_max)};
    if (rng.uniform() * sup >= params.kappa.eval(parent)) continue;
    long n_off = rng.poisson(params.mu);
    for (long j = 0; j < n_off; ++j) {
      Point off{parent.x + params.sigma * rng.normal(), parent.y + params.sigma * rng.normal()};
      if (window.contains(off)) pat.points.push_back(off);
    }
  }
  return pat;
}

namespace detail {

inline double gamma_power(double gamma, long k) {
  if (k == 0) return 1.0;
  if (gamma == 0.0) return k > 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::pow(gamma, static_cast<double>(k));
}

}  // namespace detail

// Strauss process by birth-death-move Metropolis-Hastings on the density
// beta^n gamma^{s(x)}. Step mix 0.35 / 0.35 / 0.30; the chain starts empty
// and runs n_sweeps * max(1, beta*|W|) steps.
inline PointPattern sim_strauss(const StraussParams& params, const Window& window,
                                std::uint64_t seed, int n_sweeps = 100) {
  Rng rng(seed);
  const double bw = params.beta * window.area();
  const long steps = static_cast<long>(n_sweeps * std::max(1.0, bw));

  std::vector<Point> pts;
  PointBuckets buckets(window, static_cast<std::size_t>(std::max(1.0, bw)), params.r);
  auto close_neighbors = [&](const Point& q, int skip_idx) {
    long t = 0;
    buckets.for_neighbors(q, params.r, [&](int idx, double d) {
      if (idx != skip_idx && d <= params.r) ++t;
    });
    return t;
  };

  for (long step = 0; step < steps; ++step) {
    double u = rng.uniform();
    long n = static_cast<long>(pts.size());
    if (u < 0.35) {
      // birth
      Point q{rng.uniform(window.x_min, window.x_max), rng.uniform(window.y_min, window.y_max)};
      long t = close_neighbors(q, -1);
      double alpha = bw * detail::gamma_power(params.gamma, t) / static_cast<double>(n + 1);
      if (rng.uniform() < alpha) {
        buckets.insert(static_cast<int>(n), q);
        pts.push_back(q);
      }
    } else if (u < 0.70) {
      // death
      if (n == 0) continue;
      int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      long t = close_neighbors(pts[static_cast<std::size_t>(i)], i);
      double alpha = static_cast<double>(n) / (bw * detail::gamma_power(params.gamma, t));
      if (rng.uniform() < alpha) {
        int last = static_cast<int>(n) - 1;
        buckets.erase(i);
        if (i != last) {
          buckets.erase(last);
          pts[static_cast<std::size_t>(i)] = pts[static_cast<std::size_t>(last)];
          buckets.insert(i, pts[static_cast<std::size_t>(i)]);
        }
        pts.pop_back();
      }
    } else {
      // move
      if (n == 0) continue;
      int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      Point q{rng.uniform(window.x_min, window.x_max), rng.uniform(window.y_min, window.y_max)};
      long t_old = close_neighbors(pts[static_cast<std::size_t>(i)], i);
      long t_new = close_neighbors(q, i);
      double alpha = detail::gamma_power(params.gamma, t_new - t_old);
      if (params.gamma == 0.0) alpha = (t_new == 0) ? 1.0 : 0.0;
      if (rng.uniform() < alpha) {
        buckets.move(i, q);
        pts[static_cast<std::size_t>(i)] = q;
      }
    }
  }
  return PointPattern(std::move(pts), window);
}

// Number of point pairs at distance <= r (the Strauss sufficient statistic).
inline long close_pair_count(const PointPattern& pattern, double r) {
  long s = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i)
    for (std::size_t j = i + 1; j < pattern.size(); ++j)
      if (distance(pattern.points[i], pattern.points[j]) <= r) ++s;
  return s;
}

inline PointPattern superimpose(const PointPattern& a, const PointPattern& b) {
  if (!a.window.same_extent(b.window)) throw DimensionError("superimpose: window mismatch");
  if (a.marks.empty() != b.marks.empty())
    throw DimensionError("superimpose: mark columns must match");
  PointPattern out(a.window);
  out.points = a.points;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  for (const auto& [name, col] : a.marks) {
    auto it = b.marks.find(name);
    if (it == b.marks.end()) throw DimensionError("superimpose: mark columns must match");
    auto merged = col;
    merged.insert(merged.end(), it->second.begin(), it->second.end());
    out.marks[name] = std::move(merged);
  }
  return out;
}

}  // namespace lgcp
