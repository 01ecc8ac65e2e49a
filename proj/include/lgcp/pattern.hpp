// pattern.hpp -- planar point patterns, observation windows, grid discretization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lgcp/common.hpp"

namespace lgcp {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Rectangular observation window; irregular regions are represented by an
// optional cell mask (1 = inside) aligned with a grid of mask_rows x mask_cols.
struct Window {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  std::vector<std::uint8_t> cell_mask;  // row-major, empty = no mask
  int mask_rows = 0, mask_cols = 0;

  Window() = default;
  Window(double x0, double x1, double y0, double y1)
      : x_min(x0), x_max(x1), y_min(y0), y_max(y1) {
    if (!(x_min < x_max) || !(y_min < y_max))
      throw ParameterError("window: require x_min < x_max and y_min < y_max");
  }

  static Window unit_square() { return Window(0.0, 1.0, 0.0, 1.0); }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool has_mask() const { return !cell_mask.empty(); }

  bool contains(const Point& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }

  bool same_extent(const Window& o, double tol = 0.0) const {
    return std::abs(x_min - o.x_min) <= tol && std::abs(x_max - o.x_max) <= tol &&
           std::abs(y_min - o.y_min) <= tol && std::abs(y_max - o.y_max) <= tol;
  }
};

// Regular n_row x n_col lattice over a window. Rows index from y_min, columns
// from x_min; all modules share this row-major layout.
struct GridSpec {
  int n_row = 1;
  int n_col = 1;
  Window window;

  GridSpec() = default;
  GridSpec(int rows, int cols, Window win) : n_row(rows), n_col(cols), window(std::move(win)) {
    if (n_row < 1 || n_col < 1) throw DimensionError("grid: need at least one row and column");
    if (window.has_mask() && (window.mask_rows != n_row || window.mask_cols != n_col))
      throw DimensionError("grid: window mask dimensions do not match grid");
  }

  int n_cells() const { return n_row * n_col; }
  double cell_width() const { return window.width() / n_col; }
  double cell_height() const { return window.height() / n_row; }
  double cell_area() const { return cell_width() * cell_height(); }

  int cell_index(int i, int j) const { return i * n_col + j; }

  bool cell_in_mask(int idx) const {
    return !window.has_mask() || window.cell_mask[static_cast<std::size_t>(idx)] != 0;
  }

  // Cell of a point; interior boundaries belong to the larger-index cell,
  // the global right/top edge to the last cell.
  int row_of(double y) const {
    double t = (y - window.y_min) / window.height();
    return std::clamp(static_cast<int>(std::floor(t * n_row)), 0, n_row - 1);
  }
  int col_of(double x) const {
    double t = (x - window.x_min) / window.width();
    return std::clamp(static_cast<int>(std::floor(t * n_col)), 0, n_col - 1);
  }
  int cell_of(const Point& p) const { return cell_index(row_of(p.y), col_of(p.x)); }
};

// Geometric center of cell s_ij.
inline Point cell_center(const GridSpec& grid, int i, int j) {
  if (i < 0 || i >= grid.n_row || j < 0 || j >= grid.n_col)
    throw IndexError("cell_center: index out of range");
  return Point{grid.window.x_min + (j + 0.5) * grid.cell_width(),
               grid.window.y_min + (i + 0.5) * grid.cell_height()};
}

inline Point cell_center(const GridSpec& grid, int idx) {
  return cell_center(grid, idx / grid.n_col, idx % grid.n_col);
}

// Ordered points with optional named marks (one value per point).
struct PointPattern {
  std::vector<Point> points;
  Window window;
  std::map<std::string, std::vector<double>> marks;

  PointPattern() = default;
  explicit PointPattern(Window win) : window(std::move(win)) {}
  PointPattern(std::vector<Point> pts, Window win)
      : points(std::move(pts)), window(std::move(win)) {
    validate();
  }

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    for (const auto& p : points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ParameterError("pattern: non-finite coordinate");
      if (!window.contains(p)) throw ParameterError("pattern: point outside window");
    }
    for (const auto& [name, col] : marks)
      if (col.size() != points.size())
        throw DimensionError("pattern: mark column '" + name + "' length mismatch");
  }
};

// Per-cell event counts from discretizing a pattern.
struct CountGrid {
  std::vector<long> counts;  // row-major
  GridSpec grid;

  long total() const {
    long s = 0;
    for (std::size_t idx = 0; idx < counts.size(); ++idx)
      if (grid.cell_in_mask(static_cast<int>(idx))) s += counts[idx];
    return s;
  }
};

inline CountGrid grid_counts(const PointPattern& pattern, const GridSpec& grid) {
  if (!pattern.window.same_extent(grid.window))
    throw DimensionError("grid_counts: pattern window differs from grid window");
  CountGrid out;
  out.grid = grid;
  out.counts.assign(static_cast<std::size_t>(grid.n_cells()), 0);
  for (const auto& p : pattern.points) out.counts[static_cast<std::size_t>(grid.cell_of(p))]++;
  return out;
}

}  // namespace lgcp
