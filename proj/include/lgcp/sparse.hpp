// sparse.hpp -- symmetric sparse matrices in upper-triplet form.
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "lgcp/common.hpp"

namespace lgcp {

// Symmetric matrix stored as (row, col, value) with row <= col; the lower
// triangle is implicit. Entries are unique and sorted by (row, col).
struct SparseSymMatrix {
  int dim = 0;
  struct Entry {
    int row, col;
    double value;
  };
  std::vector<Entry> entries;

  static SparseSymMatrix identity(int n) {
    SparseSymMatrix m;
    m.dim = n;
    m.entries.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m.entries.push_back({i, i, 1.0});
    return m;
  }

  // q(v) = v' M v using the implicit symmetry.
  double quadratic_form(const std::vector<double>& v) const {
    require(static_cast<int>(v.size()) == dim, "quadratic_form: dimension mismatch");
    double q = 0.0;
    for (const auto& e : entries) {
      double t = e.value * v[static_cast<std::size_t>(e.row)] * v[static_cast<std::size_t>(e.col)];
      q += (e.row == e.col) ? t : 2.0 * t;
    }
    return q;
  }

  // y += s * M v.
  void add_multiply(const std::vector<double>& v, double s, std::vector<double>& y) const {
    for (const auto& e : entries) {
      y[static_cast<std::size_t>(e.row)] += s * e.value * v[static_cast<std::size_t>(e.col)];
      if (e.row != e.col)
        y[static_cast<std::size_t>(e.col)] += s * e.value * v[static_cast<std::size_t>(e.row)];
    }
  }

  std::vector<double> dense() const {
    std::vector<double> d(static_cast<std::size_t>(dim) * dim, 0.0);
    for (const auto& e : entries) {
      d[static_cast<std::size_t>(e.row) * dim + e.col] = e.value;
      d[static_cast<std::size_t>(e.col) * dim + e.row] = e.value;
    }
    return d;
  }

  double at(int r, int c) const {
    if (r > c) std::swap(r, c);
    auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(r, c),
                               [](const Entry& e, const std::pair<int, int>& k) {
                                 return std::tie(e.row, e.col) < std::tie(k.first, k.second);
                               });
    return (it != entries.end() && it->row == r && it->col == c) ? it->value : 0.0;
  }

  void write_triplet_csv(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open " + path + " for writing");
    out << "row,col,value\n";
    char buf[64];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", e.row, e.col, e.value);
      out << buf;
    }
  }
};

// Accumulates duplicate (row, col) contributions, then emits sorted unique
// upper-triangle entries.
class SparseSymBuilder {
 public:
  explicit SparseSymBuilder(int dim) : dim_(dim) {}

  void add(int r, int c, double v) {
    if (r > c) std::swap(r, c);
    raw_.push_back({r, c, v});
  }

  SparseSymMatrix build() const {
    SparseSymMatrix m;
    m.dim = dim_;
    auto sorted = raw_;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    for (const auto& e : sorted) {
      if (!m.entries.empty() && m.entries.back().row == e.row && m.entries.back().col == e.col)
        m.entries.back().value += e.value;
      else
        m.entries.push_back(e);
    }
    std::erase_if(m.entries, [](const auto& e) { return e.value == 0.0; });
    return m;
  }

 private:
  int dim_;
  std::vector<SparseSymMatrix::Entry> raw_;
};

}  // namespace lgcp
