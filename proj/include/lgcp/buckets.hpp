// buckets.hpp -- uniform bucket grid over a window for neighbor queries on
// dynamic point sets (supports insert / erase / move).
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lgcp/pattern.hpp"

namespace lgcp {

class PointBuckets {
 public:
  PointBuckets() = default;

  // target_cell: preferred bucket edge length (e.g. an interaction radius);
  // pass <= 0 to size buckets from the expected point count.
  PointBuckets(const Window& window, std::size_t expected_points, double target_cell = 0.0)
      : win_(window) {
    double side = target_cell;
    if (side <= 0.0) {
      double per_dim = std::sqrt(static_cast<double>(std::max<std::size_t>(expected_points, 1)));
      side = std::max(win_.width(), win_.height()) / std::clamp(per_dim, 1.0, 512.0);
    }
    nbx_ = std::clamp(static_cast<int>(std::floor(win_.width() / side)), 1, 2048);
    nby_ = std::clamp(static_cast<int>(std::floor(win_.height() / side)), 1, 2048);
    bw_ = win_.width() / nbx_;
    bh_ = win_.height() / nby_;
    buckets_.assign(static_cast<std::size_t>(nbx_) * nby_, {});
  }

  void insert(int idx, const Point& p) {
    ensure_size(idx);
    int b = bucket_of(p);
    positions_[idx] = p;
    bucket_id_[idx] = b;
    buckets_[static_cast<std::size_t>(b)].push_back(idx);
  }

  void erase(int idx) {
    auto& v = buckets_[static_cast<std::size_t>(bucket_id_[idx])];
    v.erase(std::find(v.begin(), v.end(), idx));
    bucket_id_[idx] = -1;
  }

  void move(int idx, const Point& to) {
    erase(idx);
    insert(idx, to);
  }

  const Point& position(int idx) const { return positions_[static_cast<std::size_t>(idx)]; }

  // Nearest point to q, skipping indices where skip(idx) is true.
  // Returns {distance, index}; index = -1 when no admissible point exists.
  template <typename Skip>
  std::pair<double, int> nearest(const Point& q, Skip&& skip) const {
    int bx = std::clamp(static_cast<int>((q.x - win_.x_min) / bw_), 0, nbx_ - 1);
    int by = std::clamp(static_cast<int>((q.y - win_.y_min) / bh_), 0, nby_ - 1);
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    int max_ring = std::max(nbx_, nby_);
    double min_side = std::min(bw_, bh_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      if (ring >= 1 && (ring - 1) * min_side > best) break;
      scan_ring(bx, by, ring, [&](int idx) {
        if (skip(idx)) return;
        double d = distance(q, positions_[static_cast<std::size_t>(idx)]);
        if (d < best) {
          best = d;
          best_idx = idx;
        }
      });
    }
    return {best, best_idx};
  }

  // Visit all points within radius r of q (may visit a few beyond r; the
  // callback receives exact distances and must filter if it cares).
  template <typename Fn>
  void for_neighbors(const Point& q, double r, Fn&& fn) const {
    int x0 = std::clamp(static_cast<int>((q.x - r - win_.x_min) / bw_), 0, nbx_ - 1);
    int x1 = std::clamp(static_cast<int>((q.x + r - win_.x_min) / bw_), 0, nbx_ - 1);
    int y0 = std::clamp(static_cast<int>((q.y - r - win_.y_min) / bh_), 0, nby_ - 1);
    int y1 = std::clamp(static_cast<int>((q.y + r - win_.y_min) / bh_), 0, nby_ - 1);
    for (int by = y0; by <= y1; ++by)
      for (int bx = x0; bx <= x1; ++bx)
        for (int idx : buckets_[static_cast<std::size_t>(by) * nbx_ + bx])
          fn(idx, distance(q, positions_[static_cast<std::size_t>(idx)]));
  }

 private:
  void ensure_size(int idx) {
    if (static_cast<std::size_t>(idx) >= positions_.size()) {
      positions_.resize(static_cast<std::size_t>(idx) + 1);
      bucket_id_.resize(static_cast<std::size_t>(idx) + 1, -1);
    }
  }

  int bucket_of(const Point& p) const {
    int bx = std::clamp(static_cast<int>((p.x - win_.x_min) / bw_), 0, nbx_ - 1);
    int by = std::clamp(static_cast<int>((p.y - win_.y_min) / bh_), 0, nby_ - 1);
    return by * nbx_ + bx;
  }

  template <typename Fn>
  void scan_ring(int bx, int by, int ring, Fn&& fn) const {
    int x0 = bx - ring, x1 = bx + ring, y0 = by - ring, y1 = by + ring;
    for (int y = std::max(y0, 0); y <= std::min(y1, nby_ - 1); ++y) {
      bool edge_row = (y == y0 || y == y1);
      for (int x = std::max(x0, 0); x <= std::min(x1, nbx_ - 1); ++x) {
        if (!edge_row && x != x0 && x != x1) continue;  // interior already scanned
        for (int idx : buckets_[static_cast<std::size_t>(y) * nbx_ + x]) fn(idx);
      }
    }
  }

  Window win_;
  int nbx_ = 1, nby_ = 1;
  double bw_ = 1.0, bh_ = 1.0;
  std::vector<std::vector<int>> buckets_;
  std::vector<Point> positions_;
  std::vector<int> bucket_id_;
};

}  // namespace lgcp
