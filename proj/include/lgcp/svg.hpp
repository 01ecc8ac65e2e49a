// svg.hpp -- minimal SVG line plots (path elements only, 800x600 viewBox).
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lgcp/common.hpp"

namespace lgcp {

class SvgPlot {
 public:
  void add_line(const std::vector<double>& x, const std::vector<double>& y,
                const std::string& color = "#000", double width = 1.5,
                const std::string& dash = "") {
    require(x.size() == y.size() && x.size() >= 2, "svg: need matching x/y with >= 2 points");
    lines_.push_back({x, y, color, width, dash});
    for (std::size_t i = 0; i < x.size(); ++i) {
      xmin_ = std::min(xmin_, x[i]);
      xmax_ = std::max(xmax_, x[i]);
      ymin_ = std::min(ymin_, y[i]);
      ymax_ = std::max(ymax_, y[i]);
    }
  }

  void add_points(const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& color = "#000", double radius = 1.4) {
    // rendered as tiny closed paths so the file stays paths-only
    for (std::size_t i = 0; i < x.size(); ++i) {
      xmin_ = std::min(xmin_, x[i]);
      xmax_ = std::max(xmax_, x[i]);
      ymin_ = std::min(ymin_, y[i]);
      ymax_ = std::max(ymax_, y[i]);
    }
    points_.push_back({x, y, color, radius, ""});
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    double dx = (xmax_ > xmin_) ? xmax_ - xmin_ : 1.0;
    double dy = (ymax_ > ymin_) ? ymax_ - ymin_ : 1.0;
    auto X = [&](double x) { return 60.0 + 700.0 * (x - xmin_) / dx; };
    auto Y = [&](double y) { return 560.0 - 520.0 * (y - ymin_) / dy; };
    char buf[160];
    for (const auto& ln : lines_) {
      out << "<path fill=\"none\" stroke=\"" << ln.color << "\" stroke-width=\"" << ln.width
          << "\"";
      if (!ln.dash.empty()) out << " stroke-dasharray=\"" << ln.dash << "\"";
      out << " d=\"";
      for (std::size_t i = 0; i < ln.x.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%c%.2f %.2f ", i == 0 ? 'M' : 'L', X(ln.x[i]), Y(ln.y[i]));
        out << buf;
      }
      out << "\"/>\n";
    }
    for (const auto& pt : points_) {
      out << "<path fill=\"" << pt.color << "\" stroke=\"none\" d=\"";
      for (std::size_t i = 0; i < pt.x.size(); ++i) {
        double cx = X(pt.x[i]), cy = Y(pt.y[i]), r = pt.width;
        std::snprintf(buf, sizeof(buf), "M%.2f %.2f a%.2f %.2f 0 1 0 %.4f 0 a%.2f %.2f 0 1 0 %.4f 0 ",
                      cx - r, cy, r, r, 2 * r, r, r, -2 * r);
        out << buf;
      }
      out << "\"/>\n";
    }
    out << "</svg>\n";
  }

 private:
  struct Series {
    std::vector<double> x, y;
    std::string color;
    double width;
    std::string dash;
  };
  std::vector<Series> lines_, points_;
  double xmin_ = std::numeric_limits<double>::infinity();
  double xmax_ = -std::numeric_limits<double>::infinity();
  double ymin_ = std::numeric_limits<double>::infinity();
  double ymax_ = -std::numeric_limits<double>::infinity();
};

}  // namespace lgcp
