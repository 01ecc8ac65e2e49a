// pattern_io.hpp -- CSV/JSON serialization for patterns, windows, masks, grids.
//
// Pattern CSV: header "x,y[,mark...]", one point per row, 17 significant
// digits. The window lives in a sidecar JSON ("<base>.window.json") unless the
// caller supplies one.
#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgcp/pattern.hpp"

namespace lgcp {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string window_sidecar_path(const std::string& pattern_path) {
  auto slash = pattern_path.find_last_of("/\\");
  auto dot = pattern_path.find_last_of('.');
  std::string base = (dot != std::string::npos && (slash == std::string::npos || dot > slash))
                         ? pattern_path.substr(0, dot)
                         : pattern_path;
  return base + ".window.json";
}

inline void write_window_json(const Window& w, const std::string& path) {
  nlohmann::json j{{"x_min", w.x_min}, {"x_max", w.x_max}, {"y_min", w.y_min}, {"y_max", w.y_max}};
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

inline Window read_window_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open window file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return Window(j.at("x_min").get<double>(), j.at("x_max").get<double>(),
                j.at("y_min").get<double>(), j.at("y_max").get<double>());
}

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, const std::string& file, int line_no) {
  if (s.empty() || s == "NA" || s == "nan" || s == "NaN") return missing_value();
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(file + ":" + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError(file + ":" + std::to_string(line_no) + ": trailing junk in '" + s + "'");
  return v;
}

}  // namespace detail

inline void write_pattern(const PointPattern& pattern, const std::string& path,
                          bool with_sidecar = true) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  std::vector<std::string> mark_names;
  out << "x,y";
  for (const auto& [name, col] : pattern.marks) {
    out << ',' << name;
    mark_names.push_back(name);
  }
  out << '\n';
  for (std::size_t k = 0; k < pattern.points.size(); ++k) {
    out << format_g17(pattern.points[k].x) << ',' << format_g17(pattern.points[k].y);
    for (const auto& name : mark_names) out << ',' << format_g17(pattern.marks.at(name)[k]);
    out << '\n';
  }
  if (with_sidecar) write_window_json(pattern.window, window_sidecar_path(path));
}

// Reads a pattern CSV. If no window is supplied, the sidecar JSON is required.
inline PointPattern read_pattern(const std::string& path,
                                 std::optional<Window> window = std::nullopt) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open pattern file " + path);
  Window win = window ? *window : read_window_json(window_sidecar_path(path));

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file (header required)");
  auto header = detail::split_csv_row(line);
  if (header.size() < 2 || header[0] != "x" || header[1] != "y")
    throw ParseError(path + ":1: header must start with 'x,y'");

  PointPattern pat(win);
  std::vector<std::string> mark_names(header.begin() + 2, header.end());
  for (const auto& name : mark_names) pat.marks[name] = {};

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_row(line);
    if (fields.size() != header.size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    Point p{detail::parse_double_field(fields[0], path, line_no),
            detail::parse_double_field(fields[1], path, line_no)};
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ParseError(path + ":" + std::to_string(line_no) + ": non-finite coordinate");
    if (!win.contains(p))
      throw ParseError(path + ":" + std::to_string(line_no) + ": point outside declared window");
    pat.points.push_back(p);
    for (std::size_t m = 0; m < mark_names.size(); ++m)
      pat.marks[mark_names[m]].push_back(detail::parse_double_field(fields[m + 2], path, line_no));
  }
  return pat;
}

// Mask CSV: n_row lines of n_col comma-separated 0/1 flags.
inline std::vector<std::uint8_t> read_mask_csv(const std::string& path, int n_row, int n_col) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open mask file " + path);
  std::vector<std::uint8_t> mask;
  mask.reserve(static_cast<std::size_t>(n_row) * n_col);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_row(line);
    if (static_cast<int>(fields.size()) != n_col)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(n_col) + " columns");
    for (const auto& f : fields) {
      if (f != "0" && f != "1")
        throw ParseError(path + ":" + std::to_string(line_no) + ": mask entries must be 0 or 1");
      mask.push_back(f == "1" ? 1 : 0);
    }
  }
  if (static_cast<int>(mask.size()) != n_row * n_col)
    throw ParseError(path + ": expected " + std::to_string(n_row) + " rows");
  return mask;
}

// Full-grid CSV of per-cell values, n_row lines; missing cells are empty fields.
inline void write_grid_csv(const std::vector<double>& values, int n_row, int n_col,
                           const std::string& path) {
  require(static_cast<int>(values.size()) == n_row * n_col, "write_grid_csv: size mismatch");
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  for (int i = 0; i < n_row; ++i) {
    for (int j = 0; j < n_col; ++j) {
      if (j) out << ',';
      double v = values[static_cast<std::size_t>(i) * n_col + j];
      if (!is_missing(v)) out << format_g17(v);
    }
    out << '\n';
  }
}

// Sparse covariate CSV: "row,col,value" triples for observed cells only.
inline void write_covariate_csv(const std::vector<double>& values, int n_row, int n_col,
                                const std::string& path) {
  require(static_cast<int>(values.size()) == n_row * n_col, "write_covariate_csv: size mismatch");
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << "row,col,value\n";
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j < n_col; ++j) {
      double v = values[static_cast<std::size_t>(i) * n_col + j];
      if (!is_missing(v)) out << i << ',' << j << ',' << format_g17(v) << '\n';
    }
}

inline std::vector<double> read_covariate_csv(const std::string& path, int n_row, int n_col) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open covariate file " + path);
  std::vector<double> values(static_cast<std::size_t>(n_row) * n_col, missing_value());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (detail::split_csv_row(line) != std::vector<std::string>{"row", "col", "value"})
    throw ParseError(path + ":1: header must be 'row,col,value'");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_row(line);
    if (fields.size() != 3)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    int i = static_cast<int>(detail::parse_double_field(fields[0], path, line_no));
    int j = static_cast<int>(detail::parse_double_field(fields[1], path, line_no));
    if (i < 0 || i >= n_row || j < 0 || j >= n_col)
      throw ParseError(path + ":" + std::to_string(line_no) + ": cell index out of range");
    values[static_cast<std::size_t>(i) * n_col + j] =
        detail::parse_double_field(fields[2], path, line_no);
  }
  return values;
}

}  // namespace lgcp
