#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "navloop/geometry.hpp"

namespace navloop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line)
      : Error("parse error at line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Immutable occupancy grid with a precomputed exact Euclidean
/// distance-to-obstacle field. Distances are measured between cell centers,
/// in meters. The boundary ring is always forced to obstacle, so the world
/// is closed. Safe to share read-only across threads.
struct WorldMap {
  int width = 0;
  int height = 0;
  double cell_size = 0.0;
  std::string scene_id;
  std::vector<std::uint8_t> occupancy;    // 1 = obstacle
  std::vector<double> distance_field;     // meters; 0 on obstacle cells

  size_t index(int ix, int iy) const { return static_cast<size_t>(iy) * width + ix; }
  bool in_grid(int ix, int iy) const { return ix >= 0 && ix < width && iy >= 0 && iy < height; }
  bool occupied(int ix, int iy) const { return occupancy[index(ix, iy)] != 0; }

  double width_m() const { return width * cell_size; }
  double height_m() const { return height * cell_size; }
  bool in_bounds(const Point2& p) const {
    return p.x >= 0.0 && p.x < width_m() && p.y >= 0.0 && p.y < height_m();
  }

  Point2 cell_center(int ix, int iy) const {
    return {(ix + 0.5) * cell_size, (iy + 0.5) * cell_size};
  }
  int cell_x(double x) const { return static_cast<int>(std::floor(x / cell_size)); }
  int cell_y(double y) const { return static_cast<int>(std::floor(y / cell_size)); }
};

namespace detail {

// 1D squared distance transform (Felzenszwalb & Huttenlocher), distances in
// cell units. f holds squared source values, INF where no source.
inline void dt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<int> v(n, 0);
  std::vector<double> z(n + 1, 0.0);
  // Only parabolas with finite height enter the envelope; inf - inf would
  // poison the intersection formula with NaNs.
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

inline void compute_distance_field(WorldMap& map) {
  const int w = map.width, h = map.height;
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = map.occupancy[i] ? 0.0 : kInf;

  std::vector<double> col(h), cold(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = sq[map.index(x, y)];
    dt_1d(col, cold);
    for (int y = 0; y < h; ++y) sq[map.index(x, y)] = cold[y];
  }
  std::vector<double> row(w), rowd(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = sq[map.index(x, y)];
    dt_1d(row, rowd);
    for (int x = 0; x < w; ++x) sq[map.index(x, y)] = rowd[x];
  }

  map.distance_field.resize(sq.size());
  for (size_t i = 0; i < sq.size(); ++i) map.distance_field[i] = map.cell_size * std::sqrt(sq[i]);
}

}  // namespace detail

/// Parses the plain-text map format:
///   line 1: cell_size=<meters>
///   line 2: name=<scene id>
///   then one row per line, '#' = obstacle, '.' = free.
/// The boundary is forced to obstacle and the distance field is computed.
inline WorldMap load_map(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();

  if (lines.size() < 3) throw ParseError("expected header and at least one grid row", 1);

  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find('\t') != std::string::npos)
      throw ParseError("tabs are not allowed", static_cast<int>(i + 1));
  }

  WorldMap map;
  {
    const std::string& l = lines[0];
    const std::string key = "cell_size=";
    if (l.rfind(key, 0) != 0) throw ParseError("expected 'cell_size=<meters>'", 1);
    try {
      size_t pos = 0;
      map.cell_size = std::stod(l.substr(key.size()), &pos);
      if (pos != l.size() - key.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("malformed cell_size value '" + l.substr(key.size()) + "'", 1);
    }
    if (!(map.cell_size > 0.0)) throw ParseError("cell_size must be > 0", 1);
  }
  {
    const std::string& l = lines[1];
    const std::string key = "name=";
    if (l.rfind(key, 0) != 0) throw ParseError("expected 'name=<scene id>'", 2);
    map.scene_id = l.substr(key.size());
    if (map.scene_id.empty()) throw ParseError("scene id must be non-empty", 2);
  }

  map.height = static_cast<int>(lines.size()) - 2;
  map.width = static_cast<int>(lines[2].size());
  if (map.width == 0) throw ParseError("empty grid row", 3);
  map.occupancy.assign(static_cast<size_t>(map.width) * map.height, 0);

  // Grid rows are listed top-to-bottom in the file; row 0 of the file is the
  // highest y so that the text renders like a top-down view.
  for (int r = 0; r < map.height; ++r) {
    const std::string& l = lines[r + 2];
    const int line_no = r + 3;
    if (static_cast<int>(l.size()) != map.width)
      throw ParseError("ragged row: expected " + std::to_string(map.width) + " cells, got " +
                           std::to_string(l.size()),
                       line_no);
    const int iy = map.height - 1 - r;
    for (int ix = 0; ix < map.width; ++ix) {
      const char c = l[ix];
      if (c == '#') {
        map.occupancy[map.index(ix, iy)] = 1;
      } else if (c == '.') {
        map.occupancy[map.index(ix, iy)] = 0;
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", line_no);
      }
    }
  }

  for (int x = 0; x < map.width; ++x) {
    map.occupancy[map.index(x, 0)] = 1;
    map.occupancy[map.index(x, map.height - 1)] = 1;
  }
  for (int y = 0; y < map.height; ++y) {
    map.occupancy[map.index(0, y)] = 1;
    map.occupancy[map.index(map.width - 1, y)] = 1;
  }

  bool any_free = false;
  for (auto o : map.occupancy) any_free |= (o == 0);
  if (!any_free) throw ParseError("map has no free cells after boundary closure", 3);

  detail::compute_distance_field(map);
  return map;
}

/// Distance from p to the nearest obstacle, by bilinear interpolation of the
/// cell-center distance field. Out-of-bounds points are treated as obstacle.
inline double clearance(const WorldMap& map, const Point2& p) {
  if (!map.in_bounds(p)) return 0.0;
  const double u = p.x / map.cell_size - 0.5;
  const double v = p.y / map.cell_size - 0.5;
  int i0 = static_cast<int>(std::floor(u));
  int j0 = static_cast<int>(std::floor(v));
  double fu = u - i0;
  double fv = v - j0;
  // Clamp to the cell-center lattice; within the outer half-cell ring the
  // nearest node value is used (those nodes are boundary obstacles anyway).
  if (i0 < 0) { i0 = 0; fu = 0.0; }
  if (i0 > map.width - 2) { i0 = map.width - 2; fu = 1.0; }
  if (j0 < 0) { j0 = 0; fv = 0.0; }
  if (j0 > map.height - 2) { j0 = map.height - 2; fv = 1.0; }
  const double d00 = map.distance_field[map.index(i0, j0)];
  const double d10 = map.distance_field[map.index(i0 + 1, j0)];
  const double d01 = map.distance_field[map.index(i0, j0 + 1)];
  const double d11 = map.distance_field[map.index(i0 + 1, j0 + 1)];
  return (1 - fu) * (1 - fv) * d00 + fu * (1 - fv) * d10 + (1 - fu) * fv * d01 + fu * fv * d11;
}

inline bool is_navigable(const WorldMap& map, const Point2& p, double radius) {
  return clearance(map, p) > radius;
}

/// Grid traversal raycast: distance to the first obstacle-cell boundary along
/// the ray, clamped to max_range. Starting inside an obstacle returns 0.
inline double raycast(const WorldMap& map, const Point2& origin, double angle, double max_range) {
  if (!map.in_bounds(origin)) return 0.0;
  int ix = map.cell_x(origin.x);
  int iy = map.cell_y(origin.y);
  if (map.occupied(ix, iy)) return 0.0;

  const double dx = std::cos(angle), dy = std::sin(angle);
  const double kInf = std::numeric_limits<double>::infinity();
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  double t_max_x = kInf, t_max_y = kInf, t_delta_x = kInf, t_delta_y = kInf;
  if (step_x != 0) {
    const double next = (step_x > 0 ? (ix + 1) * map.cell_size : ix * map.cell_size);
    t_max_x = (next - origin.x) / dx;
    t_delta_x = map.cell_size / std::abs(dx);
  }
  if (step_y != 0) {
    const double next = (step_y > 0 ? (iy + 1) * map.cell_size : iy * map.cell_size);
    t_max_y = (next - origin.y) / dy;
    t_delta_y = map.cell_size / std::abs(dy);
  }

  double t = 0.0;
  while (t <= max_range) {
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      ix += step_x;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      iy += step_y;
    }
    if (t > max_range) break;
    if (!map.in_grid(ix, iy)) break;  // boundary is obstacle, unreachable in practice
    if (map.occupied(ix, iy)) return t;
  }
  return max_range;
}

}  // namespace navloop
