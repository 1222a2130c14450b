#pragma once
// Privileged expert: grid shortest paths, clearance-aware post-processing,
// robot-frame waypoint labels, and difficulty-filtered episode sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "navloop/geometry.hpp"
#include "navloop/rng.hpp"
#include "navloop/spline.hpp"
#include "navloop/world.hpp"

namespace navloop {

// Heading change below this is grid-stair noise, not a genuine turn.
inline constexpr double kKeypointAngle = 15.0 * kPi / 180.0;

// Extra clearance demanded by line-of-sight shortcuts. Without it the
// shortcut segments skim inside corners at barely more than the agent
// radius, leaving the tracker no room for error; the grid path itself stays
// available as the fallback, so reachability is unaffected.
inline constexpr double kShortcutMargin = 0.1;

struct RawPath {
  std::vector<Point2> points;  // world frame; first = start, last = goal

  double length() const {
    double len = 0.0;
    for (size_t i = 1; i < points.size(); ++i) len += distance(points[i - 1], points[i]);
    return len;
  }
};

struct ProcessedPath {
  std::vector<Point2> points;
  double spacing = 0.0;  // target arc-length interval in meters

  double length() const {
    double len = 0.0;
    for (size_t i = 1; i < points.size(); ++i) len += distance(points[i - 1], points[i]);
    return len;
  }
};

struct EpisodeSpec {
  std::string scene_id;
  Pose start;
  Point2 goal;
  double shortest_len = 0.0;
  int keypoints = 0;
};

class UnreachableError : public Error {
 public:
  UnreachableError(const Point2& start, const Point2& goal)
      : Error(compose(start, goal)), start_(start), goal_(goal) {}
  const Point2& start() const { return start_; }
  const Point2& goal() const { return goal_; }

 private:
  static std::string compose(const Point2& s, const Point2& g) {
    std::ostringstream os;
    os << "no path from (" << s.x << ", " << s.y << ") to (" << g.x << ", " << g.y << ")";
    return os.str();
  }
  Point2 start_, goal_;
};

class PostprocessError : public Error {
 public:
  PostprocessError(int station, const Point2& p)
      : Error(compose(station, p)), station_(station) {}
  int station() const { return station_; }

 private:
  static std::string compose(int station, const Point2& p) {
    std::ostringstream os;
    os << "post-processing failed: no navigable projection for station " << station << " at ("
       << p.x << ", " << p.y << ")";
    return os.str();
  }
  int station_;
};

class SamplingError : public Error {
 public:
  SamplingError(int tries, int best_keypoints)
      : Error("episode sampling failed after " + std::to_string(tries) +
              " tries; best keypoint count seen: " + std::to_string(best_keypoints)),
        best_keypoints_(best_keypoints) {}
  int best_keypoints() const { return best_keypoints_; }

 private:
  int best_keypoints_;
};

namespace detail {

inline bool cell_traversable(const WorldMap& map, int ix, int iy, double radius) {
  return map.in_grid(ix, iy) && map.distance_field[map.index(ix, iy)] > radius;
}

// Exact cost of an 8-connected grid path from step counts. Costs live in
// Z + Z*sqrt(2), where representations are unique, so two optimal paths always
// produce bit-identical doubles through this formula.
inline double grid_path_cost(const WorldMap& map, const std::vector<std::pair<int, int>>& cells) {
  int64_t cardinal = 0, diagonal = 0;
  for (size_t i = 1; i < cells.size(); ++i) {
    const int dx = std::abs(cells[i].first - cells[i - 1].first);
    const int dy = std::abs(cells[i].second - cells[i - 1].second);
    if (dx + dy == 1)
      ++cardinal;
    else
      ++diagonal;
  }
  return map.cell_size *
         (static_cast<double>(cardinal) + std::sqrt(2.0) * static_cast<double>(diagonal));
}

// 8-connected A* with octile heuristic on the radius-inflated grid. Diagonal
// moves require both adjacent cardinal cells traversable (no corner cutting).
// Stale-entry skipping instead of a closed set keeps the result exact even if
// rounding makes the heuristic epsilon-inconsistent.
inline std::optional<std::vector<std::pair<int, int>>> astar_grid(const WorldMap& map,
                                                                  std::pair<int, int> start,
                                                                  std::pair<int, int> goal,
                                                                  double radius) {
  if (!cell_traversable(map, start.first, start.second, radius) ||
      !cell_traversable(map, goal.first, goal.second, radius))
    return std::nullopt;

  const double kInf = std::numeric_limits<double>::infinity();
  const double sqrt2 = std::sqrt(2.0);
  const int w = map.width;
  std::vector<double> g(static_cast<size_t>(w) * map.height, kInf);
  std::vector<int> parent(g.size(), -1);

  const auto heur = [&](int ix, int iy) {
    const double dx = std::abs(ix - goal.first);
    const double dy = std::abs(iy - goal.second);
    return map.cell_size * (std::max(dx, dy) + (sqrt2 - 1.0) * std::min(dx, dy));
  };

  struct Node {
    double f, g;
    int idx;
  };
  const auto worse = [](const Node& a, const Node& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;  // on f ties prefer the deeper node
    return a.idx > b.idx;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  const int start_idx = map.index(start.first, start.second);
  const int goal_idx = map.index(goal.first, goal.second);
  g[start_idx] = 0.0;
  open.push({heur(start.first, start.second), 0.0, start_idx});

  static const int DX[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static const int DY[8] = {0, 0, 1, -1, 1, -1, 1, -1};

  while (!open.empty()) {
    const Node node = open.top();
    open.pop();
    if (node.g > g[node.idx]) continue;  // stale queue entry
    if (node.idx == goal_idx) {
      std::vector<std::pair<int, int>> cells;
      for (int idx = goal_idx; idx != -1; idx = parent[idx])
        cells.emplace_back(idx % w, idx / w);
      std::reverse(cells.begin(), cells.end());
      return cells;
    }
    const int x = node.idx % w, y = node.idx / w;
    for (int d = 0; d < 8; ++d) {
      const int nx = x + DX[d], ny = y + DY[d];
      if (!cell_traversable(map, nx, ny, radius)) continue;
      const bool diag = d >= 4;
      if (diag && (!cell_traversable(map, x + DX[d], y, radius) ||
                   !cell_traversable(map, x, y + DY[d], radius)))
        continue;
      const double ng = node.g + map.cell_size * (diag ? sqrt2 : 1.0);
      const int nidx = map.index(nx, ny);
      if (ng < g[nidx]) {
        g[nidx] = ng;
        parent[nidx] = node.idx;
        open.push({ng + heur(nx, ny), ng, nidx});
      }
    }
  }
  return std::nullopt;
}

// Nearest traversable cell to a world point, by Euclidean distance to cell
// centers; expanding Chebyshev rings with a ring-based stopping bound.
inline std::optional<std::pair<int, int>> nearest_traversable_cell(const WorldMap& map,
                                                                   const Point2& p,
                                                                   double radius) {
  const int cx = std::clamp(map.cell_x(p.x), 0, map.width - 1);
  const int cy = std::clamp(map.cell_y(p.y), 0, map.height - 1);
  std::optional<std::pair<int, int>> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const int max_ring = std::max(map.width, map.height);
  for (int r = 0; r <= max_ring; ++r) {
    // A cell on ring r is at least (r-1) cells away from p in Euclidean terms.
    if (best && (r - 1) * map.cell_size > std::sqrt(best_d2)) break;
    for (int iy = cy - r; iy <= cy + r; ++iy) {
      for (int ix = cx - r; ix <= cx + r; ++ix) {
        if (std::max(std::abs(ix - cx), std::abs(iy - cy)) != r) continue;  // perimeter only
        if (!cell_traversable(map, ix, iy, radius)) continue;
        const Point2 c = map.cell_center(ix, iy);
        const double d2 = (c.x - p.x) * (c.x - p.x) + (c.y - p.y) * (c.y - p.y);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = {ix, iy};
        }
      }
    }
  }
  return best;
}

}  // namespace detail

// Samples the segment at quarter-cell resolution; fine enough to catch a
// single obstacle cell crossing the chord.
inline bool segment_navigable(const WorldMap& map, const Point2& a, const Point2& b,
                              double radius) {
  const double step = 0.25 * map.cell_size;
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (!is_navigable(map, {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t}, radius)) return false;
  }
  return true;
}

namespace detail {

// Greedy line-of-sight shortcutting; keeps endpoints, never lengthens.
// Shortcuts must clear radius + kShortcutMargin so they do not graze corner
// tips; the untested i -> i+1 fallback keeps the original grid edges valid.
inline std::vector<Point2> shortcut_path(const WorldMap& map, const std::vector<Point2>& pts,
                                         double radius) {
  if (pts.size() <= 2) return pts;
  std::vector<Point2> out;
  out.push_back(pts.front());
  size_t i = 0;
  while (i + 1 < pts.size()) {
    size_t j = i + 1;
    while (j + 1 < pts.size() &&
           segment_navigable(map, pts[i], pts[j + 1], radius + kShortcutMargin))
      ++j;
    out.push_back(pts[j]);
    i = j;
  }
  return out;
}

inline Point2 clearance_gradient(const WorldMap& map, const Point2& p, double eps = 0.01) {
  return {(clearance(map, {p.x + eps, p.y}) - clearance(map, {p.x - eps, p.y})) / (2.0 * eps),
          (clearance(map, {p.x, p.y + eps}) - clearance(map, {p.x, p.y - eps})) / (2.0 * eps)};
}

// Stage 1: per-vertex line search along the fixed away-from-obstacle
// direction; keeps the navigable candidate with maximum clearance. Endpoints
// stay put. Only strict improvements are accepted.
inline std::vector<Point2> line_search_vertices(const WorldMap& map,
                                                const std::vector<Point2>& pts,
                                                double search_dist, double radius,
                                                double step = 0.01) {
  std::vector<Point2> out = pts;
  for (size_t i = 1; i + 1 < pts.size(); ++i) {
    const Point2 grad = clearance_gradient(map, pts[i]);
    const double gn = std::sqrt(grad.x * grad.x + grad.y * grad.y);
    if (gn < 1e-9) continue;
    const Point2 dir{grad.x / gn, grad.y / gn};
    double best_c = clearance(map, pts[i]);
    for (int k = 1; k * step <= search_dist + 1e-12; ++k) {
      const Point2 cand{pts[i].x + dir.x * step * k, pts[i].y + dir.y * step * k};
      const double c = clearance(map, cand);
      if (c > best_c && is_navigable(map, cand, radius)) {
        best_c = c;
        out[i] = cand;
      }
    }
  }
  return out;
}

// Stage 2: uniform arc-length resampling. Stations sit at multiples of
// `spacing` plus the exact endpoint, so interior gaps equal `spacing` and the
// final gap is never longer than it.
inline std::vector<Point2> resample_polyline(const std::vector<Point2>& pts, double spacing,
                                             std::vector<double>* stations_out) {
  std::vector<double> cum(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + distance(pts[i - 1], pts[i]);
  const double total = cum.back();

  std::vector<double> stations;
  for (double s = 0.0; s < total - 1e-9; s += spacing) stations.push_back(s);
  stations.push_back(total);

  std::vector<Point2> out;
  out.reserve(stations.size());
  size_t seg = 0;
  for (double s : stations) {
    while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double t = span > 1e-12 ? (s - cum[seg]) / span : 0.0;
    out.push_back({pts[seg].x + (pts[seg + 1].x - pts[seg].x) * t,
                   pts[seg].y + (pts[seg + 1].y - pts[seg].y) * t});
  }
  if (stations_out) *stations_out = std::move(stations);
  return out;
}

// Stage 4: radial projection onto navigable space; 16 directions, 0.01 m
// rings, giving up past twice the agent radius.
inline Point2 project_navigable(const WorldMap& map, const Point2& p, double radius,
                                int station) {
  if (is_navigable(map, p, radius)) return p;
  const double step = 0.01;
  const int max_rings = static_cast<int>(std::ceil(2.0 * radius / step));
  for (int s = 1; s <= max_rings; ++s) {
    const double r = s * step;
    for (int k = 0; k < 16; ++k) {
      const double a = 2.0 * kPi * k / 16.0;
      const Point2 cand{p.x + r * std::cos(a), p.y + r * std::sin(a)};
      if (is_navigable(map, cand, radius)) return cand;
    }
  }
  throw PostprocessError(station, p);
}

}  // namespace detail

// Shortest collision-free polyline from start to goal at the given agent
// radius: A* on the inflated grid, then line-of-sight shortcutting.
inline RawPath shortest_path(const WorldMap& map, const Point2& start, const Point2& goal,
                             double radius) {
  if (!is_navigable(map, start, radius)) throw Error("shortest_path: start not navigable");
  if (!is_navigable(map, goal, radius)) throw Error("shortest_path: goal not navigable");

  const auto sc = detail::nearest_traversable_cell(map, start, radius);
  const auto gc = detail::nearest_traversable_cell(map, goal, radius);
  if (!sc || !gc) throw UnreachableError(start, goal);
  const auto cells = detail::astar_grid(map, *sc, *gc, radius);
  if (!cells) throw UnreachableError(start, goal);

  std::vector<Point2> pts;
  pts.push_back(start);
  for (const auto& c : *cells) {
    const Point2 p = map.cell_center(c.first, c.second);
    if (distance(p, pts.back()) > 1e-12) pts.push_back(p);
  }
  if (distance(goal, pts.back()) > 1e-12)
    pts.push_back(goal);
  else if (pts.size() >= 2)
    pts.back() = goal;
  if (pts.size() < 2) throw Error("shortest_path: start and goal coincide");

  return RawPath{detail::shortcut_path(map, pts, radius)};
}

// Interior vertices whose heading change exceeds the threshold.
inline int count_keypoints(const RawPath& path, double angle_threshold = kKeypointAngle) {
  if (path.points.size() < 2) throw Error("count_keypoints: path needs at least 2 points");
  int count = 0;
  for (size_t i = 1; i + 1 < path.points.size(); ++i) {
    const Point2 in = path.points[i] - path.points[i - 1];
    const Point2 out = path.points[i + 1] - path.points[i];
    const double turn = wrap_angle(std::atan2(out.y, out.x) - std::atan2(in.y, in.x));
    if (std::abs(turn) > angle_threshold) ++count;
  }
  return count;
}

// Pipeline: (1) clearance line search per vertex, (2) uniform arc-length
// resampling, (3) natural cubic spline over arc length re-evaluated at the
// same stations, (4) projection of any non-navigable point back to navigable
// space. Every output point is navigable at the agent radius.
inline ProcessedPath postprocess_path(const WorldMap& map, const RawPath& path, double spacing,
                                      double search_dist, double radius) {
  if (spacing <= 0.0) throw Error("postprocess_path: spacing must be positive");
  if (search_dist < 0.0) throw Error("postprocess_path: search_dist must be non-negative");
  if (path.points.size() < 2) throw Error("postprocess_path: path needs at least 2 points");

  const std::vector<Point2> adjusted =
      detail::line_search_vertices(map, path.points, search_dist, radius);

  std::vector<double> stations;
  std::vector<Point2> pts = detail::resample_polyline(adjusted, spacing, &stations);

  if (pts.size() >= 2) {
    std::vector<double> xs(pts.size()), ys(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      xs[i] = pts[i].x;
      ys[i] = pts[i].y;
    }
    const CubicSpline sx = CubicSpline::fit(stations, xs);
    const CubicSpline sy = CubicSpline::fit(stations, ys);
    for (size_t i = 0; i < pts.size(); ++i) pts[i] = {sx.eval(stations[i]), sy.eval(stations[i])};
  }

  for (size_t i = 0; i < pts.size(); ++i)
    pts[i] = detail::project_navigable(map, pts[i], radius, static_cast<int>(i));

  return ProcessedPath{std::move(pts), spacing};
}

// Robot-frame waypoint label: the K path points following the vertex nearest
// the pose, as (dx forward, dy left, dw change in tangent heading). Short
// paths pad by repeating the goal with dw = 0.
inline Trajectory relative_waypoints(const ProcessedPath& path, const Pose& pose, int K) {
  if (path.points.empty()) throw Error("relative_waypoints: empty path");
  if (K < 1) throw Error("relative_waypoints: K must be >= 1");

  size_t nearest = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < path.points.size(); ++i) {
    const double dx = path.points[i].x - pose.pos.x;
    const double dy = path.points[i].y - pose.pos.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      nearest = i;
    }
  }

  Trajectory traj;
  traj.waypoints.reserve(K);
  double prev_tangent = pose.heading;
  Point2 prev_point = path.points[nearest];
  for (int k = 1; k <= K; ++k) {
    const size_t idx = nearest + k;
    if (idx < path.points.size()) {
      const Point2 wpt = path.points[idx];
      const Point2 rel = rotate(wpt - pose.pos, -pose.heading);
      const Point2 d = wpt - prev_point;
      double dw = 0.0;
      if (d.norm() > 1e-12) {
        const double tangent = std::atan2(d.y, d.x);
        dw = wrap_angle(tangent - prev_tangent);
        prev_tangent = tangent;
      }
      traj.waypoints.push_back({rel.x, rel.y, dw});
      prev_point = wpt;
    } else {
      const Point2 rel = rotate(path.points.back() - pose.pos, -pose.heading);
      traj.waypoints.push_back({rel.x, rel.y, 0.0});
    }
  }
  return traj;
}

namespace detail {

// Rejection sampling shared by the trainer (keypoints >= F) and the
// benchmark generator (keypoints in [F, f_max]).
inline EpisodeSpec sample_episode_range(const WorldMap& map, Rng& rng, int f_min, int f_max,
                                        double radius, int max_tries, double min_separation) {
  if (f_min < 0) throw Error("sample_episode: F must be non-negative");
  if (max_tries < 1) throw Error("sample_episode: max_tries must be >= 1");
  int best = 0;
  for (int t = 0; t < max_tries; ++t) {
    const Point2 s{draw_uniform(rng, 0.0, map.width_m()), draw_uniform(rng, 0.0, map.height_m())};
    const Point2 g{draw_uniform(rng, 0.0, map.width_m()), draw_uniform(rng, 0.0, map.height_m())};
    if (!is_navigable(map, s, radius) || !is_navigable(map, g, radius)) continue;
    if (distance(s, g) < min_separation) continue;
    RawPath path;
    try {
      path = shortest_path(map, s, g, radius);
    } catch (const UnreachableError&) {
      continue;
    }
    const int kp = count_keypoints(path);
    best = std::max(best, kp);
    if (kp < f_min || kp > f_max) continue;

    EpisodeSpec spec;
    spec.scene_id = map.scene_id;
    spec.start = Pose{s, wrap_angle(draw_uniform(rng, -kPi, kPi))};
    spec.goal = g;
    spec.shortest_len = path.length();
    spec.keypoints = kp;
    return spec;
  }
  throw SamplingError(max_tries, best);
}

}  // namespace detail

// Uniform start/goal pairs over the navigable surface, accepted when the raw
// path has at least F keypoints and the endpoints are >= 2 m apart.
inline EpisodeSpec sample_episode(const WorldMap& map, Rng& rng, int F, double radius,
                                  int max_tries) {
  return detail::sample_episode_range(map, rng, F, std::numeric_limits<int>::max(), radius,
                                      max_tries, 2.0);
}

}  // namespace navloop
