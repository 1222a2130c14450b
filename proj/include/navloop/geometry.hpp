#pragma once

#include <cmath>
#include <vector>

namespace navloop {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Point2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(const Point2& a, const Point2& b) { return (a - b).norm(); }

/// Rotates a vector by `angle` radians (counter-clockwise).
inline Point2 rotate(const Point2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// World-frame agent pose; heading is kept in (-pi, pi].
struct Pose {
  Point2 pos;
  double heading = 0.0;
};

/// One relative waypoint: position offset in the robot frame (x forward,
/// y left) plus a heading change in radians.
struct Waypoint {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 0.0;
};

/// K-step waypoint sequence; the policy's action and the expert's label.
struct Trajectory {
  std::vector<Waypoint> waypoints;

  size_t size() const { return waypoints.size(); }
  bool empty() const { return waypoints.empty(); }
};

/// Maps relative waypoints back into world-frame positions as seen from `pose`.
inline std::vector<Point2> waypoints_to_world(const Pose& pose, const Trajectory& traj) {
  std::vector<Point2> out;
  out.reserve(traj.size());
  for (const auto& w : traj.waypoints) {
    out.push_back(pose.pos + rotate({w.dx, w.dy}, pose.heading));
  }
  return out;
}

}  // namespace navloop
