#pragma once
// Episode transcripts and SVG rendering. A transcript is a plain-text record
// of one episode — the planner's reference path, the poses the agent actually
// visited, and (for policy runs) every candidate waypoint fan with its critic
// value — so a run can be replayed into a picture without re-simulating.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "navloop/policy.hpp"
#include "navloop/sim.hpp"

namespace navloop {

struct FanTrace {
  double value = 0.0;            // critic score of this candidate
  std::vector<Point2> points;    // world polyline, pose included as first point
};

struct DecisionTrace {
  Pose pose;
  std::vector<FanTrace> fans;    // all sampled candidates at this decision
};

struct Transcript {
  std::string scene_id;
  bool has_goal = false;
  Point2 goal{};
  std::vector<Point2> expert_path;  // planner path from the start pose (world)
  std::vector<Pose> executed;       // start pose, then pose after each decision
  std::vector<DecisionTrace> decisions;
};

// ---------------------------------------------------------------------------
// Recording

// Replays one benchmark episode deterministically (fixed sensor, no
// randomization) and records everything the renderer can draw. A null policy
// means the expert drives; with a policy, each decision stores the full
// candidate fan and the critic's scores.
inline Transcript record_episode(const WorldMap& map, const EpisodeSpec& spec,
                                 const SimConfig& sim_in, const Policy* policy, int n_samples,
                                 uint64_t seed) {
  SimConfig sim = sim_in;
  sim.randomize_sensor = false;
  sim.F = 0;  // the constructor's initial reset must not demand keypoints

  Transcript t;
  t.scene_id = map.scene_id;
  t.has_goal = true;
  t.goal = spec.goal;

  Environment env(&map, sim, make_rng({seed, 0}));
  env.reset_to(spec);

  const RawPath raw = shortest_path(map, spec.start.pos, spec.goal, sim.radius);
  const ProcessedPath processed =
      postprocess_path(map, raw, sim.spacing, sim.search_dist, sim.radius);
  t.expert_path = processed.points;

  DiffusionSchedule sched;
  if (policy != nullptr)
    sched = DiffusionSchedule::make(policy->config().N, policy->config().beta_min,
                                    policy->config().beta_max);
  Rng actor_rng = make_rng({seed, 1});

  t.executed.push_back(env.state().pose);
  while (env.status().state == Status::Running) {
    const Pose pose = env.state().pose;
    const Observation obs = env.observe();
    Trajectory exec;
    ActionSource source;
    if (policy != nullptr) {
      const auto [cond_full, cond_goalless] = policy->encode(obs);
      const std::vector<Trajectory> trajs =
          policy->sample_trajectories(cond_full, n_samples, sched, actor_rng);
      DecisionTrace dec;
      dec.pose = pose;
      for (const Trajectory& traj : trajs) {
        FanTrace fan;
        fan.value = policy->critic_value(cond_goalless, traj);
        fan.points.push_back(pose.pos);
        for (const Point2& p : waypoints_to_world(pose, traj)) fan.points.push_back(p);
        dec.fans.push_back(std::move(fan));
      }
      t.decisions.push_back(std::move(dec));
      exec = trajs[policy->rank_index(cond_goalless, trajs)];
      source = ActionSource::Policy;
    } else {
      exec = env.expert_label();
      source = ActionSource::Expert;
    }
    const StepRecord rec = env.step_trajectory(exec, source);
    t.executed.push_back(rec.pose_after);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Transcript file format (text, one record per line)

namespace detail {

inline void put_g17(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, " %.17g", v);
  out += buf;
}

}  // namespace detail

inline std::string serialize_transcript(const Transcript& t) {
  std::string out = "navloop-transcript 1\n";
  out += "scene " + t.scene_id + "\n";
  if (t.has_goal) {
    out += "goal";
    detail::put_g17(out, t.goal.x);
    detail::put_g17(out, t.goal.y);
    out += "\n";
  }
  for (const Point2& p : t.expert_path) {
    out += "expert-point";
    detail::put_g17(out, p.x);
    detail::put_g17(out, p.y);
    out += "\n";
  }
  for (const Pose& p : t.executed) {
    out += "pose";
    detail::put_g17(out, p.pos.x);
    detail::put_g17(out, p.pos.y);
    detail::put_g17(out, p.heading);
    out += "\n";
  }
  for (const DecisionTrace& d : t.decisions) {
    out += "decision";
    detail::put_g17(out, d.pose.pos.x);
    detail::put_g17(out, d.pose.pos.y);
    detail::put_g17(out, d.pose.heading);
    out += " " + std::to_string(d.fans.size()) + "\n";
    for (const FanTrace& f : d.fans) {
      out += "fan";
      detail::put_g17(out, f.value);
      out += " " + std::to_string(f.points.size());
      for (const Point2& p : f.points) {
        detail::put_g17(out, p.x);
        detail::put_g17(out, p.y);
      }
      out += "\n";
    }
  }
  return out;
}

inline Transcript parse_transcript(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("transcript: " + msg, line_no);
  };

  if (!std::getline(is, line)) fail("empty file");
  ++line_no;
  if (line != "navloop-transcript 1") fail("bad header '" + line + "'");

  Transcript t;
  bool saw_scene = false;
  int fans_expected = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag != "fan" && fans_expected > 0) fail("expected a fan record");
    if (tag == "scene") {
      std::string id;
      ls >> id;
      if (id.empty()) fail("scene record without an id");
      t.scene_id = id;
      saw_scene = true;
    } else if (tag == "goal") {
      if (!(ls >> t.goal.x >> t.goal.y)) fail("malformed goal record");
      t.has_goal = true;
    } else if (tag == "expert-point") {
      Point2 p;
      if (!(ls >> p.x >> p.y)) fail("malformed expert-point record");
      t.expert_path.push_back(p);
    } else if (tag == "pose") {
      Pose p;
      if (!(ls >> p.pos.x >> p.pos.y >> p.heading)) fail("malformed pose record");
      t.executed.push_back(p);
    } else if (tag == "decision") {
      DecisionTrace d;
      if (!(ls >> d.pose.pos.x >> d.pose.pos.y >> d.pose.heading >> fans_expected) ||
          fans_expected < 0)
        fail("malformed decision record");
      t.decisions.push_back(std::move(d));
    } else if (tag == "fan") {
      if (t.decisions.empty() || fans_expected <= 0) fail("fan record outside a decision");
      FanTrace f;
      size_t n = 0;
      if (!(ls >> f.value >> n)) fail("malformed fan record");
      f.points.resize(n);
      for (size_t i = 0; i < n; ++i)
        if (!(ls >> f.points[i].x >> f.points[i].y)) fail("fan record truncated");
      t.decisions.back().fans.push_back(std::move(f));
      --fans_expected;
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  if (fans_expected > 0) fail("decision record missing fan lines");
  if (!saw_scene) fail("missing scene record");
  return t;
}

// ---------------------------------------------------------------------------
// SVG rendering

struct VizLayers {
  bool heatmap = false;   // clearance shading on free cells
  bool expert = true;
  bool executed = true;
  bool fans = true;
};

namespace detail {

inline void svg_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  out += buf;
}

inline std::string svg_color(double t, int r0, int g0, int b0, int r1, int g1, int b1) {
  auto mix = [&](int a, int b) { return static_cast<int>(std::lround(a + t * (b - a))); };
  return "rgb(" + std::to_string(mix(r0, r1)) + "," + std::to_string(mix(g0, g1)) + "," +
         std::to_string(mix(b0, b1)) + ")";
}

inline void svg_rect(std::string& out, double x, double y, double w, double h,
                     const std::string& fill) {
  out += "<rect x=\"";
  svg_num(out, x);
  out += "\" y=\"";
  svg_num(out, y);
  out += "\" width=\"";
  svg_num(out, w);
  out += "\" height=\"";
  svg_num(out, h);
  out += "\" fill=\"" + fill + "\"/>\n";
}

inline void svg_polyline(std::string& out, const std::vector<Point2>& pts, double flip_h,
                         const std::string& stroke, double width, const char* extra = "") {
  if (pts.size() < 2) return;
  out += "<polyline points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) out += " ";
    svg_num(out, pts[i].x);
    out += ",";
    svg_num(out, flip_h - pts[i].y);
  }
  out += "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"";
  svg_num(out, width);
  out += "\"";
  out += extra;
  out += "/>\n";
}

inline void svg_circle(std::string& out, const Point2& c, double flip_h, double r,
                       const std::string& fill) {
  out += "<circle cx=\"";
  svg_num(out, c.x);
  out += "\" cy=\"";
  svg_num(out, flip_h - c.y);
  out += "\" r=\"";
  svg_num(out, r);
  out += "\" fill=\"" + fill + "\"/>\n";
}

}  // namespace detail

// Renders map + transcript layers to an SVG string. Coordinates are meters
// with y flipped into screen convention; identical inputs produce identical
// bytes. A transcript recorded on a different scene is refused.
inline std::string render_viz(const WorldMap& map, const Transcript& t,
                              const VizLayers& layers = {}) {
  if (!t.scene_id.empty() && t.scene_id != map.scene_id)
    throw Error("viz: transcript scene '" + t.scene_id + "' does not match map scene '" +
                map.scene_id + "'");

  const double W = map.width_m(), H = map.height_m();
  const int px_per_m = 80;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(static_cast<int>(std::lround(W * px_per_m))) + "\" height=\"" +
                    std::to_string(static_cast<int>(std::lround(H * px_per_m))) + "\" viewBox=\"0 0 ";
  detail::svg_num(out, W);
  out += " ";
  detail::svg_num(out, H);
  out += "\">\n";
  detail::svg_rect(out, 0, 0, W, H, "#ffffff");

  // Cells: optional clearance shading (dark blue at the walls fading to white
  // by 2 m of clearance), obstacles always solid.
  const double kHeatRange = 2.0;
  for (int iy = 0; iy < map.height; ++iy) {
    for (int ix = 0; ix < map.width; ++ix) {
      const double x = ix * map.cell_size;
      const double y = H - (iy + 1) * map.cell_size;
      if (map.occupied(ix, iy)) {
        detail::svg_rect(out, x, y, map.cell_size, map.cell_size, "#303030");
      } else if (layers.heatmap) {
        const double d = map.distance_field[map.index(ix, iy)];
        const double s = std::clamp(d / kHeatRange, 0.0, 1.0);
        detail::svg_rect(out, x, y, map.cell_size, map.cell_size,
                         detail::svg_color(s, 70, 130, 220, 255, 255, 255));
      }
    }
  }

  // Waypoint fans, colored by critic value across the whole transcript:
  // cool blue for the lowest-scored candidate, warm red for the highest.
  if (layers.fans && !t.decisions.empty()) {
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (const DecisionTrace& d : t.decisions)
      for (const FanTrace& f : d.fans) {
        vmin = std::min(vmin, f.value);
        vmax = std::max(vmax, f.value);
      }
    for (const DecisionTrace& d : t.decisions)
      for (const FanTrace& f : d.fans) {
        const double s = vmax > vmin ? (f.value - vmin) / (vmax - vmin) : 0.5;
        detail::svg_polyline(out, f.points, H,
                             detail::svg_color(s, 60, 100, 220, 230, 60, 40), 0.025,
                             " stroke-opacity=\"0.75\"");
      }
  }

  if (layers.expert) detail::svg_polyline(out, t.expert_path, H, "#2a9d2a", 0.06);
  if (layers.executed) {
    std::vector<Point2> pts;
    pts.reserve(t.executed.size());
    for (const Pose& p : t.executed) pts.push_back(p.pos);
    detail::svg_polyline(out, pts, H, "#202020", 0.04);
  }
  if (!t.executed.empty()) detail::svg_circle(out, t.executed.front().pos, H, 0.12, "#202020");
  if (t.has_goal) detail::svg_circle(out, t.goal, H, 0.12, "#e07b00");

  out += "</svg>\n";
  return out;
}

}  // namespace navloop
