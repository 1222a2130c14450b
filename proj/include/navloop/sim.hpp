#pragma once
// Differential-drive simulation: depth-ray sensing, pure-pursuit waypoint
// tracking, collision-blocking unicycle integration, trajectory safety
// scoring, and the environment wrapper driven by the training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "navloop/geometry.hpp"
#include "navloop/planner.hpp"
#include "navloop/rng.hpp"
#include "navloop/util.hpp"
#include "navloop/world.hpp"

namespace navloop {

struct SensorConfig {
  int rays = 64;
  double fov = 2.0 * kPi / 3.0;  // 120 degrees
  double max_range = 5.0;
  double goal_clamp = 10.0;
  double mount_offset = 0.0;  // sensor origin this far ahead of the pose
  double range_noise_sigma = 0.0;

  bool operator==(const SensorConfig&) const = default;
};

struct Observation {
  std::vector<double> depth_rays;  // meters, clamped to [0, max_range]
  double goal_dist = 0.0;          // clamped to goal_clamp
  double goal_bearing = 0.0;       // robot frame, (-pi, pi]
  double mount_offset = 0.0;
  double range_noise_sigma = 0.0;
};

struct AgentState {
  Pose pose;
  double v = 0.0, w = 0.0;
};

enum class Status : uint8_t { Running, Success, Collision, Stalled, Timeout };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Running: return "running";
    case Status::Success: return "success";
    case Status::Collision: return "collision";
    case Status::Stalled: return "stalled";
    case Status::Timeout: return "timeout";
  }
  return "?";
}

struct EpisodeStatus {
  Status state = Status::Running;
  int steps = 0;          // policy decisions taken
  double path_len = 0.0;  // integrated per-tick displacement
};

struct SafetyConfig {
  double d_safe = 0.5;
  double alpha = 0.1;

  bool operator==(const SafetyConfig&) const = default;
};

enum class ActionSource : uint8_t { Policy, Expert };

// One training sample: observation, expert label, critic target, and the
// bookkeeping needed to re-derive the label independently.
struct DataTuple {
  Observation obs;
  Point2 goal_robot;  // goal offset in the robot frame at record time
  Trajectory expert;  // a*: always the expert label, whatever was executed
  double safety_target = 0.0;
  std::vector<double> cached_features;  // encoder output from the rollout snapshot
  Pose pose;
  Point2 goal_world;
  std::string scene_id;
  bool executed_expert = false;
};

// ---------------------------------------------------------------------------
// Pure operations
// ---------------------------------------------------------------------------

inline Observation observe(const WorldMap& map, const AgentState& state, const Point2& goal,
                           const SensorConfig& cfg, Rng& rng) {
  Observation obs;
  obs.depth_rays.resize(cfg.rays);
  const Point2 origin{state.pose.pos.x + cfg.mount_offset * std::cos(state.pose.heading),
                      state.pose.pos.y + cfg.mount_offset * std::sin(state.pose.heading)};
  for (int i = 0; i < cfg.rays; ++i) {
    const double frac = cfg.rays > 1 ? static_cast<double>(i) / (cfg.rays - 1) : 0.5;
    const double angle = state.pose.heading - cfg.fov / 2.0 + cfg.fov * frac;
    double r = raycast(map, origin, angle, cfg.max_range);
    if (cfg.range_noise_sigma > 0.0) r += draw_normal(rng, 0.0, cfg.range_noise_sigma);
    obs.depth_rays[i] = std::clamp(r, 0.0, cfg.max_range);
  }
  const Point2 rel = rotate(goal - state.pose.pos, -state.pose.heading);
  obs.goal_dist = std::min(rel.norm(), cfg.goal_clamp);
  obs.goal_bearing = rel.norm() > 1e-12 ? wrap_angle(std::atan2(rel.y, rel.x)) : 0.0;
  obs.mount_offset = cfg.mount_offset;
  obs.range_noise_sigma = cfg.range_noise_sigma;
  return obs;
}

struct TrackGains {
  double v_max = 1.0;
  double w_max = 2.0;
  double kappa_slow = 1.0;       // v = v_max / (1 + kappa_slow * |kappa|)
  double max_bearing = kPi / 4;  // pivot in place for targets outside this cone

  bool operator==(const TrackGains&) const = default;
};

// Pure pursuit over the relative waypoint chain. Reconstructing world points
// at the current pose and projecting back to the robot frame cancels, so the
// stored offsets are used directly: the trajectory rides with the robot
// between decisions and is refreshed at the next one.
inline std::pair<double, double> track(const AgentState& state, const Trajectory& traj,
                                       double lookahead, const TrackGains& gains) {
  (void)state;
  if (traj.empty()) return {0.0, 0.0};
  double arc = 0.0;
  Point2 prev{0.0, 0.0};
  Point2 target{traj.waypoints.back().dx, traj.waypoints.back().dy};
  for (const Waypoint& w : traj.waypoints) {
    const Point2 p{w.dx, w.dy};
    arc += distance(prev, p);
    prev = p;
    if (arc >= lookahead) {
      target = p;
      break;
    }
  }
  const double l2 = target.x * target.x + target.y * target.y;
  if (l2 < 1e-12) return {0.0, 0.0};
  // Pure pursuit only behaves for targets inside a forward cone; translating
  // toward an off-axis target drifts the robot sideways into walls. Pivot in
  // place until the heading catches up, then re-enter the pursuit regime.
  if (std::atan2(std::abs(target.y), target.x) > gains.max_bearing)
    return {0.0, target.y >= 0.0 ? gains.w_max : -gains.w_max};
  const double kappa = 2.0 * target.y / l2;
  const double v = std::clamp(gains.v_max / (1.0 + gains.kappa_slow * std::abs(kappa)), 0.0,
                              gains.v_max);
  const double w = std::clamp(kappa * v, -gains.w_max, gains.w_max);
  return {v, w};
}

enum class StepEvent : uint8_t { None, Collision };

// Explicit-Euler unicycle tick. A move into non-navigable space is blocked
// (position unchanged, Collision emitted); rotation always applies.
inline std::pair<AgentState, StepEvent> step(const WorldMap& map, const AgentState& state,
                                             double v_cmd, double w_cmd, double dt,
                                             double radius) {
  if (dt <= 0.0) throw Error("step: dt must be positive");
  AgentState next = state;
  next.v = v_cmd;
  next.w = w_cmd;
  const Point2 cand{state.pose.pos.x + v_cmd * std::cos(state.pose.heading) * dt,
                    state.pose.pos.y + v_cmd * std::sin(state.pose.heading) * dt};
  StepEvent ev = StepEvent::None;
  if (is_navigable(map, cand, radius))
    next.pose.pos = cand;
  else
    ev = StepEvent::Collision;
  next.pose.heading = wrap_angle(state.pose.heading + w_cmd * dt);
  return {next, ev};
}

// Safety target over K+1 world points (index 0 is the current pose):
// minus one per point with clearance below d_safe, plus alpha times the sum
// of consecutive clearance increments. Evaluated term by term.
inline double safety_score(const WorldMap& map, const std::vector<Point2>& waypoints_world,
                           const SafetyConfig& cfg) {
  if (cfg.d_safe <= 0.0) throw Error("safety_score: d_safe must be positive");
  std::vector<double> d(waypoints_world.size());
  for (size_t i = 0; i < waypoints_world.size(); ++i) d[i] = clearance(map, waypoints_world[i]);
  double violations = 0.0;
  for (size_t i = 0; i < d.size(); ++i)
    if (d[i] < cfg.d_safe) violations += 1.0;
  double delta = 0.0;
  for (size_t i = 0; i + 1 < d.size(); ++i) delta += d[i + 1] - d[i];
  return -violations + cfg.alpha * delta;
}

// Expert mixing: execute the policy with probability rho, the expert
// otherwise. The stored supervision label is always the expert's, no matter
// which one ran.
inline std::pair<Trajectory, ActionSource> mix_action(const Trajectory& policy_traj,
                                                      const Trajectory& expert_traj, double rho,
                                                      Rng& rng) {
  if (rho < 0.0 || rho > 1.0) throw Error("mix_action: rho must be in [0, 1]");
  if (draw_bernoulli(rng, rho)) return {policy_traj, ActionSource::Policy};
  return {expert_traj, ActionSource::Expert};
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

struct SimConfig {
  SensorConfig sensor;             // base sensor; per-episode fields overwritten
  double mount_offset_max = 0.3;   // training randomization ranges
  double noise_sigma_max = 0.02;
  bool randomize_sensor = true;    // off for evaluation
  double eval_mount_offset = 0.15;
  TrackGains gains;
  double dt = 0.1;
  int substeps = 5;  // physics ticks per policy decision
  double lookahead = 0.5;
  double radius = 0.25;
  double success_radius = 1.0;
  int max_policy_steps = 600;
  double stall_dist = 0.05;
  int stall_window_ticks = 50;
  double spacing = 0.25;      // expert post-processing
  double search_dist = 0.1;
  int K = 24;
  int F = 5;                  // difficulty floor for sampled episodes
  int sample_tries = 1000;
  SafetyConfig safety;

  bool operator==(const SimConfig&) const = default;
};

struct StepRecord {
  Pose pose_before, pose_after;
  double v_cmd = 0.0, w_cmd = 0.0;  // command issued at the first tick
  bool collided = false;            // any tick of this decision collided
  Status status = Status::Running;  // episode status after the decision
  ActionSource source = ActionSource::Expert;
};

class Environment {
 public:
  Environment(const WorldMap* map, const SimConfig& cfg, Rng rng)
      : map_(map), cfg_(cfg), rng_(std::move(rng)) {
    reset();
  }

  // Samples a fresh episode (and, in training mode, fresh sensor settings)
  // from the environment's own random stream.
  void reset() {
    sensor_ = cfg_.sensor;
    if (cfg_.randomize_sensor) {
      sensor_.mount_offset = draw_uniform(rng_, 0.0, cfg_.mount_offset_max);
      sensor_.range_noise_sigma = draw_uniform(rng_, 0.0, cfg_.noise_sigma_max);
    } else {
      sensor_.mount_offset = cfg_.eval_mount_offset;
      sensor_.range_noise_sigma = 0.0;
    }
    episode_ = sample_episode(*map_, rng_, cfg_.F, cfg_.radius, cfg_.sample_tries);
    begin_episode();
  }

  // Fixed-episode replay (benchmark evaluation): no sensor randomization.
  void reset_to(const EpisodeSpec& spec) {
    sensor_ = cfg_.sensor;
    sensor_.mount_offset = cfg_.eval_mount_offset;
    sensor_.range_noise_sigma = 0.0;
    episode_ = spec;
    begin_episode();
  }

  Observation observe() { return navloop::observe(*map_, state_, episode_.goal, sensor_, rng_); }

  // Fresh expert label from the current pose; pure, so re-planning later from
  // the recorded pose reproduces it exactly.
  Trajectory expert_label() const {
    const RawPath raw = shortest_path(*map_, state_.pose.pos, episode_.goal, cfg_.radius);
    const ProcessedPath processed =
        postprocess_path(*map_, raw, cfg_.spacing, cfg_.search_dist, cfg_.radius);
    return relative_waypoints(processed, state_.pose, cfg_.K);
  }

  double safety_target(const Trajectory& expert) const {
    std::vector<Point2> pts;
    pts.reserve(expert.size() + 1);
    pts.push_back(state_.pose.pos);
    for (const Point2& p : waypoints_to_world(state_.pose, expert)) pts.push_back(p);
    return safety_score(*map_, pts, cfg_.safety);
  }

  // One policy decision: track + step per physics tick, with per-tick
  // success/stall checks and the step budget applied at the end.
  StepRecord step_trajectory(const Trajectory& executed, ActionSource source) {
    StepRecord rec;
    rec.pose_before = state_.pose;
    rec.source = source;
    bool first = true;
    for (int t = 0; t < cfg_.substeps && status_.state == Status::Running; ++t) {
      // Clearance-adaptive lookahead: near walls the far target's chord can
      // cut a corner the waypoint chain walks around, so chase the nearest
      // waypoints instead of a distant carrot.
      const double room = clearance(*map_, state_.pose.pos) - cfg_.radius;
      const double lookahead = std::clamp(2.0 * room, 0.4 * cfg_.lookahead, cfg_.lookahead);
      const auto [v_cmd, w_cmd] = track(state_, executed, lookahead, cfg_.gains);
      if (first) {
        rec.v_cmd = v_cmd;
        rec.w_cmd = w_cmd;
        first = false;
      }
      const Point2 before = state_.pose.pos;
      const auto [next, ev] = step(*map_, state_, v_cmd, w_cmd, cfg_.dt, cfg_.radius);
      state_ = next;
      status_.path_len += distance(before, state_.pose.pos);
      if (ev == StepEvent::Collision) {
        rec.collided = true;
        last_collision_tick_ = tick_;
      }
      update_tick_status();
    }
    ++status_.steps;
    if (status_.state == Status::Running && status_.steps >= cfg_.max_policy_steps)
      status_.state = Status::Timeout;
    rec.pose_after = state_.pose;
    rec.status = status_.state;
    return rec;
  }

  const WorldMap& map() const { return *map_; }
  const SimConfig& config() const { return cfg_; }
  const EpisodeSpec& episode() const { return episode_; }
  const AgentState& state() const { return state_; }
  const EpisodeStatus& status() const { return status_; }
  const SensorConfig& sensor() const { return sensor_; }
  Rng& rng() { return rng_; }

  // Full environment state on one line; doubles travel as bit patterns so the
  // round trip is exact.
  void save_state(std::ostream& os) const {
    os << episode_.scene_id << ' ' << double_to_hex(episode_.start.pos.x) << ' '
       << double_to_hex(episode_.start.pos.y) << ' ' << double_to_hex(episode_.start.heading)
       << ' ' << double_to_hex(episode_.goal.x) << ' ' << double_to_hex(episode_.goal.y) << ' '
       << double_to_hex(episode_.shortest_len) << ' ' << episode_.keypoints << ' '
       << double_to_hex(state_.pose.pos.x) << ' ' << double_to_hex(state_.pose.pos.y) << ' '
       << double_to_hex(state_.pose.heading) << ' ' << double_to_hex(state_.v) << ' '
       << double_to_hex(state_.w) << ' ' << static_cast<int>(status_.state) << ' '
       << status_.steps << ' ' << double_to_hex(status_.path_len) << ' ' << tick_ << ' '
       << last_collision_tick_ << ' ' << double_to_hex(sensor_.mount_offset) << ' '
       << double_to_hex(sensor_.range_noise_sigma) << ' ' << ring_.size();
    for (const Point2& p : ring_)
      os << ' ' << double_to_hex(p.x) << ' ' << double_to_hex(p.y);
    os << ' ' << rng_;
  }

  void load_state(std::istream& is) {
    std::string hex;
    const auto rd = [&] {
      is >> hex;
      return hex_to_double(hex);
    };
    is >> episode_.scene_id;
    episode_.start.pos.x = rd();
    episode_.start.pos.y = rd();
    episode_.start.heading = rd();
    episode_.goal.x = rd();
    episode_.goal.y = rd();
    episode_.shortest_len = rd();
    is >> episode_.keypoints;
    state_.pose.pos.x = rd();
    state_.pose.pos.y = rd();
    state_.pose.heading = rd();
    state_.v = rd();
    state_.w = rd();
    int st;
    is >> st;
    status_.state = static_cast<Status>(st);
    is >> status_.steps;
    status_.path_len = rd();
    is >> tick_ >> last_collision_tick_;
    sensor_ = cfg_.sensor;
    sensor_.mount_offset = rd();
    sensor_.range_noise_sigma = rd();
    size_t rn;
    is >> rn;
    ring_.resize(rn);
    for (Point2& p : ring_) {
      p.x = rd();
      p.y = rd();
    }
    is >> rng_;
    if (!is) throw Error("environment state: parse failure");
  }

 private:
  void begin_episode() {
    state_ = AgentState{episode_.start, 0.0, 0.0};
    status_ = EpisodeStatus{};
    tick_ = 0;
    last_collision_tick_ = std::numeric_limits<int64_t>::min() / 2;
    ring_.assign(static_cast<size_t>(cfg_.stall_window_ticks), episode_.start.pos);
  }

  void update_tick_status() {
    if (distance(state_.pose.pos, episode_.goal) < cfg_.success_radius) {
      status_.state = Status::Success;
    } else if (tick_ >= cfg_.stall_window_ticks) {
      const Point2& ago = ring_[tick_ % cfg_.stall_window_ticks];
      if (distance(ago, state_.pose.pos) <= cfg_.stall_dist) {
        // A stall with a recent collision is a crash; otherwise plain stall.
        status_.state = (tick_ - last_collision_tick_ <= cfg_.stall_window_ticks)
                            ? Status::Collision
                            : Status::Stalled;
      }
    }
    ring_[tick_ % cfg_.stall_window_ticks] = state_.pose.pos;
    ++tick_;
  }

  const WorldMap* map_;
  SimConfig cfg_;
  Rng rng_;
  SensorConfig sensor_;
  EpisodeSpec episode_;
  AgentState state_;
  EpisodeStatus status_;
  int64_t tick_ = 0;
  int64_t last_collision_tick_ = 0;
  std::vector<Point2> ring_;  // positions of the last stall_window ticks
};

struct EnvStepResult {
  StepRecord record;
  bool episode_finished = false;
  EpisodeStatus finished_status;
  EpisodeSpec finished_episode;
};

// Steps every environment with its chosen action; finished environments are
// reported and (optionally) auto-reset from their own random streams.
inline std::vector<EnvStepResult> env_batch_step(
    std::vector<Environment>& envs,
    const std::vector<std::pair<Trajectory, ActionSource>>& actions, bool auto_reset = true,
    int workers = 1) {
  if (envs.size() != actions.size()) throw Error("env_batch_step: one action per environment");
  std::vector<EnvStepResult> out(envs.size());
  parallel_for(static_cast<int>(envs.size()), workers, [&](int i) {
    out[i].record = envs[i].step_trajectory(actions[i].first, actions[i].second);
    if (out[i].record.status != Status::Running) {
      out[i].episode_finished = true;
      out[i].finished_status = envs[i].status();
      out[i].finished_episode = envs[i].episode();
      if (auto_reset) envs[i].reset();
    }
  });
  return out;
}

}  // namespace navloop
