#pragma once
// Online imitation loop: alternating T-step rollout stages across E parallel
// environments (expert labels every step, mixed execution) and multi-epoch
// update stages over the freshly collected buffer. Also the offline
// demonstration collector and behavior-cloning trainer used as the baseline.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "navloop/planner.hpp"
#include "navloop/policy.hpp"
#include "navloop/rng.hpp"
#include "navloop/sim.hpp"
#include "navloop/util.hpp"
#include "navloop/world.hpp"

namespace navloop {

struct TrainConfig {
  int T = 64;  // rollout steps per iteration
  int E = 32;  // parallel environments
  double rho = 0.8;
  int epochs = 5;
  int batch_size = 256;
  double lr = 1e-4;
  double lambda = 1.0;
  int iterations = 60;
  std::uint64_t seed = 1;
  std::vector<std::string> scenes;  // training map files, assigned round-robin
  int n_rollout = 4;                // trajectories sampled + ranked per decision
  int checkpoint_every = 10;
  int workers = 1;
  std::string out_dir = "run";
  bool resume = false;
  std::string offline_data;  // when set, train() runs behavior cloning on it
  SimConfig sim;
  PolicyConfig policy;

  bool operator==(const TrainConfig&) const = default;

  void validate() const {
    if (rho < 0.0 || rho > 1.0) throw Error("config: rho must be in [0, 1]");
    if (T < 1 || E < 1 || epochs < 0 || batch_size < 1 || iterations < 1 || n_rollout < 1 ||
        checkpoint_every < 1 || workers < 1)
      throw Error("config: counts must be >= 1");
    if (lr <= 0.0) throw Error("config: lr must be positive");
    if (lambda < 0.0) throw Error("config: lambda must be >= 0");
    if (scenes.empty() && offline_data.empty()) throw Error("config: no training scenes");
    if (sim.K != policy.K) throw Error("config: sim K and policy K differ");
    if (sim.sensor.rays != policy.rays) throw Error("config: sensor rays and policy rays differ");
  }
};

struct RolloutBuffer {
  std::vector<DataTuple> tuples;
  int iteration_id = 0;
};

struct TrainMetrics {
  int iteration = 0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double rollout_success = 0.0;  // over episodes that finished in the stage
  double mean_safety_target = 0.0;
  double expert_fraction = 0.0;  // executed expert actions / executed actions
  int skipped = 0;               // tuples dropped on planner failure
  double seconds = 0.0;          // wall clock; sidecar only, never in metrics
};

// Deterministic metrics line: everything but wall-clock time, which would
// break byte-for-byte reproducibility and lives in a timing sidecar instead.
inline std::string metrics_json_line(const TrainMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"iteration\":%d,\"actor_loss\":%.17g,\"critic_loss\":%.17g,"
                "\"rollout_success\":%.17g,\"mean_safety_target\":%.17g,"
                "\"expert_fraction\":%.17g,\"skipped\":%d}",
                m.iteration, m.actor_loss, m.critic_loss, m.rollout_success,
                m.mean_safety_target, m.expert_fraction, m.skipped);
  return buf;
}

// ---------------------------------------------------------------------------
// Rollout stage
// ---------------------------------------------------------------------------

struct RolloutStats {
  int finished = 0;
  int succeeded = 0;
  int skipped = 0;
  int expert_executed = 0;
  int total_executed = 0;
  double safety_sum = 0.0;
};

// One T-step data-collection stage. The policy is a frozen snapshot (const):
// every decision in the stage uses the same parameters. Each step: observe
// all envs, sample + critic-rank candidate trajectories, query the expert
// from the current pose, mix per rho, step, and record the tuple with the
// expert label and its safety target. Planner failures (agent shoved into an
// unreachable pocket) mark the episode failed, reset it, and skip the tuple.
inline RolloutBuffer rollout_stage(std::vector<Environment>& envs, const Policy& policy,
                                   const DiffusionSchedule& sched, const TrainConfig& cfg,
                                   Rng& sample_rng, int iteration_id,
                                   RolloutStats* stats = nullptr) {
  const int e = static_cast<int>(envs.size());
  if (e == 0) throw Error("rollout: no environments");
  RolloutBuffer buffer;
  buffer.iteration_id = iteration_id;
  buffer.tuples.reserve(static_cast<size_t>(e) * cfg.T);
  RolloutStats local;

  struct PerEnv {
    Observation obs;
    Trajectory expert;
    double vprime = 0.0;
    Pose pose;
    Point2 goal;
    std::string scene;
    bool skip = false;
  };
  std::vector<PerEnv> pe(e);

  for (int t = 0; t < cfg.T; ++t) {
    // Phase 1 (parallel): sense and label. Each env only touches its own
    // state and random stream.
    parallel_for(e, cfg.workers, [&](int i) {
      pe[i].skip = false;
      pe[i].pose = envs[i].state().pose;
      pe[i].goal = envs[i].episode().goal;
      pe[i].scene = envs[i].episode().scene_id;
      pe[i].obs = envs[i].observe();
      try {
        pe[i].expert = envs[i].expert_label();
        pe[i].vprime = envs[i].safety_target(pe[i].expert);
      } catch (const UnreachableError&) {
        pe[i].skip = true;
      } catch (const PostprocessError&) {
        pe[i].skip = true;
      }
    });

    // Phase 2 (single-threaded): batched policy inference for all live envs.
    std::vector<int> live;
    for (int i = 0; i < e; ++i)
      if (!pe[i].skip) live.push_back(i);

    std::vector<Trajectory> chosen(e);
    MatrixXd cond_full;
    if (!live.empty()) {
      MatrixXd xf(policy.config().obs_dim(), live.size());
      MatrixXd xg(policy.config().obs_dim(), live.size());
      for (size_t j = 0; j < live.size(); ++j) {
        xf.col(j) = policy.obs_input(pe[live[j]].obs, false);
        xg.col(j) = policy.obs_input(pe[live[j]].obs, true);
      }
      cond_full = policy.encode_batch(xf);
      const MatrixXd cond_goalless = policy.encode_batch(xg);
      const auto samples = policy.sample_batch(cond_full, cfg.n_rollout, sched, sample_rng);
      for (size_t j = 0; j < live.size(); ++j)
        chosen[live[j]] = samples[j][policy.rank_index(cond_goalless.col(j), samples[j])];
    }

    // Phase 3 (single-threaded): mix, record tuples.
    std::vector<std::pair<Trajectory, ActionSource>> actions(e);
    for (size_t j = 0; j < live.size(); ++j) {
      const int i = live[j];
      actions[i] = mix_action(chosen[i], pe[i].expert, cfg.rho, envs[i].rng());
      DataTuple tup;
      tup.obs = pe[i].obs;
      tup.goal_robot = rotate(pe[i].goal - pe[i].pose.pos, -pe[i].pose.heading);
      tup.expert = pe[i].expert;
      tup.safety_target = pe[i].vprime;
      tup.cached_features.assign(cond_full.col(j).data(),
                                 cond_full.col(j).data() + cond_full.rows());
      tup.pose = pe[i].pose;
      tup.goal_world = pe[i].goal;
      tup.scene_id = pe[i].scene;
      tup.executed_expert = actions[i].second == ActionSource::Expert;
      buffer.tuples.push_back(std::move(tup));
      local.safety_sum += pe[i].vprime;
      ++local.total_executed;
      if (actions[i].second == ActionSource::Expert) ++local.expert_executed;
    }

    // Phase 4 (parallel): step live envs, reset skipped ones as failures.
    enum { kRunning, kSucceeded, kFailed, kSkipped };
    std::vector<int> outcome(e, kRunning);
    parallel_for(e, cfg.workers, [&](int i) {
      if (pe[i].skip) {
        outcome[i] = kSkipped;
        envs[i].reset();
        return;
      }
      const StepRecord rec = envs[i].step_trajectory(actions[i].first, actions[i].second);
      if (rec.status != Status::Running) {
        outcome[i] = rec.status == Status::Success ? kSucceeded : kFailed;
        envs[i].reset();
      }
    });
    for (int i = 0; i < e; ++i) {
      if (outcome[i] == kSkipped) {
        ++local.skipped;
        ++local.finished;  // a planner dead-end counts as a failed finish
      } else if (outcome[i] != kRunning) {
        ++local.finished;
        if (outcome[i] == kSucceeded) ++local.succeeded;
      }
    }
  }

  if (stats) *stats = local;
  return buffer;
}

// ---------------------------------------------------------------------------
// Update stage
// ---------------------------------------------------------------------------

struct UpdateStats {
  double actor_loss = 0.0;   // means over all updates in the stage
  double critic_loss = 0.0;
  int updates = 0;
};

// Multi-epoch pass over the shuffled buffer: actor loss on cached features,
// critic loss (recomputing the goal-agnostic condition), combined gradient,
// clipped adaptive update. Non-finite losses abort with the offending batch.
inline UpdateStats update_stage(Policy& policy, AdamState& adam, const RolloutBuffer& buffer,
                                const DiffusionSchedule& sched, const TrainConfig& cfg,
                                Rng& rng) {
  if (buffer.tuples.empty()) throw Error("update stage: empty buffer");
  UpdateStats st;
  std::vector<int> idx(buffer.tuples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(idx.size(), off + static_cast<size_t>(cfg.batch_size));
      std::vector<DataTuple> batch;
      batch.reserve(hi - off);
      for (size_t j = off; j < hi; ++j) batch.push_back(buffer.tuples[idx[j]]);

      VectorXd ga, gc;
      const LossReport a = policy.actor_loss(batch, sched, rng, false, &ga);
      const LossReport c = policy.critic_loss(batch, &gc);
      const LossReport tot = total_loss(a, c, cfg.lambda);
      const VectorXd g = ga + cfg.lambda * gc;
      if (!tot.finite || !sgd_update(policy, adam, g, cfg.lr, 1.0)) {
        std::ostringstream os;
        os << "update stage: non-finite loss/gradient (iteration " << buffer.iteration_id
           << ", epoch " << epoch << ", batch at " << off << "; tuple indices";
        for (size_t j = off; j < std::min(hi, off + 8); ++j) os << ' ' << idx[j];
        os << ")";
        throw Error(os.str());
      }
      st.actor_loss += a.actor_loss;
      st.critic_loss += c.critic_loss;
      ++st.updates;
    }
  }
  if (st.updates > 0) {
    st.actor_loss /= st.updates;
    st.critic_loss /= st.updates;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Offline collection (behavior-cloning baseline)
// ---------------------------------------------------------------------------

// Expert-only rollouts: the demonstration dataset records observations along
// the expert's own state distribution. Features are cached with the given
// (initial) policy snapshot, mirroring what the online loop sees at its
// first iteration.
inline RolloutBuffer collect_offline(std::vector<Environment>& envs, const Policy& policy,
                                     const TrainConfig& cfg, int n_tuples,
                                     RolloutStats* stats = nullptr) {
  if (n_tuples < 1) throw Error("collect_offline: n_tuples must be >= 1");
  const int e = static_cast<int>(envs.size());
  if (e == 0) throw Error("collect_offline: no environments");
  RolloutBuffer buffer;
  buffer.iteration_id = 0;
  buffer.tuples.reserve(n_tuples);
  RolloutStats local;

  struct PerEnv {
    Observation obs;
    Trajectory expert;
    double vprime = 0.0;
    Pose pose;
    bool skip = false;
  };
  std::vector<PerEnv> pe(e);

  while (static_cast<int>(buffer.tuples.size()) < n_tuples) {
    parallel_for(e, cfg.workers, [&](int i) {
      pe[i].skip = false;
      pe[i].pose = envs[i].state().pose;
      pe[i].obs = envs[i].observe();
      try {
        pe[i].expert = envs[i].expert_label();
        pe[i].vprime = envs[i].safety_target(pe[i].expert);
      } catch (const UnreachableError&) {
        pe[i].skip = true;
      } catch (const PostprocessError&) {
        pe[i].skip = true;
      }
    });

    std::vector<int> live;
    for (int i = 0; i < e; ++i)
      if (!pe[i].skip) live.push_back(i);
    MatrixXd cond;
    if (!live.empty()) {
      MatrixXd x(policy.config().obs_dim(), live.size());
      for (size_t j = 0; j < live.size(); ++j) x.col(j) = policy.obs_input(pe[live[j]].obs, false);
      cond = policy.encode_batch(x);
    }

    for (size_t j = 0; j < live.size() && static_cast<int>(buffer.tuples.size()) < n_tuples;
         ++j) {
      const int i = live[j];
      DataTuple tup;
      tup.obs = pe[i].obs;
      tup.goal_robot = rotate(envs[i].episode().goal - pe[i].pose.pos, -pe[i].pose.heading);
      tup.expert = pe[i].expert;
      tup.safety_target = pe[i].vprime;
      tup.cached_features.assign(cond.col(j).data(), cond.col(j).data() + cond.rows());
      tup.pose = pe[i].pose;
      tup.goal_world = envs[i].episode().goal;
      tup.scene_id = envs[i].episode().scene_id;
      tup.executed_expert = true;
      buffer.tuples.push_back(std::move(tup));
      local.safety_sum += pe[i].vprime;
      ++local.total_executed;
      ++local.expert_executed;
    }

    enum { kRunning, kSucceeded, kFailed, kSkipped };
    std::vector<int> outcome(e, kRunning);
    parallel_for(e, cfg.workers, [&](int i) {
      if (pe[i].skip) {
        outcome[i] = kSkipped;
        envs[i].reset();
        return;
      }
      const StepRecord rec = envs[i].step_trajectory(pe[i].expert, ActionSource::Expert);
      if (rec.status != Status::Running) {
        outcome[i] = rec.status == Status::Success ? kSucceeded : kFailed;
        envs[i].reset();
      }
    });
    for (int i = 0; i < e; ++i) {
      if (outcome[i] == kSkipped) {
        ++local.skipped;
        ++local.finished;
      } else if (outcome[i] != kRunning) {
        ++local.finished;
        if (outcome[i] == kSucceeded) ++local.succeeded;
      }
    }
  }

  if (stats) *stats = local;
  return buffer;
}

// Re-encode every tuple's cached features under the current parameters.
// The offline trainer calls this each iteration so behavior cloning is not
// handicapped by a stale feature snapshot; the gap to online training then
// isolates the data-distribution effect.
inline void refresh_cached_features(const Policy& policy, std::vector<DataTuple>& tuples) {
  if (tuples.empty()) return;
  const int chunk = 1024;
  for (size_t base = 0; base < tuples.size(); base += chunk) {
    const int n = static_cast<int>(std::min(tuples.size() - base, static_cast<size_t>(chunk)));
    MatrixXd x(policy.config().obs_dim(), n);
    for (int j = 0; j < n; ++j) x.col(j) = policy.obs_input(tuples[base + j].obs, false);
    const MatrixXd cond = policy.encode_batch(x);
    for (int j = 0; j < n; ++j)
      tuples[base + j].cached_features.assign(cond.col(j).data(),
                                              cond.col(j).data() + cond.rows());
  }
}

// ---------------------------------------------------------------------------
// Dataset files (binary, bit-exact doubles)
// ---------------------------------------------------------------------------

namespace detail {
inline void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}
template <typename T>
void put_pod(std::string& out, const T& v) {
  put_bytes(out, &v, sizeof v);
}
template <typename T>
T get_pod(const std::string& s, size_t& pos) {
  if (pos + sizeof(T) > s.size()) throw Error("dataset: truncated");
  T v;
  std::memcpy(&v, s.data() + pos, sizeof v);
  pos += sizeof v;
  return v;
}
}  // namespace detail

inline std::string serialize_buffer(const RolloutBuffer& buffer) {
  std::string out;
  detail::put_pod(out, static_cast<uint32_t>(0x4e4c4453));  // "NLDS"
  detail::put_pod(out, static_cast<uint32_t>(1));
  detail::put_pod(out, static_cast<int32_t>(buffer.iteration_id));
  detail::put_pod(out, static_cast<uint64_t>(buffer.tuples.size()));
  for (const DataTuple& t : buffer.tuples) {
    detail::put_pod(out, static_cast<uint32_t>(t.obs.depth_rays.size()));
    for (double d : t.obs.depth_rays) detail::put_pod(out, d);
    detail::put_pod(out, t.obs.goal_dist);
    detail::put_pod(out, t.obs.goal_bearing);
    detail::put_pod(out, t.obs.mount_offset);
    detail::put_pod(out, t.obs.range_noise_sigma);
    detail::put_pod(out, t.goal_robot.x);
    detail::put_pod(out, t.goal_robot.y);
    detail::put_pod(out, static_cast<uint32_t>(t.expert.size()));
    for (const Waypoint& w : t.expert.waypoints) {
      detail::put_pod(out, w.dx);
      detail::put_pod(out, w.dy);
      detail::put_pod(out, w.dw);
    }
    detail::put_pod(out, t.safety_target);
    detail::put_pod(out, static_cast<uint32_t>(t.cached_features.size()));
    for (double d : t.cached_features) detail::put_pod(out, d);
    detail::put_pod(out, t.pose.pos.x);
    detail::put_pod(out, t.pose.pos.y);
    detail::put_pod(out, t.pose.heading);
    detail::put_pod(out, t.goal_world.x);
    detail::put_pod(out, t.goal_world.y);
    detail::put_pod(out, static_cast<uint32_t>(t.scene_id.size()));
    detail::put_bytes(out, t.scene_id.data(), t.scene_id.size());
    detail::put_pod(out, static_cast<uint8_t>(t.executed_expert ? 1 : 0));
  }
  return out;
}

inline RolloutBuffer deserialize_buffer(const std::string& blob) {
  size_t pos = 0;
  if (detail::get_pod<uint32_t>(blob, pos) != 0x4e4c4453) throw Error("dataset: bad magic");
  if (detail::get_pod<uint32_t>(blob, pos) != 1) throw Error("dataset: unsupported version");
  RolloutBuffer buffer;
  buffer.iteration_id = detail::get_pod<int32_t>(blob, pos);
  const uint64_t count = detail::get_pod<uint64_t>(blob, pos);
  buffer.tuples.resize(count);
  for (DataTuple& t : buffer.tuples) {
    t.obs.depth_rays.resize(detail::get_pod<uint32_t>(blob, pos));
    for (double& d : t.obs.depth_rays) d = detail::get_pod<double>(blob, pos);
    t.obs.goal_dist = detail::get_pod<double>(blob, pos);
    t.obs.goal_bearing = detail::get_pod<double>(blob, pos);
    t.obs.mount_offset = detail::get_pod<double>(blob, pos);
    t.obs.range_noise_sigma = detail::get_pod<double>(blob, pos);
    t.goal_robot.x = detail::get_pod<double>(blob, pos);
    t.goal_robot.y = detail::get_pod<double>(blob, pos);
    t.expert.waypoints.resize(detail::get_pod<uint32_t>(blob, pos));
    for (Waypoint& w : t.expert.waypoints) {
      w.dx = detail::get_pod<double>(blob, pos);
      w.dy = detail::get_pod<double>(blob, pos);
      w.dw = detail::get_pod<double>(blob, pos);
    }
    t.safety_target = detail::get_pod<double>(blob, pos);
    t.cached_features.resize(detail::get_pod<uint32_t>(blob, pos));
    for (double& d : t.cached_features) d = detail::get_pod<double>(blob, pos);
    t.pose.pos.x = detail::get_pod<double>(blob, pos);
    t.pose.pos.y = detail::get_pod<double>(blob, pos);
    t.pose.heading = detail::get_pod<double>(blob, pos);
    t.goal_world.x = detail::get_pod<double>(blob, pos);
    t.goal_world.y = detail::get_pod<double>(blob, pos);
    const uint32_t slen = detail::get_pod<uint32_t>(blob, pos);
    if (pos + slen > blob.size()) throw Error("dataset: truncated");
    t.scene_id.assign(blob.data() + pos, slen);
    pos += slen;
    t.executed_expert = detail::get_pod<uint8_t>(blob, pos) != 0;
  }
  return buffer;
}

// ---------------------------------------------------------------------------
// Full training runs
// ---------------------------------------------------------------------------

struct TrainHooks {
  // called after every rollout stage, before the update, with the fresh buffer
  std::function<void(int iteration, const RolloutBuffer&)> on_buffer;
};

struct TrainResult {
  Policy policy;
  std::vector<TrainMetrics> metrics;
};

namespace detail {

inline std::string checkpoint_path(const std::string& dir, int completed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint_%06d.bin", completed);
  return dir + "/" + buf;
}

inline std::vector<WorldMap> load_scenes(const std::vector<std::string>& paths) {
  std::vector<WorldMap> maps;
  maps.reserve(paths.size());
  for (const std::string& p : paths) {
    try {
      maps.push_back(load_map(read_file(p)));
    } catch (const Error& e) {
      throw Error("scene " + p + ": " + e.what());
    }
  }
  return maps;
}

inline std::vector<Environment> make_envs(const TrainConfig& cfg,
                                          const std::vector<WorldMap>& maps) {
  std::vector<Environment> envs;
  envs.reserve(cfg.E);
  for (int i = 0; i < cfg.E; ++i)
    envs.emplace_back(&maps[i % maps.size()], cfg.sim,
                      make_rng({cfg.seed, 1000 + static_cast<uint64_t>(i)}));
  return envs;
}

// Everything needed to restart mid-run: completed iterations, optimizer
// moments, both trainer streams, and each environment's full state. Saved
// atomically next to the matching checkpoint.
inline void save_trainer_state(const std::string& path, int completed, const AdamState& adam,
                               const Rng& sample_rng, const Rng& update_rng,
                               const std::vector<Environment>& envs) {
  std::ostringstream os;
  os << "navloop-trainer-state 1\n";
  os << "iteration " << completed << "\n";
  os << "adam_t " << adam.t << "\n";
  os << "adam_m " << adam.m.size();
  for (int i = 0; i < adam.m.size(); ++i) os << ' ' << double_to_hex(adam.m[i]);
  os << "\nadam_v " << adam.v.size();
  for (int i = 0; i < adam.v.size(); ++i) os << ' ' << double_to_hex(adam.v[i]);
  os << "\nsample_rng " << sample_rng << "\n";
  os << "update_rng " << update_rng << "\n";
  os << "envs " << envs.size() << "\n";
  for (const Environment& env : envs) {
    env.save_state(os);
    os << "\n";
  }
  atomic_write_file(path, os.str());
}

inline int load_trainer_state(const std::string& path, AdamState& adam, Rng& sample_rng,
                              Rng& update_rng, std::vector<Environment>& envs) {
  std::istringstream is(read_file(path));
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "navloop-trainer-state" || version != 1)
    throw Error("trainer state: unrecognized header in " + path);
  int completed = 0;
  is >> tag >> completed;
  is >> tag >> adam.t;
  int64_t n = 0;
  std::string hex;
  is >> tag >> n;
  adam.m.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    is >> hex;
    adam.m[i] = hex_to_double(hex);
  }
  is >> tag >> n;
  adam.v.resize(n);
  for (int64_t i = 0; i < n; ++i) {
    is >> hex;
    adam.v[i] = hex_to_double(hex);
  }
  is >> tag >> sample_rng;
  is >> tag >> update_rng;
  size_t ne = 0;
  is >> tag >> ne;
  if (ne != envs.size()) throw Error("trainer state: environment count mismatch");
  for (Environment& env : envs) env.load_state(is);
  if (!is) throw Error("trainer state: parse failure in " + path);
  return completed;
}

inline void write_metrics_files(const std::string& dir, const std::vector<TrainMetrics>& rows) {
  std::string jsonl, timing = "[";
  for (size_t i = 0; i < rows.size(); ++i) {
    jsonl += metrics_json_line(rows[i]);
    jsonl += "\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s{\"iteration\":%d,\"seconds\":%.3f}",
                  i == 0 ? "" : ",", rows[i].iteration, rows[i].seconds);
    timing += buf;
  }
  timing += "]\n";
  atomic_write_file(dir + "/metrics.jsonl", jsonl);
  atomic_write_file(dir + "/metrics.timing.json", timing);
}

// Keep the verbatim first `completed` metric lines so a resumed run's final
// metrics file is byte-identical to an uninterrupted one.
inline std::vector<TrainMetrics> reload_metrics(const std::string& dir, int completed) {
  std::vector<TrainMetrics> rows;
  std::istringstream is(read_file(dir + "/metrics.jsonl"));
  std::string line;
  while (static_cast<int>(rows.size()) < completed && std::getline(is, line)) {
    TrainMetrics m;
    // minimal parse of our own fixed-order format
    if (std::sscanf(line.c_str(),
                    "{\"iteration\":%d,\"actor_loss\":%lg,\"critic_loss\":%lg,"
                    "\"rollout_success\":%lg,\"mean_safety_target\":%lg,"
                    "\"expert_fraction\":%lg,\"skipped\":%d}",
                    &m.iteration, &m.actor_loss, &m.critic_loss, &m.rollout_success,
                    &m.mean_safety_target, &m.expert_fraction, &m.skipped) != 7)
      throw Error("metrics: unparsable line in " + dir + "/metrics.jsonl");
    rows.push_back(m);
  }
  if (static_cast<int>(rows.size()) != completed)
    throw Error("metrics: expected " + std::to_string(completed) + " rows to resume from");
  return rows;
}

}  // namespace detail

// The online loop. Writes checkpoint_000000.bin before training, a checkpoint
// + trainer state every `checkpoint_every` iterations, metrics after every
// iteration, and checkpoint_final.bin at the end. With cfg.resume, continues
// from the last saved state and reproduces exactly what the uninterrupted run
// would have written.
inline TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (!cfg.offline_data.empty()) throw Error("train: use train_offline for offline data");
  std::filesystem::create_directories(cfg.out_dir);
  const std::vector<WorldMap> maps = detail::load_scenes(cfg.scenes);
  std::vector<Environment> envs = detail::make_envs(cfg, maps);

  auto policy_rng = make_rng({cfg.seed, 1});
  Policy policy(cfg.policy, policy_rng);
  const auto sched = DiffusionSchedule::make(cfg.policy.N, cfg.policy.beta_min,
                                             cfg.policy.beta_max);
  AdamState adam(policy.param_count());
  auto sample_rng = make_rng({cfg.seed, 2});
  auto update_rng = make_rng({cfg.seed, 3});
  std::vector<TrainMetrics> rows;

  int start = 0;
  const std::string state_path = cfg.out_dir + "/trainer_state.txt";
  if (cfg.resume && std::filesystem::exists(state_path)) {
    start = detail::load_trainer_state(state_path, adam, sample_rng, update_rng, envs);
    policy = Policy::load_checkpoint(detail::checkpoint_path(cfg.out_dir, start));
    if (!(policy.config() == cfg.policy))
      throw Error("resume: checkpoint policy config does not match the run config");
    if (start > 0) rows = detail::reload_metrics(cfg.out_dir, start);
  } else {
    policy.save_checkpoint(detail::checkpoint_path(cfg.out_dir, 0));
    detail::save_trainer_state(state_path, 0, adam, sample_rng, update_rng, envs);
  }

  for (int it = start; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    RolloutStats rstats;
    const RolloutBuffer buffer =
        rollout_stage(envs, policy, sched, cfg, sample_rng, it, &rstats);
    if (static_cast<int>(buffer.tuples.size()) + rstats.skipped != cfg.E * cfg.T)
      throw Error("rollout: tuple conservation violated");
    if (hooks.on_buffer) hooks.on_buffer(it, buffer);
    const UpdateStats ustats = update_stage(policy, adam, buffer, sched, cfg, update_rng);

    TrainMetrics m;
    m.iteration = it;
    m.actor_loss = ustats.actor_loss;
    m.critic_loss = ustats.critic_loss;
    m.rollout_success =
        rstats.finished > 0 ? static_cast<double>(rstats.succeeded) / rstats.finished : 0.0;
    m.mean_safety_target = buffer.tuples.empty()
                               ? 0.0
                               : rstats.safety_sum / static_cast<double>(buffer.tuples.size());
    m.expert_fraction = rstats.total_executed > 0
                            ? static_cast<double>(rstats.expert_executed) / rstats.total_executed
                            : 0.0;
    m.skipped = rstats.skipped;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(m);
    detail::write_metrics_files(cfg.out_dir, rows);

    const int completed = it + 1;
    if (completed % cfg.checkpoint_every == 0 || completed == cfg.iterations) {
      policy.save_checkpoint(detail::checkpoint_path(cfg.out_dir, completed));
      detail::save_trainer_state(state_path, completed, adam, sample_rng, update_rng, envs);
    }
  }

  policy.save_checkpoint(cfg.out_dir + "/checkpoint_final.bin");
  return {std::move(policy), std::move(rows)};
}

// Behavior cloning on a fixed demonstration buffer: the same update stage and
// budget as the online loop, but the data never changes. Features are
// re-cached from the current parameters every iteration so the comparison
// isolates where the data came from, not feature staleness.
inline TrainResult train_offline(const TrainConfig& cfg, RolloutBuffer buffer,
                                 const TrainHooks& hooks = {}) {
  cfg.validate();
  if (buffer.tuples.empty()) throw Error("train_offline: empty buffer");
  std::filesystem::create_directories(cfg.out_dir);
  auto policy_rng = make_rng({cfg.seed, 1});
  Policy policy(cfg.policy, policy_rng);
  const auto sched = DiffusionSchedule::make(cfg.policy.N, cfg.policy.beta_min,
                                             cfg.policy.beta_max);
  AdamState adam(policy.param_count());
  auto update_rng = make_rng({cfg.seed, 3});
  std::vector<TrainMetrics> rows;

  policy.save_checkpoint(detail::checkpoint_path(cfg.out_dir, 0));
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    refresh_cached_features(policy, buffer.tuples);
    buffer.iteration_id = it;
    if (hooks.on_buffer) hooks.on_buffer(it, buffer);
    const UpdateStats ustats = update_stage(policy, adam, buffer, sched, cfg, update_rng);
    TrainMetrics m;
    m.iteration = it;
    m.actor_loss = ustats.actor_loss;
    m.critic_loss = ustats.critic_loss;
    m.expert_fraction = 1.0;  // demonstrations are all expert
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(m);
    detail::write_metrics_files(cfg.out_dir, rows);
  }
  policy.save_checkpoint(cfg.out_dir + "/checkpoint_final.bin");
  return {std::move(policy), std::move(rows)};
}

}  // namespace navloop
