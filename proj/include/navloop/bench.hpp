#pragma once
// Fixed evaluation suites: stratified episode generation over keypoint
// difficulty buckets, SR/SPL scoring of a deployed policy (or the expert, or
// a noise baseline), and side-by-side comparison tables.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
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

// ---------------------------------------------------------------------------
// SPL
// ---------------------------------------------------------------------------

// Standard success-weighted path length term for one episode.
inline double spl_term(bool success, double shortest, double actual) {
  if (shortest <= 0.0) throw Error("spl_term: shortest length must be positive");
  if (actual < 0.0) throw Error("spl_term: actual length must be non-negative");
  return success ? shortest / std::max(shortest, actual) : 0.0;
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

struct Benchmark {
  int version = 1;  // file format version
  uint64_t seed = 0;
  std::vector<EpisodeSpec> episodes;  // ordered; never mutated after generation
};

namespace detail {
inline void append_episode_line(std::string& out, const EpisodeSpec& e) {
  char buf[384];
  std::snprintf(buf, sizeof buf, "episode %s %.17g %.17g %.17g %.17g %.17g %.17g %d\n",
                e.scene_id.c_str(), e.start.pos.x, e.start.pos.y, e.start.heading, e.goal.x,
                e.goal.y, e.shortest_len, e.keypoints);
  out += buf;
}
}  // namespace detail

inline std::string serialize_benchmark(const Benchmark& b) {
  std::string out = "navloop-benchmark " + std::to_string(b.version) + " " +
                    std::to_string(b.seed) + "\n";
  for (const EpisodeSpec& e : b.episodes) detail::append_episode_line(out, e);
  return out;
}

// Identifies the episode content, independent of who generated it; reports
// remember it so mismatched comparisons are rejected.
inline uint64_t benchmark_fingerprint(const Benchmark& b) {
  std::string body;
  for (const EpisodeSpec& e : b.episodes) detail::append_episode_line(body, e);
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : body) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline Benchmark parse_benchmark(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw ParseError("benchmark: empty file", 1);
  ++line_no;
  {
    std::istringstream hs(line);
    std::string tag;
    Benchmark b;
    if (!(hs >> tag >> b.version >> b.seed) || tag != "navloop-benchmark")
      throw ParseError("benchmark: bad header", 1);
    if (b.version != 1) throw ParseError("benchmark: unsupported version", 1);
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      EpisodeSpec e;
      if (!(ls >> tag >> e.scene_id >> e.start.pos.x >> e.start.pos.y >> e.start.heading >>
            e.goal.x >> e.goal.y >> e.shortest_len >> e.keypoints) ||
          tag != "episode")
        throw ParseError("benchmark: bad episode record", line_no);
      b.episodes.push_back(std::move(e));
    }
    return b;
  }
}

struct BenchmarkGenConfig {
  int n_per_scene = 10;
  int f_min = 1;
  int f_max = 5;
  double radius = 0.25;
  int max_tries = 2000;

  bool operator==(const BenchmarkGenConfig&) const = default;
};

// Stratified generation: per scene, the episode count splits evenly across
// keypoint buckets f_min..f_max with the remainder assigned to the hardest
// bucket. A bucket the sampler cannot satisfy is marked dead (logged) and its
// quota shifts to the nearest satisfiable bucket, harder side first.
inline Benchmark generate_benchmark(const std::vector<WorldMap>& maps,
                                    const BenchmarkGenConfig& gen, uint64_t seed,
                                    std::vector<std::string>* log = nullptr) {
  if (maps.empty()) throw Error("generate_benchmark: no maps");
  if (gen.n_per_scene < 1) throw Error("generate_benchmark: n_per_scene must be >= 1");
  if (gen.f_min < 0 || gen.f_max < gen.f_min)
    throw Error("generate_benchmark: bad keypoint range");

  Benchmark bench;
  bench.seed = seed;
  const int buckets = gen.f_max - gen.f_min + 1;
  const int base = gen.n_per_scene / buckets;
  const int rem = gen.n_per_scene % buckets;

  for (size_t si = 0; si < maps.size(); ++si) {
    const WorldMap& map = maps[si];
    auto rng = make_rng({seed, static_cast<uint64_t>(si)});
    std::vector<bool> dead(buckets, false);

    const auto try_bucket = [&](int f) -> std::optional<EpisodeSpec> {
      if (dead[f - gen.f_min]) return std::nullopt;
      try {
        return detail::sample_episode_range(map, rng, f, f, gen.radius, gen.max_tries, 2.0);
      } catch (const SamplingError&) {
        dead[f - gen.f_min] = true;
        if (log)
          log->push_back("scene " + map.scene_id + ": bucket F=" + std::to_string(f) +
                         " unsatisfiable after " + std::to_string(gen.max_tries) + " tries");
        return std::nullopt;
      }
    };

    for (int f = gen.f_min; f <= gen.f_max; ++f) {
      const int quota = base + (f == gen.f_max ? rem : 0);
      for (int q = 0; q < quota; ++q) {
        std::optional<EpisodeSpec> spec = try_bucket(f);
        int landed = f;
        for (int d = 1; !spec && d < buckets; ++d) {
          if (f + d <= gen.f_max && (spec = try_bucket(f + d))) landed = f + d;
          if (!spec && f - d >= gen.f_min && (spec = try_bucket(f - d))) landed = f - d;
        }
        if (!spec)
          throw Error("generate_benchmark: scene " + map.scene_id +
                      ": no keypoint bucket satisfiable");
        if (landed != f && log)
          log->push_back("scene " + map.scene_id + ": episode quota F=" + std::to_string(f) +
                         " shifted to F=" + std::to_string(landed));
        bench.episodes.push_back(std::move(*spec));
      }
    }
  }
  return bench;
}

// Every episode must still hold against the given maps: endpoints navigable,
// path re-plans to the recorded length, keypoint count unchanged.
inline void validate_benchmark(const Benchmark& bench, const std::vector<WorldMap>& maps,
                               double radius) {
  std::map<std::string, const WorldMap*> by_id;
  for (const WorldMap& m : maps) by_id[m.scene_id] = &m;
  for (size_t i = 0; i < bench.episodes.size(); ++i) {
    const EpisodeSpec& e = bench.episodes[i];
    const auto it = by_id.find(e.scene_id);
    if (it == by_id.end())
      throw Error("benchmark: scene '" + e.scene_id + "' not available (episode " +
                  std::to_string(i) + ")");
    const WorldMap& map = *it->second;
    if (!is_navigable(map, e.start.pos, radius) || !is_navigable(map, e.goal, radius))
      throw Error("benchmark: episode " + std::to_string(i) + " endpoints not navigable");
    const RawPath raw = shortest_path(map, e.start.pos, e.goal, radius);
    if (std::abs(raw.length() - e.shortest_len) > 1e-9)
      throw Error("benchmark: episode " + std::to_string(i) + " shortest length drifted");
    if (count_keypoints(raw) != e.keypoints)
      throw Error("benchmark: episode " + std::to_string(i) + " keypoint count drifted");
  }
}

// ---------------------------------------------------------------------------
// Actors
// ---------------------------------------------------------------------------

// An actor maps the current observation to the trajectory handed to the
// tracker. The environment reference is for privileged actors (the expert);
// learned actors must only use obs and rng.
using Actor = std::function<Trajectory(Environment&, const Observation&, Rng&)>;

inline Actor expert_actor() {
  return [](Environment& env, const Observation&, Rng&) { return env.expert_label(); };
}

inline Actor random_actor(double pos_sigma = 1.0, double ang_sigma = 0.5) {
  return [=](Environment& env, const Observation&, Rng& rng) {
    Trajectory t;
    for (int i = 0; i < env.config().K; ++i)
      t.waypoints.push_back({draw_normal(rng, 0.0, pos_sigma), draw_normal(rng, 0.0, pos_sigma),
                             draw_normal(rng, 0.0, ang_sigma)});
    return t;
  };
}

// Deployed pipeline: sample n candidates conditioned on the observation, keep
// the critic's pick. The policy must outlive the returned actor.
inline Actor policy_actor(const Policy& policy, DiffusionSchedule sched, int n_samples) {
  return [&policy, sched = std::move(sched), n_samples](Environment&, const Observation& obs,
                                                        Rng& rng) {
    const auto [cond_full, cond_goalless] = policy.encode(obs);
    const auto trajs = policy.sample_trajectories(cond_full, n_samples, sched, rng);
    return trajs[policy.rank_index(cond_goalless, trajs)];
  };
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class FailureKind { None, Collision, Stalled, Timeout };

inline const char* failure_kind_name(FailureKind k) {
  switch (k) {
    case FailureKind::None: return "none";
    case FailureKind::Collision: return "collision";
    case FailureKind::Stalled: return "stalled";
    case FailureKind::Timeout: return "timeout";
  }
  return "?";
}

inline FailureKind failure_kind_from_name(const std::string& s) {
  if (s == "none") return FailureKind::None;
  if (s == "collision") return FailureKind::Collision;
  if (s == "stalled") return FailureKind::Stalled;
  if (s == "timeout") return FailureKind::Timeout;
  throw Error("report: unknown failure kind '" + s + "'");
}

struct EpisodeResult {
  int index = 0;  // position in the benchmark
  std::string scene_id;
  bool success = false;
  FailureKind failure_kind = FailureKind::None;
  int steps = 0;
  double shortest_len = 0.0;
  double actual_len = 0.0;  // integrated agent displacement
  double spl = 0.0;
};

struct SceneScore {
  std::string scene_id;
  int episodes = 0;
  double sr = 0.0;   // percent
  double spl = 0.0;  // percent
};

struct SuiteReport {
  uint64_t fingerprint = 0;
  std::vector<EpisodeResult> results;  // benchmark order
  std::vector<SceneScore> scenes;      // first-appearance order
  double msr = 0.0;   // unweighted scene mean, percent
  double mspl = 0.0;  // unweighted scene mean, percent
};

struct EvalConfig {
  SimConfig sim;
  int n_samples = 16;
  int workers = 1;
  uint64_t seed = 424242;                     // per-episode streams
  std::vector<std::string> training_scenes;   // refused as held-out violations
};

inline SuiteReport evaluate(const Actor& actor, ActionSource source, const Benchmark& bench,
                            const std::vector<WorldMap>& maps, const EvalConfig& cfg) {
  if (bench.episodes.empty()) throw Error("evaluate: benchmark has no episodes");
  for (const EpisodeSpec& e : bench.episodes)
    for (const std::string& s : cfg.training_scenes)
      if (e.scene_id == s)
        throw Error("evaluate: scene '" + e.scene_id +
                    "' is a training scene; benchmark must be held out");
  validate_benchmark(bench, maps, cfg.sim.radius);

  std::map<std::string, const WorldMap*> by_id;
  for (const WorldMap& m : maps) by_id[m.scene_id] = &m;

  // Evaluation runs the deployed sensor model: fixed mount, zero noise. The
  // keypoint floor is irrelevant here (episodes are replayed, not sampled).
  SimConfig esim = cfg.sim;
  esim.randomize_sensor = false;
  esim.F = 0;

  SuiteReport report;
  report.fingerprint = benchmark_fingerprint(bench);
  report.results.resize(bench.episodes.size());

  const int n = static_cast<int>(bench.episodes.size());
  parallel_for(n, cfg.workers, [&](int i) {
    const EpisodeSpec& spec = bench.episodes[i];
    Environment env(by_id.at(spec.scene_id), esim,
                    make_rng({cfg.seed, 2 * static_cast<uint64_t>(i)}));
    env.reset_to(spec);
    auto actor_rng = make_rng({cfg.seed, 2 * static_cast<uint64_t>(i) + 1});
    while (env.status().state == Status::Running) {
      const Observation obs = env.observe();
      env.step_trajectory(actor(env, obs, actor_rng), source);
    }
    EpisodeResult r;
    r.index = i;
    r.scene_id = spec.scene_id;
    r.success = env.status().state == Status::Success;
    switch (env.status().state) {
      case Status::Collision: r.failure_kind = FailureKind::Collision; break;
      case Status::Stalled: r.failure_kind = FailureKind::Stalled; break;
      case Status::Timeout: r.failure_kind = FailureKind::Timeout; break;
      default: r.failure_kind = FailureKind::None; break;
    }
    r.steps = env.status().steps;
    r.shortest_len = spec.shortest_len;
    r.actual_len = env.status().path_len;
    r.spl = spl_term(r.success, r.shortest_len, r.actual_len);
    report.results[i] = std::move(r);
  });

  // scene scores in first-appearance order
  for (const EpisodeResult& r : report.results) {
    SceneScore* score = nullptr;
    for (SceneScore& s : report.scenes)
      if (s.scene_id == r.scene_id) score = &s;
    if (!score) {
      report.scenes.push_back({r.scene_id, 0, 0.0, 0.0});
      score = &report.scenes.back();
    }
    ++score->episodes;
    score->sr += r.success ? 1.0 : 0.0;
    score->spl += r.spl;
  }
  for (SceneScore& s : report.scenes) {
    s.sr = 100.0 * s.sr / s.episodes;
    s.spl = 100.0 * s.spl / s.episodes;
    report.msr += s.sr;
    report.mspl += s.spl;
  }
  report.msr /= report.scenes.size();
  report.mspl /= report.scenes.size();
  return report;
}

inline SuiteReport evaluate_policy(const Policy& policy, const Benchmark& bench,
                                   const std::vector<WorldMap>& maps, const EvalConfig& cfg) {
  const auto sched =
      DiffusionSchedule::make(policy.config().N, policy.config().beta_min,
                              policy.config().beta_max);
  return evaluate(policy_actor(policy, sched, cfg.n_samples), ActionSource::Policy, bench, maps,
                  cfg);
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline std::string serialize_report(const SuiteReport& r) {
  char buf[384];
  std::snprintf(buf, sizeof buf, "navloop-report 1 fingerprint %016llx\n",
                static_cast<unsigned long long>(r.fingerprint));
  std::string out = buf;
  for (const EpisodeResult& e : r.results) {
    std::snprintf(buf, sizeof buf, "episode %d %s %d %s %d %.17g %.17g %.17g\n", e.index,
                  e.scene_id.c_str(), e.success ? 1 : 0, failure_kind_name(e.failure_kind),
                  e.steps, e.shortest_len, e.actual_len, e.spl);
    out += buf;
  }
  for (const SceneScore& s : r.scenes) {
    std::snprintf(buf, sizeof buf, "scene %s %d %.17g %.17g\n", s.scene_id.c_str(), s.episodes,
                  s.sr, s.spl);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "aggregate %.17g %.17g\n", r.msr, r.mspl);
  out += buf;
  return out;
}

inline SuiteReport parse_report(const std::string& text) {
  std::istringstream is(text);
  std::string line, tag;
  int line_no = 0;
  if (!std::getline(is, line)) throw ParseError("report: empty file", 1);
  ++line_no;
  SuiteReport r;
  {
    std::istringstream hs(line);
    int version = 0;
    std::string fp_tag, fp_hex;
    if (!(hs >> tag >> version >> fp_tag >> fp_hex) || tag != "navloop-report" ||
        version != 1 || fp_tag != "fingerprint")
      throw ParseError("report: bad header", 1);
    r.fingerprint = std::stoull(fp_hex, nullptr, 16);
  }
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "episode") {
      EpisodeResult e;
      int success = 0;
      std::string kind;
      if (!(ls >> e.index >> e.scene_id >> success >> kind >> e.steps >> e.shortest_len >>
            e.actual_len >> e.spl))
        throw ParseError("report: bad episode record", line_no);
      e.success = success != 0;
      e.failure_kind = failure_kind_from_name(kind);
      r.results.push_back(std::move(e));
    } else if (tag == "scene") {
      SceneScore s;
      if (!(ls >> s.scene_id >> s.episodes >> s.sr >> s.spl))
        throw ParseError("report: bad scene record", line_no);
      r.scenes.push_back(std::move(s));
    } else if (tag == "aggregate") {
      if (!(ls >> r.msr >> r.mspl)) throw ParseError("report: bad aggregate record", line_no);
    } else {
      throw ParseError("report: unknown record '" + tag + "'", line_no);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

// Aligned SR/SPL table, one row per method, one column pair per scene plus
// the aggregate; the best value in every column is starred. With exactly two
// methods a signed delta row (second minus first) is appended.
inline std::string compare(const std::vector<std::string>& names,
                           const std::vector<SuiteReport>& reports) {
  if (names.size() != reports.size() || reports.empty())
    throw Error("compare: need one name per report");
  for (const SuiteReport& r : reports) {
    if (r.fingerprint != reports[0].fingerprint)
      throw Error("compare: reports evaluate different benchmark versions");
    if (r.scenes.size() != reports[0].scenes.size())
      throw Error("compare: reports disagree on scene list");
    for (size_t s = 0; s < r.scenes.size(); ++s)
      if (r.scenes[s].scene_id != reports[0].scenes[s].scene_id)
        throw Error("compare: reports disagree on scene list");
  }

  const size_t n_scenes = reports[0].scenes.size();
  // column values: per scene (SR, SPL), then aggregate (mSR, mSPL)
  const auto value = [&](const SuiteReport& r, size_t col, bool spl) {
    if (col < n_scenes) return spl ? r.scenes[col].spl : r.scenes[col].sr;
    return spl ? r.mspl : r.msr;
  };

  size_t name_w = 6;
  for (const std::string& n : names) name_w = std::max(name_w, n.size());

  std::ostringstream os;
  os << std::string(name_w, ' ');
  for (size_t c = 0; c <= n_scenes; ++c) {
    const std::string head = c < n_scenes ? reports[0].scenes[c].scene_id : "mean";
    char buf[64];
    std::snprintf(buf, sizeof buf, " | %14s", head.c_str());
    os << buf;
  }
  os << "\n" << std::string(name_w, ' ');
  for (size_t c = 0; c <= n_scenes; ++c) os << " |     SR    SPL";
  os << "\n";

  for (size_t m = 0; m < reports.size(); ++m) {
    os << names[m] << std::string(name_w - names[m].size(), ' ');
    for (size_t c = 0; c <= n_scenes; ++c) {
      char buf[64];
      for (const bool spl : {false, true}) {
        const double v = value(reports[m], c, spl);
        bool best = true;
        for (const SuiteReport& other : reports)
          if (value(other, c, spl) > v) best = false;
        std::snprintf(buf, sizeof buf, "%s%6.1f%s", spl ? " " : " | ", v, best ? "*" : " ");
        os << buf;
      }
    }
    os << "\n";
  }

  if (reports.size() == 2) {
    const std::string label = "delta";
    os << label << std::string(name_w - label.size(), ' ');
    for (size_t c = 0; c <= n_scenes; ++c) {
      char buf[64];
      for (const bool spl : {false, true}) {
        const double d = value(reports[1], c, spl) - value(reports[0], c, spl);
        std::snprintf(buf, sizeof buf, "%s%+6.1f ", spl ? " " : " | ", d);
        os << buf;
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace navloop
