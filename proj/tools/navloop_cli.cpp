// Command-line front end: train, eval, plan, bench-gen, collect-offline, viz.
//
// Exit codes: 0 success, 2 usage error, 3 data/file error (unreadable or
// malformed inputs), 4 runtime failure. Errors print as a single
// `error: <message>` line on stderr; all outputs are written atomically.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "navloop/bench.hpp"
#include "navloop/config.hpp"
#include "navloop/trainer.hpp"
#include "navloop/viz.hpp"

namespace {

using namespace navloop;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const char kUsage[] =
    "usage: navloop <command> [options]\n"
    "\n"
    "commands:\n"
    "  train            run the training loop (online, or offline when the\n"
    "                   config sets offline_data)\n"
    "  collect-offline  record an expert demonstration dataset\n"
    "  bench-gen        generate a benchmark episode suite\n"
    "  eval             score a checkpoint (or the expert) on a benchmark\n"
    "  plan             plan one expert path and write it as a transcript\n"
    "  viz              render a transcript (or record one) to SVG\n"
    "\n"
    "options:\n"
    "  --config PATH      run configuration file\n"
    "  --seed N           override the config seed\n"
    "  --out PATH         output directory (train) or file (everything else)\n"
    "  --resume           continue train from the saved state in --out\n"
    "  --paper-scale      full-scale loop shape (E=256 T=128 batch=2048\n"
    "                     epochs=10 lr=1e-5 rho=0.8)\n"
    "  --checkpoint PATH  policy checkpoint (eval, viz)\n"
    "  --benchmark PATH   benchmark file (eval, viz)\n"
    "  --workers N        worker threads (default: hardware concurrency)\n"
    "  --expert           evaluate the expert planner instead of a checkpoint\n"
    "  --count N          tuples to record (collect-offline; default E*T)\n"
    "  --map PATH         scene map (plan, viz)\n"
    "  --episode N        benchmark episode index (viz)\n"
    "  --transcript PATH  transcript to render (viz)\n"
    "  --record-out PATH  also save the recorded transcript (viz)\n"
    "  --samples N        candidates per decision (viz; default 8)\n"
    "  --heatmap          shade free space by obstacle clearance (viz)\n";

struct Args {
  std::map<std::string, std::string> opt;
  std::set<std::string> flag;
  std::vector<std::string> pos;

  bool has(const std::string& k) const { return opt.count(k) || flag.count(k); }

  std::string str(const std::string& k) const {
    auto it = opt.find(k);
    if (it == opt.end()) throw UsageError("missing required option --" + k);
    return it->second;
  }

  long long integer(const std::string& k) const {
    const std::string v = str(k);
    size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != v.size()) throw UsageError("--" + k + " expects an integer, got '" + v + "'");
    return out;
  }

  double number_pos(size_t i) const {
    size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(pos[i], &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != pos[i].size())
      throw UsageError("expected a number, got '" + pos[i] + "'");
    return out;
  }
};

Args parse_args(int argc, char** argv) {
  static const std::set<std::string> kValueOpts = {
      "config", "seed",    "out",     "checkpoint", "benchmark",  "workers",
      "count",  "map",     "episode", "transcript", "record-out", "samples"};
  static const std::set<std::string> kFlags = {"resume", "paper-scale", "expert", "heatmap"};

  Args a;
  for (int i = 2; i < argc; ++i) {
    std::string s = argv[i];
    if (s.rfind("--", 0) == 0) {
      const std::string name = s.substr(2);
      if (kFlags.count(name)) {
        a.flag.insert(name);
      } else if (kValueOpts.count(name)) {
        if (i + 1 >= argc) throw UsageError("--" + name + " expects a value");
        a.opt[name] = argv[++i];
      } else {
        throw UsageError("unknown option --" + name);
      }
    } else {
      a.pos.push_back(std::move(s));
    }
  }
  return a;
}

// Anything that fails while reading or parsing an input file is a data error.
template <typename F>
auto load_or_data_error(const std::string& what, F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

AppConfig load_config(const Args& a) {
  const std::string path = a.str("config");
  return load_or_data_error("config " + path,
                            [&] { return load_app_config(path); });
}

void apply_train_overrides(const Args& a, TrainConfig& cfg) {
  if (a.has("seed")) cfg.seed = static_cast<uint64_t>(a.integer("seed"));
  if (a.has("out")) cfg.out_dir = a.str("out");
  if (a.has("workers")) cfg.workers = static_cast<int>(a.integer("workers"));
  if (a.flag.count("resume")) cfg.resume = true;
  if (a.flag.count("paper-scale")) apply_paper_scale(cfg);
  if (cfg.workers < 1) cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<WorldMap> load_map_files(const std::vector<std::string>& paths) {
  std::vector<WorldMap> maps;
  for (const std::string& p : paths)
    maps.push_back(load_or_data_error("map " + p, [&] { return load_map(read_file(p)); }));
  return maps;
}

int cmd_train(const Args& a) {
  AppConfig app = load_config(a);
  TrainConfig& cfg = app.trainer;
  apply_train_overrides(a, cfg);
  load_or_data_error("config", [&] { cfg.validate(); return 0; });

  const TrainResult result = [&] {
    if (cfg.offline_data.empty()) return train(cfg);
    RolloutBuffer buffer = load_or_data_error("dataset " + cfg.offline_data, [&] {
      return deserialize_buffer(read_file(cfg.offline_data));
    });
    return train_offline(cfg, std::move(buffer));
  }();
  const TrainMetrics& last = result.metrics.back();
  std::printf("train: %d iterations, final actor loss %.6g, critic loss %.6g, "
              "rollout success %.3f -> %s\n",
              static_cast<int>(result.metrics.size()), last.actor_loss, last.critic_loss,
              last.rollout_success, cfg.out_dir.c_str());
  return 0;
}

int cmd_collect_offline(const Args& a) {
  AppConfig app = load_config(a);
  TrainConfig& cfg = app.trainer;
  apply_train_overrides(a, cfg);
  load_or_data_error("config", [&] { cfg.validate(); return 0; });
  const std::string out = a.str("out");
  const int n = a.has("count") ? static_cast<int>(a.integer("count")) : cfg.E * cfg.T;
  if (n < 1) throw UsageError("--count must be >= 1");

  const std::vector<WorldMap> maps =
      load_or_data_error("scenes", [&] { return detail::load_scenes(cfg.scenes); });
  std::vector<Environment> envs = detail::make_envs(cfg, maps);
  auto policy_rng = make_rng({cfg.seed, 1});
  const Policy policy(cfg.policy, policy_rng);

  RolloutStats stats;
  const RolloutBuffer buffer = collect_offline(envs, policy, cfg, n, &stats);
  atomic_write_file(out, serialize_buffer(buffer));
  std::printf("collect-offline: wrote %zu tuples (%d episodes finished, %d skipped) -> %s\n",
              buffer.tuples.size(), stats.finished, stats.skipped, out.c_str());
  return 0;
}

int cmd_bench_gen(const Args& a) {
  AppConfig app = load_config(a);
  const std::string out = a.str("out");
  const uint64_t seed =
      a.has("seed") ? static_cast<uint64_t>(a.integer("seed")) : app.trainer.seed;
  if (app.bench_maps.empty())
    throw DataError("config: [bench] lists no map files");
  const std::vector<WorldMap> maps = load_map_files(app.bench_maps);

  std::vector<std::string> log;
  const Benchmark bench = generate_benchmark(maps, app.bench, seed, &log);
  for (const std::string& line : log) std::printf("bench-gen: %s\n", line.c_str());
  atomic_write_file(out, serialize_benchmark(bench));
  std::printf("bench-gen: %zu episodes across %zu scenes -> %s\n", bench.episodes.size(),
              maps.size(), out.c_str());
  return 0;
}

int cmd_eval(const Args& a) {
  AppConfig app = load_config(a);
  const std::string bench_path = a.str("benchmark");
  const std::string out = a.str("out");

  const Benchmark bench = load_or_data_error(
      "benchmark " + bench_path, [&] { return parse_benchmark(read_file(bench_path)); });
  if (app.bench_maps.empty())
    throw DataError("config: [bench] lists no map files");
  const std::vector<WorldMap> maps = load_map_files(app.bench_maps);

  EvalConfig ecfg;
  ecfg.sim = app.trainer.sim;
  ecfg.n_samples = a.has("samples") ? static_cast<int>(a.integer("samples")) : app.eval_samples;
  ecfg.seed = a.has("seed") ? static_cast<uint64_t>(a.integer("seed")) : app.eval_seed;
  ecfg.workers = a.has("workers") ? static_cast<int>(a.integer("workers"))
                                  : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  for (const WorldMap& m :
       load_or_data_error("scenes", [&] { return detail::load_scenes(app.trainer.scenes); }))
    ecfg.training_scenes.push_back(m.scene_id);

  SuiteReport report;
  if (a.flag.count("expert")) {
    report = evaluate(expert_actor(), ActionSource::Expert, bench, maps, ecfg);
  } else {
    const std::string ckpt = a.str("checkpoint");
    const Policy policy = load_or_data_error("checkpoint " + ckpt,
                                             [&] { return Policy::load_checkpoint(ckpt); });
    report = evaluate_policy(policy, bench, maps, ecfg);
  }
  atomic_write_file(out, serialize_report(report));
  std::printf("eval: mSR %.1f mSPL %.1f over %zu episodes -> %s\n", report.msr, report.mspl,
              report.results.size(), out.c_str());
  return 0;
}

int cmd_plan(const Args& a) {
  const std::string map_path = a.str("map");
  const std::string out = a.str("out");
  if (a.pos.size() != 4)
    throw UsageError("plan expects four positional numbers: start-x start-y goal-x goal-y");
  SimConfig sim;
  if (a.has("config")) sim = load_config(a).trainer.sim;
  const WorldMap map =
      load_or_data_error("map " + map_path, [&] { return load_map(read_file(map_path)); });

  const Point2 start{a.number_pos(0), a.number_pos(1)};
  const Point2 goal{a.number_pos(2), a.number_pos(3)};
  const RawPath raw = shortest_path(map, start, goal, sim.radius);
  const ProcessedPath processed =
      postprocess_path(map, raw, sim.spacing, sim.search_dist, sim.radius);

  Transcript t;
  t.scene_id = map.scene_id;
  t.has_goal = true;
  t.goal = goal;
  t.expert_path = processed.points;
  t.executed.push_back({start, std::atan2(goal.y - start.y, goal.x - start.x)});
  atomic_write_file(out, serialize_transcript(t));
  std::printf("plan: %.3f m over %zu points (%d keypoints) -> %s\n", processed.length(),
              processed.points.size(), count_keypoints(raw), out.c_str());
  return 0;
}

int cmd_viz(const Args& a) {
  const std::string map_path = a.str("map");
  const std::string out = a.str("out");
  const WorldMap map =
      load_or_data_error("map " + map_path, [&] { return load_map(read_file(map_path)); });

  Transcript t;
  if (a.has("transcript")) {
    if (a.has("benchmark"))
      throw UsageError("give either --transcript or --benchmark, not both");
    const std::string tp = a.str("transcript");
    t = load_or_data_error("transcript " + tp, [&] { return parse_transcript(read_file(tp)); });
  } else {
    const std::string bench_path = a.str("benchmark");
    const Benchmark bench = load_or_data_error(
        "benchmark " + bench_path, [&] { return parse_benchmark(read_file(bench_path)); });
    const long long idx = a.integer("episode");
    if (idx < 0 || idx >= static_cast<long long>(bench.episodes.size()))
      throw UsageError("--episode out of range [0, " + std::to_string(bench.episodes.size()) +
                       ")");
    const EpisodeSpec& spec = bench.episodes[static_cast<size_t>(idx)];
    if (spec.scene_id != map.scene_id)
      throw DataError("episode " + std::to_string(idx) + " is on scene '" + spec.scene_id +
                      "', not map scene '" + map.scene_id + "'");
    SimConfig sim;
    if (a.has("config")) sim = load_config(a).trainer.sim;
    std::optional<Policy> policy;
    if (a.has("checkpoint")) {
      const std::string ckpt = a.str("checkpoint");
      policy = load_or_data_error("checkpoint " + ckpt,
                                  [&] { return Policy::load_checkpoint(ckpt); });
    }
    const int n_samples = a.has("samples") ? static_cast<int>(a.integer("samples")) : 8;
    const uint64_t seed = a.has("seed") ? static_cast<uint64_t>(a.integer("seed")) : 7;
    t = record_episode(map, spec, sim, policy ? &*policy : nullptr, n_samples, seed);
    if (a.has("record-out")) atomic_write_file(a.str("record-out"), serialize_transcript(t));
  }

  VizLayers layers;
  layers.heatmap = a.flag.count("heatmap") > 0;
  const std::string svg = render_viz(map, t, layers);
  atomic_write_file(out, svg);
  std::printf("viz: wrote %zu bytes -> %s\n", svg.size(), out.c_str());
  return 0;
}

int run(int argc, char** argv) {
  if (argc < 2) {
    std::fputs(kUsage, stderr);
    return 2;
  }
  const std::string cmd = argv[1];
  const Args a = parse_args(argc, argv);
  if (cmd == "train") return cmd_train(a);
  if (cmd == "collect-offline") return cmd_collect_offline(a);
  if (cmd == "bench-gen") return cmd_bench_gen(a);
  if (cmd == "eval") return cmd_eval(a);
  if (cmd == "plan") return cmd_plan(a);
  if (cmd == "viz") return cmd_viz(a);
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    std::fputs(kUsage, stdout);
    return 0;
  }
  throw UsageError("unknown command '" + cmd + "'");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 3;
  } catch (const navloop::ParseError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 4;
  }
}
