#include "navloop/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <string>
#include <vector>

#include "navloop/viz.hpp"

namespace navloop {
namespace {

namespace fs = std::filesystem;

constexpr const char* kFixtureMap =
    "cell_size=0.5\n"
    "name=cli-fixture\n"
    "################\n"
    "#..............#\n"
    "#..............#\n"
    "#.....####.....#\n"
    "#.....####.....#\n"
    "#..............#\n"
    "#..............#\n"
    "#....##..##....#\n"
    "#....##..##....#\n"
    "#..............#\n"
    "#..............#\n"
    "################\n";

// Second scene so benchmark suites have two entries.
constexpr const char* kFixtureMapB =
    "cell_size=0.5\n"
    "name=cli-fixture-b\n"
    "################\n"
    "#..............#\n"
    "#...####.......#\n"
    "#...####.......#\n"
    "#..............#\n"
    "#.........###..#\n"
    "#.........###..#\n"
    "#..............#\n"
    "#..####........#\n"
    "#..####........#\n"
    "#..............#\n"
    "################\n";

std::string test_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("navloop_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_file(const std::string& path, const std::string& text) {
  atomic_write_file(path, text);
  return path;
}

// ---------------------------------------------------------------------------
// Config files

TEST(Config, EmptyTextYieldsDefaults) {
  EXPECT_TRUE(parse_app_config("", false) == AppConfig{});
  EXPECT_TRUE(parse_app_config("# only a comment\n\n", false) == AppConfig{});
}

TEST(Config, RoundTripPreservesEveryField) {
  AppConfig a;
  TrainConfig& t = a.trainer;
  t.T = 11;
  t.E = 3;
  t.rho = 0.65;
  t.epochs = 2;
  t.batch_size = 19;
  t.lr = 3.5e-4;
  t.lambda = 0.25;
  t.iterations = 7;
  t.seed = 99;
  t.n_rollout = 5;
  t.checkpoint_every = 3;
  t.workers = 2;
  t.out_dir = "runs/elsewhere";
  t.offline_data = "data/tuples.bin";
  t.resume = true;
  t.scenes = {"maps/a.map", "maps/b.map"};
  SimConfig& s = t.sim;
  s.sensor.rays = 12;
  s.sensor.fov = 1.9;
  s.sensor.max_range = 4.5;
  s.sensor.goal_clamp = 9.0;
  s.mount_offset_max = 0.21;
  s.noise_sigma_max = 0.011;
  s.randomize_sensor = false;
  s.eval_mount_offset = 0.13;
  s.gains.v_max = 0.9;
  s.gains.w_max = 1.7;
  s.gains.kappa_slow = 1.25;
  s.gains.max_bearing = 0.7;
  s.dt = 0.05;
  s.substeps = 4;
  s.lookahead = 0.45;
  s.radius = 0.2;
  s.success_radius = 0.9;
  s.max_policy_steps = 321;
  s.stall_dist = 0.04;
  s.stall_window_ticks = 40;
  s.spacing = 0.2;
  s.search_dist = 0.09;
  s.K = 5;
  s.F = 2;
  s.sample_tries = 900;
  s.safety.d_safe = 0.55;
  s.safety.alpha = 0.12;
  PolicyConfig& p = t.policy;
  p.rays = 12;
  p.K = 5;
  p.feat = 11;
  p.enc_hidden = 13;
  p.den_hidden = 17;
  p.temb = 6;
  p.critic_emb = 9;
  p.critic_hidden = 7;
  p.N = 4;
  p.beta_min = 2e-4;
  p.beta_max = 0.03;
  p.traj_scale = 1.5;
  p.range_scale = 4.5;
  p.goal_scale = 9.0;
  a.bench_maps = {"maps/e1.map", "maps/e2.map"};
  a.bench.n_per_scene = 13;
  a.bench.f_min = 2;
  a.bench.f_max = 4;
  a.bench.radius = 0.22;
  a.bench.max_tries = 777;
  a.eval_samples = 6;
  a.eval_seed = 31337;

  const std::string text = serialize_app_config(a);
  const AppConfig b = parse_app_config(text, /*check_files=*/false);
  EXPECT_TRUE(a == b);
  // Re-serialization is byte-stable.
  EXPECT_EQ(serialize_app_config(b), text);
}

TEST(Config, DefaultsSerializeAndReparseEqual) {
  const AppConfig a;
  const AppConfig b = parse_app_config(serialize_app_config(a), false);
  EXPECT_TRUE(a == b);
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    parse_app_config("[trainer]\nT = 8\nwibble = 3\n", false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("wibble"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
  }
}

TEST(Config, TypeMismatchNamesTheLine) {
  try {
    parse_app_config("[trainer]\nrho = fast\n", false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("rho"), std::string::npos);
  }
  EXPECT_THROW(parse_app_config("[trainer]\nT = 3.5\n", false), ParseError);
  EXPECT_THROW(parse_app_config("[sim]\nrandomize_sensor = maybe\n", false), ParseError);
}

TEST(Config, RangeErrorNamesTheKey) {
  try {
    parse_app_config("[trainer]\nseed = 4\nrho = 1.5\n", false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("rho"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("range"), std::string::npos);
  }
  EXPECT_THROW(parse_app_config("[trainer]\nlr = 0\n", false), ParseError);
  EXPECT_THROW(parse_app_config("[trainer]\nlambda = -0.1\n", false), ParseError);
  EXPECT_THROW(parse_app_config("[trainer]\nE = 0\n", false), ParseError);
}

TEST(Config, StructuralErrorsNameTheLine) {
  EXPECT_THROW(parse_app_config("[nonsense]\n", false), ParseError);
  EXPECT_THROW(parse_app_config("T = 8\n", false), ParseError);  // key before section
  EXPECT_THROW(parse_app_config("[trainer\n", false), ParseError);
  EXPECT_THROW(parse_app_config("[trainer]\njust words\n", false), ParseError);
}

TEST(Config, MissingSceneFileNamesPathAndLine) {
  const std::string dir = test_dir("missing_scene");
  const std::string text = "[trainer]\nscene = " + dir + "/nope.map\n";
  try {
    parse_app_config(text, /*check_files=*/true);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("nope.map"), std::string::npos);
  }
  // Same text parses once the file exists.
  write_file(dir + "/nope.map", kFixtureMap);
  EXPECT_EQ(parse_app_config(text, true).trainer.scenes.size(), 1u);
}

TEST(Config, PaperScalePresetSetsLoopShape) {
  TrainConfig cfg;
  apply_paper_scale(cfg);
  EXPECT_EQ(cfg.E, 256);
  EXPECT_EQ(cfg.T, 128);
  EXPECT_EQ(cfg.batch_size, 2048);
  EXPECT_EQ(cfg.epochs, 10);
  EXPECT_DOUBLE_EQ(cfg.lr, 1e-5);
  EXPECT_DOUBLE_EQ(cfg.rho, 0.8);
}

TEST(Config, CommentsAndBlankLinesIgnored) {
  const AppConfig a = parse_app_config(
      "# leading comment\n"
      "\n"
      "[trainer]   # section comment\n"
      "  T = 9     # trailing comment\n",
      false);
  EXPECT_EQ(a.trainer.T, 9);
}

// ---------------------------------------------------------------------------
// Transcripts and rendering

WorldMap fixture_map() { return load_map(kFixtureMap); }

EpisodeSpec fixture_spec() {
  EpisodeSpec spec;
  spec.scene_id = "cli-fixture";
  spec.start = {{1.0, 1.0}, 0.0};
  spec.goal = {7.0, 4.8};
  return spec;
}

TEST(Viz, EmptyTranscriptRendersMapOnly) {
  const WorldMap map = fixture_map();
  Transcript t;
  t.scene_id = map.scene_id;
  const std::string svg = render_viz(map, t);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("<rect"), std::string::npos);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg.find("<circle"), std::string::npos);
}

// Distance from a point to a polyline, minimized over segments.
double dist_to_polyline(const Point2& p, const std::vector<Point2>& line) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < line.size(); ++i) {
    const Point2 a = line[i - 1], b = line[i];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double u = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + u * dx), p.y - (a.y + u * dy)));
  }
  return best;
}

TEST(Viz, ExpertTranscriptExecutedPathHugsPlannedPath) {
  const WorldMap map = fixture_map();
  SimConfig sim;
  const Transcript t = record_episode(map, fixture_spec(), sim, nullptr, 0, 5);

  ASSERT_GE(t.expert_path.size(), 2u);
  ASSERT_GE(t.executed.size(), 2u);
  EXPECT_TRUE(t.decisions.empty());
  // The tracker re-plans every decision, so the executed poses never stray
  // far from the planned polyline (lookahead chord is the worst case).
  double worst = 0.0;
  for (const Pose& p : t.executed) worst = std::max(worst, dist_to_polyline(p.pos, t.expert_path));
  EXPECT_LT(worst, sim.lookahead);
  // The run actually reached the goal.
  const Point2 last = t.executed.back().pos;
  EXPECT_LT(std::hypot(last.x - t.goal.x, last.y - t.goal.y), sim.success_radius);
}

TEST(Viz, TranscriptRoundTripsThroughText) {
  const WorldMap map = fixture_map();
  const Transcript t = record_episode(map, fixture_spec(), SimConfig{}, nullptr, 0, 5);
  const std::string text = serialize_transcript(t);
  const Transcript u = parse_transcript(text);
  EXPECT_EQ(serialize_transcript(u), text);
  EXPECT_EQ(u.scene_id, t.scene_id);
  EXPECT_EQ(u.executed.size(), t.executed.size());
  EXPECT_EQ(u.expert_path.size(), t.expert_path.size());
}

TEST(Viz, PolicyTranscriptRecordsFansAndRenders) {
  const WorldMap map = fixture_map();
  SimConfig sim;
  sim.K = 3;
  sim.sensor.rays = 6;
  sim.max_policy_steps = 10;  // untrained policy wanders; cap the episode
  auto rng = make_rng({3, 1});
  const Policy policy(tiny_policy_config(), rng);
  const Transcript t = record_episode(map, fixture_spec(), sim, &policy, 4, 5);

  ASSERT_FALSE(t.decisions.empty());
  for (const DecisionTrace& d : t.decisions) {
    ASSERT_EQ(d.fans.size(), 4u);
    for (const FanTrace& f : d.fans) {
      ASSERT_EQ(f.points.size(), 4u);  // pose + K waypoints
      EXPECT_TRUE(std::isfinite(f.value));
    }
  }
  const std::string svg = render_viz(map, t);
  EXPECT_NE(svg.find("rgb("), std::string::npos);
  // Round trip preserves the fans bit-exactly (same serialized bytes).
  EXPECT_EQ(serialize_transcript(parse_transcript(serialize_transcript(t))),
            serialize_transcript(t));
}

TEST(Viz, SameInputsRenderIdenticalBytes) {
  const WorldMap map = fixture_map();
  const Transcript a = record_episode(map, fixture_spec(), SimConfig{}, nullptr, 0, 9);
  const Transcript b = record_episode(map, fixture_spec(), SimConfig{}, nullptr, 0, 9);
  EXPECT_EQ(serialize_transcript(a), serialize_transcript(b));
  VizLayers layers;
  layers.heatmap = true;
  EXPECT_EQ(render_viz(map, a, layers), render_viz(map, b, layers));
}

TEST(Viz, SceneMismatchIsRefused) {
  const WorldMap map = fixture_map();
  Transcript t;
  t.scene_id = "somewhere-else";
  EXPECT_THROW(render_viz(map, t), Error);
}

TEST(Viz, ParseRejectsMalformedTranscripts) {
  EXPECT_THROW(parse_transcript(""), ParseError);
  EXPECT_THROW(parse_transcript("not-a-transcript\n"), ParseError);
  EXPECT_THROW(parse_transcript("navloop-transcript 1\npose 1 2 3\n"), ParseError);  // no scene
  EXPECT_THROW(parse_transcript("navloop-transcript 1\nscene x\nfan 0.5 0\n"), ParseError);
  EXPECT_THROW(parse_transcript("navloop-transcript 1\nscene x\ndecision 0 0 0 2\nfan 0.5 0\n"),
               ParseError);  // missing second fan
  try {
    parse_transcript("navloop-transcript 1\nscene x\nmystery 1 2\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

// ---------------------------------------------------------------------------
// The installed binary, end to end

const char* cli_path() { return NAVLOOP_CLI_PATH; }

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& dir, const std::string& args) {
  const std::string out_path = dir + "/cmd_stdout.txt";
  const std::string err_path = dir + "/cmd_stderr.txt";
  const std::string cmd =
      std::string(cli_path()) + " " + args + " >" + out_path + " 2>" + err_path;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out_path);
  r.err = read_file(err_path);
  return r;
}

// Tiny end-to-end config: scene A for training, scene B held out for the
// benchmark, tiny policy, short episodes.
std::string write_cli_config(const std::string& dir, int iterations,
                             const std::string& extra = "") {
  const std::string scene_a = write_file(dir + "/scene_a.map", kFixtureMap);
  const std::string scene_b = write_file(dir + "/scene_b.map", kFixtureMapB);
  const std::string text =
      "[trainer]\n"
      "T = 4\nE = 2\nepochs = 1\nbatch_size = 8\nlr = 1e-3\n"
      "iterations = " + std::to_string(iterations) + "\n"
      "seed = 7\nn_rollout = 2\ncheckpoint_every = 2\nworkers = 1\n"
      "scene = " + scene_a + "\n" +
      "[sim]\nK = 3\nrays = 6\nF = 1\n"
      "[policy]\n"
      "rays = 6\nK = 3\nfeat = 10\nenc_hidden = 10\nden_hidden = 14\n"
      "temb = 8\ncritic_emb = 8\ncritic_hidden = 10\nN = 5\n"
      "[eval]\nn_samples = 2\n"
      "[bench]\n"
      "map = " + scene_b + "\n"
      "n_per_scene = 8\nf_min = 0\nf_max = 2\nmax_tries = 3000\n" + extra;
  return write_file(dir + "/run.ini", text);
}

TEST(CliSmoke, UsageErrorsExitTwo) {
  const std::string dir = test_dir("usage");
  EXPECT_EQ(run_cli(dir, "").exit_code, 2);
  EXPECT_EQ(run_cli(dir, "frobnicate").exit_code, 2);
  EXPECT_EQ(run_cli(dir, "train").exit_code, 2);  // missing --config
  EXPECT_EQ(run_cli(dir, "train --bogus-flag x").exit_code, 2);
  const std::string cfg = write_cli_config(dir, 2);
  const RunResult r = run_cli(dir, "train --config " + cfg + " --workers two");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("error: usage:"), std::string::npos);
}

TEST(CliSmoke, MissingConfigFileExitsThree) {
  const std::string dir = test_dir("missing_config");
  const RunResult r = run_cli(dir, "train --config " + dir + "/absent.ini");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("absent.ini"), std::string::npos);
}

TEST(CliSmoke, BenchGenEvalPipeline) {
  const std::string dir = test_dir("pipeline");
  const std::string cfg = write_cli_config(dir, 2);
  const std::string bench_path = dir + "/bench.txt";

  const RunResult gen = run_cli(dir, "bench-gen --config " + cfg + " --out " + bench_path +
                                         " --seed 11");
  ASSERT_EQ(gen.exit_code, 0) << gen.err;
  const Benchmark bench = parse_benchmark(read_file(bench_path));
  EXPECT_EQ(bench.episodes.size(), 8u);

  const std::string report_path = dir + "/expert_report.txt";
  const RunResult ev = run_cli(dir, "eval --config " + cfg + " --benchmark " + bench_path +
                                        " --expert --workers 2 --out " + report_path);
  ASSERT_EQ(ev.exit_code, 0) << ev.err;
  const SuiteReport report = parse_report(read_file(report_path));
  EXPECT_EQ(report.results.size(), 8u);
  EXPECT_EQ(report.fingerprint, benchmark_fingerprint(bench));
  EXPECT_DOUBLE_EQ(report.msr, 100.0);  // expert on the easy fixture
}

TEST(CliSmoke, EvalMissingCheckpointExitsThreeNamingPath) {
  const std::string dir = test_dir("missing_ckpt");
  const std::string cfg = write_cli_config(dir, 2);
  const std::string bench_path = dir + "/bench.txt";
  ASSERT_EQ(run_cli(dir, "bench-gen --config " + cfg + " --out " + bench_path).exit_code, 0);
  const RunResult r = run_cli(dir, "eval --config " + cfg + " --benchmark " + bench_path +
                                       " --checkpoint " + dir + "/no_such.bin --out " + dir +
                                       "/r.txt");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("no_such.bin"), std::string::npos);
}

TEST(CliSmoke, TrainThenResumeMatchesUninterrupted) {
  const std::string dir = test_dir("resume");
  const std::string cfg4 = write_cli_config(dir, 4);

  const RunResult full = run_cli(dir, "train --config " + cfg4 + " --out " + dir + "/full");
  ASSERT_EQ(full.exit_code, 0) << full.err;

  // Same run interrupted after iteration 2, then resumed to 4.
  const std::string dir2 = test_dir("resume_b");
  const std::string cfg2 = write_cli_config(dir2, 2);
  const std::string cfg4b = [&] {
    std::string text = read_file(cfg2);
    const std::string from = "iterations = 2", to = "iterations = 4";
    text.replace(text.find(from), from.size(), to);
    return write_file(dir2 + "/run4.ini", text);
  }();
  ASSERT_EQ(run_cli(dir2, "train --config " + cfg2 + " --out " + dir2 + "/part").exit_code, 0);
  ASSERT_EQ(
      run_cli(dir2, "train --config " + cfg4b + " --out " + dir2 + "/part --resume").exit_code,
      0);

  EXPECT_EQ(read_file(dir2 + "/part/metrics.jsonl"), read_file(dir + "/full/metrics.jsonl"));
  EXPECT_EQ(read_file(dir2 + "/part/checkpoint_final.bin"),
            read_file(dir + "/full/checkpoint_final.bin"));
}

TEST(CliSmoke, CollectOfflineDatasetLoadsAndTrains) {
  const std::string dir = test_dir("collect");
  const std::string cfg = write_cli_config(dir, 2);
  const std::string data_path = dir + "/tuples.bin";

  const RunResult col =
      run_cli(dir, "collect-offline --config " + cfg + " --count 40 --out " + data_path);
  ASSERT_EQ(col.exit_code, 0) << col.err;
  const RolloutBuffer buffer = deserialize_buffer(read_file(data_path));
  ASSERT_EQ(buffer.tuples.size(), 40u);
  for (const DataTuple& t : buffer.tuples) EXPECT_TRUE(t.executed_expert);

  // Same config plus offline_data trains from the dataset instead of rollouts.
  std::string text = read_file(cfg);
  text.insert(text.find("[sim]"), "offline_data = " + data_path + "\n");
  const std::string off_cfg = write_file(dir + "/off.ini", text);
  const RunResult tr = run_cli(dir, "train --config " + off_cfg + " --out " + dir + "/bc");
  ASSERT_EQ(tr.exit_code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(dir + "/bc/metrics.jsonl"));
  EXPECT_TRUE(fs::exists(dir + "/bc/checkpoint_final.bin"));
}

TEST(CliSmoke, PlanVizPipelineIsDeterministic) {
  const std::string dir = test_dir("planviz");
  const std::string scene = write_file(dir + "/scene.map", kFixtureMap);
  const std::string plan_path = dir + "/plan.txt";

  const RunResult plan =
      run_cli(dir, "plan --map " + scene + " --out " + plan_path + " 1.0 1.0 7.0 4.8");
  ASSERT_EQ(plan.exit_code, 0) << plan.err;
  const Transcript t = parse_transcript(read_file(plan_path));
  EXPECT_GE(t.expert_path.size(), 2u);

  ASSERT_EQ(run_cli(dir, "viz --map " + scene + " --transcript " + plan_path + " --out " + dir +
                             "/a.svg --heatmap")
                .exit_code,
            0);
  ASSERT_EQ(run_cli(dir, "viz --map " + scene + " --transcript " + plan_path + " --out " + dir +
                             "/b.svg --heatmap")
                .exit_code,
            0);
  const std::string svg = read_file(dir + "/a.svg");
  EXPECT_EQ(svg, read_file(dir + "/b.svg"));
  EXPECT_NE(svg.find("<polyline"), std::string::npos);

  // Unreachable goal (inside the central block) is a runtime failure with a
  // one-line error.
  const RunResult bad = run_cli(dir, "plan --map " + scene + " --out " + plan_path + " 1 1 4 4");
  EXPECT_EQ(bad.exit_code, 4);
  EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
}

TEST(CliSmoke, VizRecordsBenchmarkEpisode) {
  const std::string dir = test_dir("viz_record");
  const std::string cfg = write_cli_config(dir, 2);
  const std::string bench_path = dir + "/bench.txt";
  ASSERT_EQ(run_cli(dir, "bench-gen --config " + cfg + " --out " + bench_path).exit_code, 0);

  const RunResult r = run_cli(dir, "viz --map " + dir + "/scene_b.map --benchmark " + bench_path +
                                       " --episode 0 --config " + cfg + " --out " + dir +
                                       "/ep.svg --record-out " + dir + "/ep.txt");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const Transcript t = parse_transcript(read_file(dir + "/ep.txt"));
  EXPECT_EQ(t.scene_id, "cli-fixture-b");
  EXPECT_GE(t.executed.size(), 2u);

  // All episodes live on scene B; pointing one at scene A is refused.
  const RunResult wrong =
      run_cli(dir, "viz --map " + dir + "/scene_a.map --benchmark " + bench_path +
                       " --episode 0 --out " + dir + "/x.svg");
  EXPECT_EQ(wrong.exit_code, 3);
}

}  // namespace
}  // namespace navloop
