#pragma once
// Plain-text run configuration: `key = value` lines under [trainer], [sim],
// [policy], [eval] and [bench] sections. Defaults apply to anything omitted;
// unknown keys are rejected with their line number. The serializer emits the
// full effective config, and parsing that output reproduces the config
// exactly (doubles travel as shortest round-trip decimals).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "navloop/bench.hpp"
#include "navloop/trainer.hpp"

namespace navloop {

struct AppConfig {
  TrainConfig trainer;
  std::vector<std::string> bench_maps;  // held-out scenes for bench-gen/eval
  BenchmarkGenConfig bench;
  int eval_samples = 16;
  uint64_t eval_seed = 424242;

  bool operator==(const AppConfig&) const = default;
};

// The paper-scale preset: full-size loop shape, desk defaults elsewhere.
inline void apply_paper_scale(TrainConfig& cfg) {
  cfg.E = 256;
  cfg.T = 128;
  cfg.batch_size = 2048;
  cfg.epochs = 10;
  cfg.lr = 1e-5;
  cfg.rho = 0.8;
}

namespace detail {

struct ConfigCursor {
  int line = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("config: " + (key.empty() ? msg : key + ": " + msg), line);
  }

  double num(const std::string& v) const {
    size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + v + "'");
    }
    if (used != v.size()) fail("expected a number, got '" + v + "'");
    return out;
  }

  long long integer(const std::string& v) const {
    size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail("expected an integer, got '" + v + "'");
    return out;
  }

  int count(const std::string& v, long long lo = 1,
            long long hi = std::numeric_limits<int>::max()) const {
    const long long n = integer(v);
    if (n < lo || n > hi)
      fail("out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(n);
  }

  uint64_t u64(const std::string& v) const {
    const long long n = integer(v);
    if (n < 0) fail("must be non-negative");
    return static_cast<uint64_t>(n);
  }

  double positive(const std::string& v) const {
    const double d = num(v);
    if (!(d > 0.0)) fail("must be positive");
    return d;
  }

  double unit_interval(const std::string& v) const {
    const double d = num(v);
    if (d < 0.0 || d > 1.0) fail("out of range [0, 1]");
    return d;
  }

  bool boolean(const std::string& v) const {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("expected true/false");
  }
};

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// `check_files`: scene/map paths must exist on disk (bench-gen may run before
// training scenes exist, so the CLI only checks what it uses; parsing checks
// everything by default because a config naming dead files is a typo).
inline AppConfig parse_app_config(const std::string& text, bool check_files = true) {
  AppConfig app;
  std::istringstream is(text);
  std::string raw, section;
  detail::ConfigCursor at;

  while (std::getline(is, raw)) {
    ++at.line;
    at.key.clear();
    const size_t hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') at.fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "trainer" && section != "sim" && section != "policy" &&
          section != "eval" && section != "bench")
        at.fail("unknown section [" + section + "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) at.fail("empty key");
    if (section.empty()) at.fail("key '" + key + "' before any [section]");
    at.key = section + "." + key;

    TrainConfig& t = app.trainer;
    if (section == "trainer") {
      if (key == "T") t.T = at.count(val);
      else if (key == "E") t.E = at.count(val);
      else if (key == "rho") t.rho = at.unit_interval(val);
      else if (key == "epochs") t.epochs = at.count(val, 0);
      else if (key == "batch_size") t.batch_size = at.count(val);
      else if (key == "lr") t.lr = at.positive(val);
      else if (key == "lambda") { t.lambda = at.num(val); if (t.lambda < 0) at.fail("must be >= 0"); }
      else if (key == "iterations") t.iterations = at.count(val);
      else if (key == "seed") t.seed = at.u64(val);
      else if (key == "n_rollout") t.n_rollout = at.count(val);
      else if (key == "checkpoint_every") t.checkpoint_every = at.count(val);
      else if (key == "workers") t.workers = at.count(val);
      else if (key == "out_dir") t.out_dir = val;
      else if (key == "offline_data") t.offline_data = val;
      else if (key == "resume") t.resume = at.boolean(val);
      else if (key == "scene") {
        if (val.empty()) at.fail("empty path");
        if (check_files && !std::filesystem::exists(val)) at.fail("scene file '" + val + "' not found");
        t.scenes.push_back(val);
      } else at.fail("unknown key");
    } else if (section == "sim") {
      SimConfig& s = t.sim;
      if (key == "rays") s.sensor.rays = at.count(val);
      else if (key == "fov") s.sensor.fov = at.positive(val);
      else if (key == "max_range") s.sensor.max_range = at.positive(val);
      else if (key == "goal_clamp") s.sensor.goal_clamp = at.positive(val);
      else if (key == "mount_offset_max") { s.mount_offset_max = at.num(val); if (s.mount_offset_max < 0) at.fail("must be >= 0"); }
      else if (key == "noise_sigma_max") { s.noise_sigma_max = at.num(val); if (s.noise_sigma_max < 0) at.fail("must be >= 0"); }
      else if (key == "randomize_sensor") s.randomize_sensor = at.boolean(val);
      else if (key == "eval_mount_offset") { s.eval_mount_offset = at.num(val); if (s.eval_mount_offset < 0) at.fail("must be >= 0"); }
      else if (key == "v_max") s.gains.v_max = at.positive(val);
      else if (key == "w_max") s.gains.w_max = at.positive(val);
      else if (key == "kappa_slow") { s.gains.kappa_slow = at.num(val); if (s.gains.kappa_slow < 0) at.fail("must be >= 0"); }
      else if (key == "max_bearing") s.gains.max_bearing = at.positive(val);
      else if (key == "dt") s.dt = at.positive(val);
      else if (key == "substeps") s.substeps = at.count(val);
      else if (key == "lookahead") s.lookahead = at.positive(val);
      else if (key == "radius") s.radius = at.positive(val);
      else if (key == "success_radius") s.success_radius = at.positive(val);
      else if (key == "max_policy_steps") s.max_policy_steps = at.count(val);
      else if (key == "stall_dist") s.stall_dist = at.positive(val);
      else if (key == "stall_window_ticks") s.stall_window_ticks = at.count(val);
      else if (key == "spacing") s.spacing = at.positive(val);
      else if (key == "search_dist") { s.search_dist = at.num(val); if (s.search_dist < 0) at.fail("must be >= 0"); }
      else if (key == "K") s.K = at.count(val);
      else if (key == "F") s.F = at.count(val, 0);
      else if (key == "sample_tries") s.sample_tries = at.count(val);
      else if (key == "d_safe") s.safety.d_safe = at.positive(val);
      else if (key == "alpha") { s.safety.alpha = at.num(val); if (s.safety.alpha < 0) at.fail("must be >= 0"); }
      else at.fail("unknown key");
    } else if (section == "policy") {
      PolicyConfig& p = t.policy;
      if (key == "rays") p.rays = at.count(val);
      else if (key == "K") p.K = at.count(val);
      else if (key == "feat") p.feat = at.count(val);
      else if (key == "enc_hidden") p.enc_hidden = at.count(val);
      else if (key == "den_hidden") p.den_hidden = at.count(val);
      else if (key == "temb") p.temb = at.count(val, 2);
      else if (key == "critic_emb") p.critic_emb = at.count(val);
      else if (key == "critic_hidden") p.critic_hidden = at.count(val);
      else if (key == "N") p.N = at.count(val);
      else if (key == "beta_min") p.beta_min = at.positive(val);
      else if (key == "beta_max") p.beta_max = at.positive(val);
      else if (key == "traj_scale") p.traj_scale = at.positive(val);
      else if (key == "range_scale") p.range_scale = at.positive(val);
      else if (key == "goal_scale") p.goal_scale = at.positive(val);
      else at.fail("unknown key");
    } else if (section == "eval") {
      if (key == "n_samples") app.eval_samples = at.count(val);
      else if (key == "seed") app.eval_seed = at.u64(val);
      else at.fail("unknown key");
    } else {  // bench
      if (key == "map") {
        if (val.empty()) at.fail("empty path");
        if (check_files && !std::filesystem::exists(val)) at.fail("map file '" + val + "' not found");
        app.bench_maps.push_back(val);
      } else if (key == "n_per_scene") app.bench.n_per_scene = at.count(val);
      else if (key == "f_min") app.bench.f_min = at.count(val, 0);
      else if (key == "f_max") app.bench.f_max = at.count(val, 0);
      else if (key == "radius") app.bench.radius = at.positive(val);
      else if (key == "max_tries") app.bench.max_tries = at.count(val);
      else at.fail("unknown key");
    }
  }
  return app;
}

inline AppConfig load_app_config(const std::string& path, bool check_files = true) {
  return parse_app_config(read_file(path), check_files);
}

namespace detail {
inline void emit(std::string& out, const char* key, double v) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "%s = %.17g\n", key, v);
  out += buf;
}
inline void emit(std::string& out, const char* key, int v) {
  out += std::string(key) + " = " + std::to_string(v) + "\n";
}
inline void emit(std::string& out, const char* key, uint64_t v) {
  out += std::string(key) + " = " + std::to_string(v) + "\n";
}
inline void emit(std::string& out, const char* key, bool v) {
  out += std::string(key) + " = " + (v ? "true" : "false") + "\n";
}
inline void emit(std::string& out, const char* key, const std::string& v) {
  out += std::string(key) + " = " + v + "\n";
}
}  // namespace detail

inline std::string serialize_app_config(const AppConfig& app) {
  using detail::emit;
  std::string out;
  const TrainConfig& t = app.trainer;
  out += "[trainer]\n";
  emit(out, "T", t.T);
  emit(out, "E", t.E);
  emit(out, "rho", t.rho);
  emit(out, "epochs", t.epochs);
  emit(out, "batch_size", t.batch_size);
  emit(out, "lr", t.lr);
  emit(out, "lambda", t.lambda);
  emit(out, "iterations", t.iterations);
  emit(out, "seed", t.seed);
  emit(out, "n_rollout", t.n_rollout);
  emit(out, "checkpoint_every", t.checkpoint_every);
  emit(out, "workers", t.workers);
  emit(out, "out_dir", t.out_dir);
  emit(out, "resume", t.resume);
  if (!t.offline_data.empty()) emit(out, "offline_data", t.offline_data);
  for (const std::string& s : t.scenes) emit(out, "scene", s);

  const SimConfig& s = t.sim;
  out += "\n[sim]\n";
  emit(out, "rays", s.sensor.rays);
  emit(out, "fov", s.sensor.fov);
  emit(out, "max_range", s.sensor.max_range);
  emit(out, "goal_clamp", s.sensor.goal_clamp);
  emit(out, "mount_offset_max", s.mount_offset_max);
  emit(out, "noise_sigma_max", s.noise_sigma_max);
  emit(out, "randomize_sensor", s.randomize_sensor);
  emit(out, "eval_mount_offset", s.eval_mount_offset);
  emit(out, "v_max", s.gains.v_max);
  emit(out, "w_max", s.gains.w_max);
  emit(out, "kappa_slow", s.gains.kappa_slow);
  emit(out, "max_bearing", s.gains.max_bearing);
  emit(out, "dt", s.dt);
  emit(out, "substeps", s.substeps);
  emit(out, "lookahead", s.lookahead);
  emit(out, "radius", s.radius);
  emit(out, "success_radius", s.success_radius);
  emit(out, "max_policy_steps", s.max_policy_steps);
  emit(out, "stall_dist", s.stall_dist);
  emit(out, "stall_window_ticks", s.stall_window_ticks);
  emit(out, "spacing", s.spacing);
  emit(out, "search_dist", s.search_dist);
  emit(out, "K", s.K);
  emit(out, "F", s.F);
  emit(out, "sample_tries", s.sample_tries);
  emit(out, "d_safe", s.safety.d_safe);
  emit(out, "alpha", s.safety.alpha);

  const PolicyConfig& p = t.policy;
  out += "\n[policy]\n";
  emit(out, "rays", p.rays);
  emit(out, "K", p.K);
  emit(out, "feat", p.feat);
  emit(out, "enc_hidden", p.enc_hidden);
  emit(out, "den_hidden", p.den_hidden);
  emit(out, "temb", p.temb);
  emit(out, "critic_emb", p.critic_emb);
  emit(out, "critic_hidden", p.critic_hidden);
  emit(out, "N", p.N);
  emit(out, "beta_min", p.beta_min);
  emit(out, "beta_max", p.beta_max);
  emit(out, "traj_scale", p.traj_scale);
  emit(out, "range_scale", p.range_scale);
  emit(out, "goal_scale", p.goal_scale);

  out += "\n[eval]\n";
  emit(out, "n_samples", app.eval_samples);
  emit(out, "seed", app.eval_seed);

  out += "\n[bench]\n";
  for (const std::string& m : app.bench_maps) emit(out, "map", m);
  emit(out, "n_per_scene", app.bench.n_per_scene);
  emit(out, "f_min", app.bench.f_min);
  emit(out, "f_max", app.bench.f_max);
  emit(out, "radius", app.bench.radius);
  emit(out, "max_tries", app.bench.max_tries);
  return out;
}

}  // namespace navloop
