#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace navloop {

using Rng = std::mt19937_64;

/// Builds an engine from a list of seed words, so independent streams can be
/// derived from (global_seed, stream_index, ...) tuples.
inline Rng make_rng(std::initializer_list<std::uint64_t> words) {
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Distribution objects are constructed per call so the engine state alone
// fully describes the stream (required for checkpoint/resume determinism).

inline double draw_uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double draw_normal(Rng& rng, double mean = 0.0, double sigma = 1.0) {
  return std::normal_distribution<double>(mean, sigma)(rng);
}

/// Uniform integer in [lo, hi], both inclusive.
inline std::int64_t draw_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

inline bool draw_bernoulli(Rng& rng, double p) {
  return draw_uniform(rng, 0.0, 1.0) < p;
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  return rng;
}

}  // namespace navloop
