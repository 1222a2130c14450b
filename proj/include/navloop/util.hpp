#pragma once
// Small shared utilities: exact double round-tripping for state files, atomic
// file writes, and a deterministic parallel-for.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "navloop/world.hpp"

namespace navloop {

// Doubles in text state files travel as raw bit patterns so that a save/load
// cycle is exact, not merely close.
inline std::string double_to_hex(double d) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<uint64_t>(d)));
  return buf;
}

inline double hex_to_double(const std::string& s) {
  return std::bit_cast<double>(static_cast<uint64_t>(std::stoull(s, nullptr, 16)));
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Write-to-temp plus rename: consumers never observe a partial file.
inline void atomic_write_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot open " + tmp + " for writing");
    os << contents;
    os.flush();
    if (!os) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Contiguous-chunk parallel map. The split depends only on (n, workers), so
// any per-index output is deterministic. Exceptions are captured per worker
// and the lowest worker's exception is rethrown after the join.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int k = std::max(1, std::min(workers, n));
  if (k == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(k);
  std::vector<std::thread> threads;
  threads.reserve(k);
  for (int j = 0; j < k; ++j) {
    const int lo = static_cast<int>(static_cast<int64_t>(n) * j / k);
    const int hi = static_cast<int>(static_cast<int64_t>(n) * (j + 1) / k);
    threads.emplace_back([lo, hi, j, &fn, &errors] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace navloop
