// Regenerates the canonical map set under a target directory (default:
// maps/). Eight training mazes and four held-out evaluation mazes, all from
// fixed seeds so the committed files are reproducible:
//
//   ./navloop_genmaps [out_dir]

#include <cstdio>
#include <filesystem>
#include <string>

#include "navloop/mazegen.hpp"
#include "navloop/util.hpp"

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "maps";
  std::filesystem::create_directories(out_dir);

  const navloop::MazeConfig cfg;  // 8x8 macro cells, 12.5 m square
  auto write = [&](const std::string& name, uint64_t seed) {
    const std::string path = out_dir + "/" + name + ".map";
    navloop::atomic_write_file(path, navloop::generate_maze_text(cfg, name, seed));
    std::printf("%s (seed %llu)\n", path.c_str(), static_cast<unsigned long long>(seed));
  };

  for (int i = 1; i <= 8; ++i)
    write("train-" + std::string(i < 10 ? "0" : "") + std::to_string(i), 100 + i);
  for (int i = 1; i <= 4; ++i)
    write("eval-" + std::string(i < 10 ? "0" : "") + std::to_string(i), 200 + i);
  return 0;
}
