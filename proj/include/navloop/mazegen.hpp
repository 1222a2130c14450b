#pragma once
// Maze scene generator: recursive-backtracker over macro cells, rendered to
// the plain-text map format. Extra wall openings add loops so that shortest
// paths are not unique and shortcuts matter.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "navloop/rng.hpp"

namespace navloop {

struct MazeConfig {
  int macro_w = 8;          // macro cells across
  int macro_h = 8;          // macro cells down
  int corridor_cells = 4;   // free cells per corridor width
  int wall_cells = 2;       // obstacle cells per wall
  double cell_size = 0.25;  // meters per grid cell
  double loop_fraction = 0.12;  // chance to open each remaining interior wall
};

inline std::string generate_maze_text(const MazeConfig& cfg, const std::string& name,
                                      uint64_t seed) {
  const int mw = cfg.macro_w, mh = cfg.macro_h;
  Rng rng = make_rng({seed, 0x6d7a67u});

  // Carve a spanning tree over macro cells with randomized depth-first search.
  // open_h[x][y] is the wall between (x,y) and (x+1,y); open_v between (x,y)
  // and (x,y+1).
  std::vector<std::vector<bool>> open_h(mw - 1, std::vector<bool>(mh, false));
  std::vector<std::vector<bool>> open_v(mw, std::vector<bool>(mh - 1, false));
  std::vector<std::vector<bool>> seen(mw, std::vector<bool>(mh, false));
  std::vector<std::pair<int, int>> stack;
  stack.emplace_back(0, 0);
  seen[0][0] = true;
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    int dirs[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(dirs[i], dirs[draw_int(rng, 0, i)]);
    bool advanced = false;
    for (int i = 0; i < 4 && !advanced; ++i) {
      const int dx = (dirs[i] == 0) - (dirs[i] == 1);
      const int dy = (dirs[i] == 2) - (dirs[i] == 3);
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || nx >= mw || ny < 0 || ny >= mh || seen[nx][ny]) continue;
      if (dx != 0)
        open_h[std::min(x, nx)][y] = true;
      else
        open_v[x][std::min(y, ny)] = true;
      seen[nx][ny] = true;
      stack.emplace_back(nx, ny);
      advanced = true;
    }
    if (!advanced) stack.pop_back();
  }

  // Knock through a fraction of the remaining walls to create loops.
  for (int x = 0; x < mw - 1; ++x)
    for (int y = 0; y < mh; ++y)
      if (!open_h[x][y] && draw_bernoulli(rng, cfg.loop_fraction)) open_h[x][y] = true;
  for (int x = 0; x < mw; ++x)
    for (int y = 0; y < mh - 1; ++y)
      if (!open_v[x][y] && draw_bernoulli(rng, cfg.loop_fraction)) open_v[x][y] = true;

  // Render to grid cells: corridors are corridor_cells wide, walls wall_cells
  // thick, with a wall ring around the outside.
  const int cc = cfg.corridor_cells, wc = cfg.wall_cells;
  const int gw = mw * cc + (mw + 1) * wc;
  const int gh = mh * cc + (mh + 1) * wc;
  std::vector<std::string> grid(gh, std::string(gw, '#'));

  const auto carve = [&](int x0, int y0, int w, int h) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) grid[y][x] = '.';
  };
  const auto corner = [&](int mx, int my) {  // lower-left grid cell of macro cell
    return std::pair<int, int>{wc + mx * (cc + wc), wc + my * (cc + wc)};
  };

  for (int mx = 0; mx < mw; ++mx)
    for (int my = 0; my < mh; ++my) {
      const auto [gx, gy] = corner(mx, my);
      carve(gx, gy, cc, cc);
      if (mx + 1 < mw && open_h[mx][my]) carve(gx + cc, gy, wc, cc);
      if (my + 1 < mh && open_v[mx][my]) carve(gx, gy + cc, cc, wc);
    }

  std::string out = "cell_size=" + std::to_string(cfg.cell_size) + "\n";
  out += "name=" + name + "\n";
  // Grid row 0 is the bottom of the world; the file lists top rows first.
  for (int y = gh - 1; y >= 0; --y) out += grid[y] + "\n";
  return out;
}

}  // namespace navloop
