#include "navlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <sstream>

#include "json.hpp"

namespace navlab {

double OccupancyGrid::free_fraction() const {
  std::size_t free = 0;
  for (auto v : nav) free += v;
  return static_cast<double>(free) / static_cast<double>(cell_count());
}

namespace {

// Wall lines live on global coordinates == 0 (mod 4); gaps are the 3-cell
// lattice cells [4m+1, 4m+3]. Gap cells are never on a wall line, so gaps
// cut into one wall can never be filled by a later perpendicular wall.
constexpr int kPitch = 4;

struct Region {
  int x0, x1, y0, y1;  // inclusive
};

class MazeBuilder {
 public:
  MazeBuilder(OccupancyGrid& grid, double room_density, std::mt19937_64& rng)
      : g_(grid), room_density_(room_density), rng_(rng) {}

  void divide(const Region& r) {
    std::vector<int> vwalls = wall_candidates(r.x0, r.x1);
    std::vector<int> hwalls = wall_candidates(r.y0, r.y1);
    if (vwalls.empty() && hwalls.empty()) return;
    // Regions small enough to read as rooms may stop splitting; large
    // regions always split so the map stays maze-like.
    const int max_dim = std::max(r.x1 - r.x0, r.y1 - r.y0) + 1;
    if (max_dim <= 15 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < room_density_)
      return;  // leave an open room

    bool vertical;
    if (vwalls.empty()) {
      vertical = false;
    } else if (hwalls.empty()) {
      vertical = true;
    } else {
      const int w = r.x1 - r.x0, h = r.y1 - r.y0;
      if (w > h)
        vertical = true;
      else if (h > w)
        vertical = false;
      else
        vertical = std::uniform_int_distribution<int>(0, 1)(rng_) == 1;
    }

    if (vertical) {
      const int p = pick(vwalls);
      for (int y = r.y0; y <= r.y1; ++y) set_blocked(p, y);
      const int gap = pick(gap_candidates(r.y0, r.y1));
      for (int y = gap; y < gap + 3; ++y) set_free(p, y);
      divide({r.x0, p - 1, r.y0, r.y1});
      divide({p + 1, r.x1, r.y0, r.y1});
    } else {
      const int p = pick(hwalls);
      for (int x = r.x0; x <= r.x1; ++x) set_blocked(x, p);
      const int gap = pick(gap_candidates(r.x0, r.x1));
      for (int x = gap; x < gap + 3; ++x) set_free(x, p);
      divide({r.x0, r.x1, r.y0, p - 1});
      divide({r.x0, r.x1, p + 1, r.y1});
    }
  }

 private:
  static std::vector<int> wall_candidates(int lo, int hi) {
    std::vector<int> out;
    for (int p = ((lo + 3 + kPitch - 1) / kPitch) * kPitch; p <= hi - 3;
         p += kPitch)
      out.push_back(p);
    return out;
  }
  static std::vector<int> gap_candidates(int lo, int hi) {
    std::vector<int> out;
    for (int m = 0; kPitch * m + 3 <= hi; ++m) {
      const int s = kPitch * m + 1;
      if (s >= lo && s + 2 <= hi) out.push_back(s);
    }
    return out;
  }
  int pick(const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng_)];
  }
  void set_blocked(int x, int y) { g_.nav[g_.idx(x, y)] = 0; }
  void set_free(int x, int y) { g_.nav[g_.idx(x, y)] = 1; }

  OccupancyGrid& g_;
  double room_density_;
  std::mt19937_64& rng_;
};

}  // namespace

OccupancyGrid generate_maze(std::uint64_t seed, int width, int height,
                            double room_density) {
  if (width < 8 || height < 8)
    throw GridError("generate_maze: dimensions must be at least 8x8");
  OccupancyGrid g;
  g.width = width;
  g.height = height;
  g.seed = seed;
  g.nav.assign(g.cell_count(), 0);
  for (int y = 1; y < height - 1; ++y)
    for (int x = 1; x < width - 1; ++x) g.nav[g.idx(x, y)] = 1;

  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  MazeBuilder builder(g, room_density, rng);
  builder.divide({1, width - 2, 1, height - 2});

  // Closed-world and connectivity postconditions.
  std::size_t free = 0;
  int fx = -1, fy = -1;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (g.navigable(x, y)) {
        ++free;
        if (fx < 0) {
          fx = x;
          fy = y;
        }
      }
  if (free < g.cell_count() / 4)
    throw GridError("generate_maze: free fraction below 25%");
  if (flood_fill_count(g, fx, fy) != free)
    throw GridError("generate_maze: navigable area not connected");
  return g;
}

OccupancyGrid load_grid(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw GridError("load_grid: empty input");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw GridError(std::string("load_grid: bad header: ") + e.what());
  }
  OccupancyGrid g;
  g.cell_size = j.at("cell_size").get<double>();
  g.seed = j.at("seed").get<std::uint64_t>();
  if (g.cell_size <= 0) throw GridError("load_grid: cell_size must be > 0");

  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.size() < 8 || rows[0].size() < 8)
    throw GridError("load_grid: map must be at least 8x8");
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows[0].size());
  g.nav.assign(g.cell_count(), 0);
  for (int y = 0; y < g.height; ++y) {
    if (static_cast<int>(rows[y].size()) != g.width)
      throw GridError("load_grid: ragged line at row " + std::to_string(y));
    for (int x = 0; x < g.width; ++x) {
      const char c = rows[y][x];
      if (c == '.')
        g.nav[g.idx(x, y)] = 1;
      else if (c != '#')
        throw GridError(std::string("load_grid: unknown character '") + c +
                        "'");
    }
  }
  for (int x = 0; x < g.width; ++x)
    if (g.navigable(x, 0) || g.navigable(x, g.height - 1))
      throw GridError("load_grid: open border");
  for (int y = 0; y < g.height; ++y)
    if (g.navigable(0, y) || g.navigable(g.width - 1, y))
      throw GridError("load_grid: open border");
  return g;
}

std::string save_grid(const OccupancyGrid& grid) {
  nlohmann::json header;
  header["cell_size"] = grid.cell_size;
  header["seed"] = grid.seed;
  std::string out = header.dump();
  out.push_back('\n');
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x)
      out.push_back(grid.navigable(x, y) ? '.' : '#');
    out.push_back('\n');
  }
  return out;
}

std::vector<double> distance_field(const OccupancyGrid& grid,
                                   const std::vector<std::size_t>& sources) {
  std::vector<double> dist(grid.cell_count(), kUnreachable);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (std::size_t s : sources) {
    if (!grid.nav[s]) continue;
    dist[s] = 0.0;
    pq.emplace(0.0, s);
  }
  const double straight = grid.cell_size;
  const double diag = std::sqrt(2.0) * grid.cell_size;
  while (!pq.empty()) {
    auto [d, i] = pq.top();
    pq.pop();
    if (d > dist[i]) continue;
    const int cx = static_cast<int>(i % grid.width);
    const int cy = static_cast<int>(i / grid.width);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cx + dx, ny = cy + dy;
        if (!grid.navigable(nx, ny)) continue;
        const double nd = d + ((dx != 0 && dy != 0) ? diag : straight);
        const std::size_t ni = grid.idx(nx, ny);
        if (nd < dist[ni]) {
          dist[ni] = nd;
          pq.emplace(nd, ni);
        }
      }
    }
  }
  return dist;
}

double geodesic_distance(const OccupancyGrid& grid, double ax, double ay,
                         double bx, double by) {
  const int acx = grid.cell_x(ax), acy = grid.cell_y(ay);
  const int bcx = grid.cell_x(bx), bcy = grid.cell_y(by);
  if (!grid.in_bounds(acx, acy) || !grid.in_bounds(bcx, bcy))
    throw GridError("geodesic_distance: position outside grid bounds");
  if (!grid.navigable(acx, acy) || !grid.navigable(bcx, bcy))
    return kUnreachable;
  auto field = distance_field(grid, {grid.idx(acx, acy)});
  return field[grid.idx(bcx, bcy)];
}

std::size_t flood_fill_count(const OccupancyGrid& grid, int cx, int cy) {
  if (!grid.navigable(cx, cy)) return 0;
  std::vector<std::uint8_t> seen(grid.cell_count(), 0);
  std::vector<std::pair<int, int>> stack{{cx, cy}};
  seen[grid.idx(cx, cy)] = 1;
  std::size_t count = 0;
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    ++count;
    const int nbs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (auto& nb : nbs) {
      const int nx = x + nb[0], ny = y + nb[1];
      if (grid.navigable(nx, ny) && !seen[grid.idx(nx, ny)]) {
        seen[grid.idx(nx, ny)] = 1;
        stack.emplace_back(nx, ny);
      }
    }
  }
  return count;
}

bool disc_free(const OccupancyGrid& grid, double x, double y, double radius) {
  if (x < radius || y < radius || x > grid.width * grid.cell_size - radius ||
      y > grid.height * grid.cell_size - radius)
    return false;
  const int x0 = grid.cell_x(x - radius), x1 = grid.cell_x(x + radius);
  const int y0 = grid.cell_y(y - radius), y1 = grid.cell_y(y + radius);
  for (int cy = y0; cy <= y1; ++cy) {
    for (int cx = x0; cx <= x1; ++cx) {
      if (grid.navigable(cx, cy)) continue;
      // distance from (x, y) to the cell's AABB
      const double bx0 = cx * grid.cell_size, bx1 = bx0 + grid.cell_size;
      const double by0 = cy * grid.cell_size, by1 = by0 + grid.cell_size;
      const double dx = std::max({bx0 - x, 0.0, x - bx1});
      const double dy = std::max({by0 - y, 0.0, y - by1});
      if (dx * dx + dy * dy < radius * radius) return false;
    }
  }
  return true;
}

std::vector<std::size_t> disc_valid_cells(const OccupancyGrid& grid,
                                          double radius) {
  std::vector<std::size_t> out;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      if (grid.navigable(x, y) &&
          disc_free(grid, grid.center_x(x), grid.center_y(y), radius))
        out.push_back(grid.idx(x, y));
  return out;
}

}  // namespace navlab
