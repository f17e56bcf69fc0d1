#pragma once
// Procedural 2D occupancy worlds and geodesic geometry.

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace navlab {

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct OccupancyGrid {
  int width = 0;
  int height = 0;
  double cell_size = 0.125;  // meters
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> nav;  // row-major, 1 = navigable

  bool in_bounds(int cx, int cy) const {
    return cx >= 0 && cx < width && cy >= 0 && cy < height;
  }
  bool navigable(int cx, int cy) const {
    return in_bounds(cx, cy) && nav[static_cast<std::size_t>(cy) * width + cx];
  }
  // Cell containing a metric point. Points exactly on a boundary go to the
  // higher-index cell, matching floor().
  int cell_x(double x) const { return static_cast<int>(x / cell_size); }
  int cell_y(double y) const { return static_cast<int>(y / cell_size); }
  double center_x(int cx) const { return (cx + 0.5) * cell_size; }
  double center_y(int cy) const { return (cy + 0.5) * cell_size; }
  std::size_t idx(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * width + cx;
  }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  double free_fraction() const;
};

struct GridError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Recursive-division maze with open rectangular rooms. room_density in [0,1]
// is the probability a splittable region is left as an open room instead.
// Corridors are 3 cells wide; every wall carries an aligned 3-cell gap, so
// the navigable interior is a single connected component.
OccupancyGrid generate_maze(std::uint64_t seed, int width, int height,
                            double room_density);

// ASCII map format: one-line JSON header {"cell_size":..,"seed":..} followed
// by '#' (blocked) / '.' (free) rows.
OccupancyGrid load_grid(const std::string& text);
std::string save_grid(const OccupancyGrid& grid);

// Per-cell geodesic distance (meters) from a set of source cells, 8-connected
// with sqrt(2)*cell_size diagonal cost. Non-navigable or disconnected cells
// hold kUnreachable.
std::vector<double> distance_field(const OccupancyGrid& grid,
                                   const std::vector<std::size_t>& sources);

// Shortest navigable path length between two metric points, endpoints
// snapped to their containing cells. Returns kUnreachable when disconnected.
// Throws GridError for out-of-bounds points.
double geodesic_distance(const OccupancyGrid& grid, double ax, double ay,
                         double bx, double by);

// Number of navigable cells reachable from (cx, cy) by 4-connected flood fill.
std::size_t flood_fill_count(const OccupancyGrid& grid, int cx, int cy);

// True when a disc of the given radius centered at (x, y) meters overlaps no
// blocked cell and stays inside the grid.
bool disc_free(const OccupancyGrid& grid, double x, double y, double radius);

// Cells whose center admits a free disc of the given radius.
std::vector<std::size_t> disc_valid_cells(const OccupancyGrid& grid,
                                          double radius);

}  // namespace navlab
