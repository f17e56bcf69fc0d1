#pragma once
// Deterministic dependency-free SVG rendering: top-down grid views with
// trajectory polylines and markers, predicted-vs-true map rasters, embedding
// scatter plots, and metric curves with confidence bands.

#include <array>
#include <string>
#include <vector>

#include "navlab/grid.hpp"

namespace navlab {

struct RenderPath {
  std::vector<std::array<double, 2>> points;  // meters, world frame
  std::string color = "#1f77b4";
  double width = 2.0;                  // px
  std::vector<std::array<int, 2>> highlights;  // index ranges to emphasize
};

struct RenderSpec {
  double px_per_meter = 40.0;
  bool draw_grid = true;
  bool has_markers = false;
  double start_x = 0.0, start_y = 0.0;  // green marker
  double goal_x = 0.0, goal_y = 0.0;    // red marker
  double marker_radius = 0.12;          // meters
};

// Top-down view: light grey blocked cells, dark grey free space, colored
// polylines, green start / red goal markers, highlighted sub-ranges.
std::string render_trajectory(const OccupancyGrid& grid,
                              const std::vector<RenderPath>& paths,
                              const RenderSpec& spec = {});

// Side-by-side G x G rasters (prediction left, truth right); cells outside
// the mask are dimmed.
std::string render_map_pair(const std::vector<std::uint8_t>& predicted,
                            const std::vector<std::uint8_t>& truth,
                            const std::vector<std::uint8_t>& mask,
                            int grid_extent, int cell_px = 8);

// 2-D scatter with an optional integer label per point (color-coded).
std::string render_scatter(const std::vector<std::array<double, 2>>& points,
                           const std::vector<int>* labels = nullptr,
                           int size_px = 480);

// Polyline curve with optional per-point confidence band.
struct CurveSeries {
  std::vector<double> x, y, y_lo, y_hi;  // bands optional (empty = none)
  std::string color = "#1f77b4";
  std::string name;
};
std::string render_curve(const std::vector<CurveSeries>& series,
                         const std::string& x_label,
                         const std::string& y_label, int width_px = 560,
                         int height_px = 360);

}  // namespace navlab
