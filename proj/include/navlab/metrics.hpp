#pragma once
// Scalar navigation metrics and statistics.

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "navlab/env.hpp"
#include "navlab/grid.hpp"

namespace navlab {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathMetricReport {
  double spl = 0.0;
  bool success = false;
  double path_len = 0.0;
  double geodesic = 0.0;
  double pathdiff_ab = 0.0;
  double pathdiff_ba = 0.0;
  double excursion_removal = 0.0;  // pathdiff_ab - pathdiff_ba
};

struct Point2 {
  double x = 0.0, y = 0.0;
};

// Success weighted by inverse path length: Success * d / max(d, l).
// literal_min reproduces the d / min(d, l) form (not clamped to [0, 1]).
double spl(const Trajectory& traj, const Episode& episode,
           bool literal_min = false);

// Asymmetric geodesic Chamfer distance: mean over points of path_a of the
// geodesic distance to the nearest point of path_b. Paths longer than
// max_points are subsampled with a uniform stride.
double path_diff(const std::vector<Point2>& path_a,
                 const std::vector<Point2>& path_b, const OccupancyGrid& grid,
                 std::size_t max_points = 500);

std::vector<Point2> trajectory_points(const Trajectory& traj);

enum class Alternative { TwoSided, Greater, Less };

// Wilcoxon signed-rank test on paired samples; zero differences dropped.
// Exact sign enumeration for n <= 12, normal approximation with tie
// correction above. "Greater" tests x > y.
double wilcoxon_signed_rank(const std::vector<double>& x,
                            const std::vector<double>& y,
                            Alternative alternative = Alternative::TwoSided);

// Percentile bootstrap of the mean.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       double level = 0.95,
                                       int resamples = 10000,
                                       std::uint64_t seed = 0);

// IoU over the navigable class within the mask. Grids are 0/1 rasters.
double iou(const std::vector<std::uint8_t>& pred,
           const std::vector<std::uint8_t>& truth,
           const std::vector<std::uint8_t>& mask);

// Mean of per-class recalls within the mask.
double balanced_accuracy(const std::vector<std::uint8_t>& pred,
                         const std::vector<std::uint8_t>& truth,
                         const std::vector<std::uint8_t>& mask);

}  // namespace navlab
