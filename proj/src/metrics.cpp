#include "navlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace navlab {

double spl(const Trajectory& traj, const Episode& episode, bool literal_min) {
  if (traj.steps.empty()) throw MetricsError("spl: empty trajectory");
  if (!traj.success) return 0.0;
  const double d = episode.geodesic_dist;
  if (d <= 0.0) throw MetricsError("spl: episode geodesic distance must be > 0");
  const double l = traj.path_length();
  if (literal_min) return d / std::min(d, l);
  return d / std::max(d, l);
}

std::vector<Point2> trajectory_points(const Trajectory& traj) {
  std::vector<Point2> pts;
  pts.reserve(traj.steps.size());
  for (const auto& s : traj.steps) pts.push_back({s.x, s.y});
  return pts;
}

namespace {

std::vector<Point2> subsample(const std::vector<Point2>& path,
                              std::size_t max_points) {
  if (path.size() <= max_points) return path;
  std::vector<Point2> out;
  out.reserve(max_points);
  for (std::size_t i = 0; i < max_points; ++i) {
    const std::size_t j = i * (path.size() - 1) / (max_points - 1);
    out.push_back(path[j]);
  }
  return out;
}

}  // namespace

double path_diff(const std::vector<Point2>& path_a,
                 const std::vector<Point2>& path_b, const OccupancyGrid& grid,
                 std::size_t max_points) {
  if (path_a.empty() || path_b.empty())
    throw MetricsError("path_diff: empty path");
  const auto a = subsample(path_a, max_points);
  const auto b = subsample(path_b, max_points);

  // Multi-source geodesic field expanded once from every point of path_b.
  std::vector<std::size_t> sources;
  for (const auto& p : b) {
    const int cx = grid.cell_x(p.x), cy = grid.cell_y(p.y);
    if (!grid.in_bounds(cx, cy))
      throw MetricsError("path_diff: point outside grid");
    sources.push_back(grid.idx(cx, cy));
  }
  const auto field = distance_field(grid, sources);

  double total = 0.0;
  for (const auto& p : a) {
    const int cx = grid.cell_x(p.x), cy = grid.cell_y(p.y);
    if (!grid.in_bounds(cx, cy))
      throw MetricsError("path_diff: point outside grid");
    const double d = field[grid.idx(cx, cy)];
    if (!std::isfinite(d))
      throw MetricsError("path_diff: point in disconnected component");
    total += d;
  }
  return total / static_cast<double>(a.size());
}

double wilcoxon_signed_rank(const std::vector<double>& x,
                            const std::vector<double>& y,
                            Alternative alternative) {
  if (x.size() != y.size())
    throw MetricsError("wilcoxon_signed_rank: unpaired inputs");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n == 0)
    throw MetricsError("wilcoxon_signed_rank: all differences are zero");

  // Midranks of |d|.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(diffs[i]) < std::abs(diffs[j]);
  });
  std::vector<double> rank(n, 0.0);
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n &&
           std::abs(diffs[order[j]]) == std::abs(diffs[order[i]]))
      ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0.0) w_plus += rank[i];

  if (n <= 12) {
    // Exact: enumerate all 2^n sign assignments over the observed ranks.
    const std::size_t total = std::size_t{1} << n;
    std::size_t ge = 0, le = 0;
    for (std::size_t mask = 0; mask < total; ++mask) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (std::size_t{1} << i)) w += rank[i];
      if (w >= w_plus - 1e-12) ++ge;
      if (w <= w_plus + 1e-12) ++le;
    }
    const double p_greater = static_cast<double>(ge) / total;
    const double p_less = static_cast<double>(le) / total;
    switch (alternative) {
      case Alternative::Greater:
        return p_greater;
      case Alternative::Less:
        return p_less;
      case Alternative::TwoSided:
        return std::min(1.0, 2.0 * std::min(p_greater, p_less));
    }
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double sd = std::sqrt(var);
  auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  // continuity correction toward the mean
  const double zg = (w_plus - 0.5 - mean) / sd;
  const double zl = (w_plus + 0.5 - mean) / sd;
  switch (alternative) {
    case Alternative::Greater:
      return 1.0 - phi(zg);
    case Alternative::Less:
      return phi(zl);
    case Alternative::TwoSided:
    default:
      return std::min(1.0, 2.0 * std::min(1.0 - phi(zg), phi(zl)));
  }
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       double level, int resamples,
                                       std::uint64_t seed) {
  if (values.empty()) throw MetricsError("bootstrap_ci: empty sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means;
  means.reserve(resamples);
  for (int r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[pick(rng)];
    means.push_back(sum / static_cast<double>(values.size()));
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * (means.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, means.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  return {quantile(alpha), quantile(1.0 - alpha)};
}

double iou(const std::vector<std::uint8_t>& pred,
           const std::vector<std::uint8_t>& truth,
           const std::vector<std::uint8_t>& mask) {
  if (pred.size() != truth.size() || pred.size() != mask.size())
    throw MetricsError("iou: shape mismatch");
  std::size_t inter = 0, uni = 0, masked = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    ++masked;
    if (pred[i] && truth[i]) ++inter;
    if (pred[i] || truth[i]) ++uni;
  }
  if (masked == 0) throw MetricsError("iou: empty mask");
  if (uni == 0) return 1.0;  // neither predicted nor true navigable cells
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double balanced_accuracy(const std::vector<std::uint8_t>& pred,
                         const std::vector<std::uint8_t>& truth,
                         const std::vector<std::uint8_t>& mask) {
  if (pred.size() != truth.size() || pred.size() != mask.size())
    throw MetricsError("balanced_accuracy: shape mismatch");
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0, masked = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    ++masked;
    if (truth[i]) {
      pred[i] ? ++tp : ++fn;
    } else {
      pred[i] ? ++fp : ++tn;
    }
  }
  if (masked == 0) throw MetricsError("balanced_accuracy: empty mask");
  double recalls = 0.0;
  int classes = 0;
  if (tp + fn > 0) {
    recalls += static_cast<double>(tp) / static_cast<double>(tp + fn);
    ++classes;
  }
  if (tn + fp > 0) {
    recalls += static_cast<double>(tn) / static_cast<double>(tn + fp);
    ++classes;
  }
  return recalls / static_cast<double>(classes);
}

}  // namespace navlab
