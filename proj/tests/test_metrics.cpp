#include <cmath>
#include <random>

#include "doctest.h"
#include "navlab/grid.hpp"
#include "navlab/metrics.hpp"

using namespace navlab;

namespace {

Trajectory make_traj(const std::vector<Point2>& pts, bool success,
                     double geodesic) {
  Trajectory t;
  t.success = success;
  t.episode.geodesic_dist = geodesic;
  for (std::size_t i = 0; i < pts.size(); ++i)
    t.steps.push_back({static_cast<int>(i), pts[i].x, pts[i].y, 0.0, 0, false,
                       0.0, 0.0});
  return t;
}

OccupancyGrid open_grid(int w, int h) {
  OccupancyGrid g;
  g.width = w;
  g.height = h;
  g.cell_size = 0.125;
  g.nav.assign(g.cell_count(), 0);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) g.nav[g.idx(x, y)] = 1;
  return g;
}

}  // namespace

TEST_CASE("spl on the canonical examples") {
  auto perfect = make_traj({{0, 0}, {4, 0}}, true, 4.0);
  CHECK(spl(perfect, perfect.episode) == doctest::Approx(1.0));

  auto failed = make_traj({{0, 0}, {4, 0}}, false, 4.0);
  CHECK(spl(failed, failed.episode) == 0.0);

  auto detour = make_traj({{0, 0}, {8, 0}}, true, 4.0);
  CHECK(spl(detour, detour.episode) == doctest::Approx(0.5));

  // the literal printed form divides by min and exceeds 1 on short paths
  auto shortcut = make_traj({{0, 0}, {2, 0}}, true, 4.0);
  CHECK(spl(shortcut, shortcut.episode, true) == doctest::Approx(2.0));
  CHECK(spl(shortcut, shortcut.episode) == doctest::Approx(1.0));

  CHECK_THROWS_AS(spl(make_traj({}, true, 4.0), Episode{.geodesic_dist = 4.0}),
                  MetricsError);
}

TEST_CASE("path_diff basics and asymmetry on a loop") {
  const auto g = open_grid(64, 64);
  std::vector<Point2> base;
  for (int i = 0; i <= 20; ++i) base.push_back({1.0 + i * 0.125, 2.0});

  CHECK(path_diff(base, base, g) == doctest::Approx(0.0));

  // base plus a loop excursion
  std::vector<Point2> loop = base;
  for (int i = 1; i <= 10; ++i) loop.push_back({2.0, 2.0 + i * 0.125});
  for (int i = 9; i >= 0; --i) loop.push_back({2.0, 2.0 + i * 0.125});
  CHECK(path_diff(loop, base, g) > path_diff(base, loop, g));
  CHECK(path_diff(base, loop, g) == doctest::Approx(0.0));

  // brute-force min-over-pairs oracle on two small paths
  std::vector<Point2> a{{1.0, 1.0}, {2.0, 1.0}, {3.0, 1.0}};
  std::vector<Point2> b{{1.0, 3.0}, {2.5, 2.5}, {4.0, 1.0}};
  double expect = 0.0;
  for (const auto& pa : a) {
    double best = kUnreachable;
    for (const auto& pb : b)
      best = std::min(best, geodesic_distance(g, pa.x, pa.y, pb.x, pb.y));
    expect += best;
  }
  expect /= a.size();
  CHECK(path_diff(a, b, g) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("path_diff monotone in the target point set") {
  const auto g = open_grid(64, 64);
  std::vector<Point2> a{{1.0, 1.0}, {3.0, 2.0}, {5.0, 1.5}};
  std::vector<Point2> b{{2.0, 4.0}, {4.0, 4.0}};
  std::vector<Point2> b_more = b;
  b_more.push_back({3.0, 1.8});
  CHECK(path_diff(a, b_more, g) <= path_diff(a, b, g) + 1e-12);
}

TEST_CASE("wilcoxon exact matches sign-enumeration oracle") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = std::uniform_int_distribution<int>(3, 10)(rng);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
      y[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    // oracle: enumerate all sign flips over ranks of |d|
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = x[i] - y[i];
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<double> rank(n);
    for (int i = 0; i < n; ++i) rank[order[i]] = i + 1;
    double w_plus = 0;
    for (int i = 0; i < n; ++i)
      if (d[i] > 0) w_plus += rank[i];
    int ge = 0;
    const int total = 1 << n;
    for (int mask = 0; mask < total; ++mask) {
      double w = 0;
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i)) w += rank[i];
      if (w >= w_plus - 1e-12) ++ge;
    }
    const double oracle = static_cast<double>(ge) / total;
    CHECK(wilcoxon_signed_rank(x, y, Alternative::Greater) ==
          doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon degenerate and large-n behavior") {
  std::vector<double> x{1, 2, 3}, y{1, 2, 3};
  CHECK_THROWS_AS(wilcoxon_signed_rank(x, y), MetricsError);

  std::mt19937_64 rng(11);
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    b[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    a[i] = b[i] + 0.5 + std::uniform_real_distribution<double>(0, 0.2)(rng);
  }
  CHECK(wilcoxon_signed_rank(a, b, Alternative::Greater) < 0.01);
  CHECK(wilcoxon_signed_rank(a, b, Alternative::Less) > 0.95);
}

TEST_CASE("bootstrap interval basics") {
  std::vector<double> constant(10, 3.25);
  auto [lo, hi] = bootstrap_ci(constant, 0.95, 2000, 1);
  CHECK(lo == doctest::Approx(3.25));
  CHECK(hi == doctest::Approx(3.25));

  std::mt19937_64 rng(2);
  std::vector<double> sample(50);
  for (auto& v : sample)
    v = std::normal_distribution<double>(1.0, 0.3)(rng);
  double mean = 0;
  for (double v : sample) mean += v;
  mean /= sample.size();
  auto [l2, h2] = bootstrap_ci(sample, 0.95, 5000, 3);
  CHECK(l2 <= mean);
  CHECK(h2 >= mean);
  // deterministic under seed
  auto [l3, h3] = bootstrap_ci(sample, 0.95, 5000, 3);
  CHECK(l2 == l3);
  CHECK(h2 == h3);
}

TEST_CASE("bootstrap coverage near nominal level") {
  std::mt19937_64 rng(77);
  int covered = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> sample(40);
    for (auto& v : sample)
      v = std::normal_distribution<double>(0.0, 1.0)(rng);
    auto [lo, hi] = bootstrap_ci(sample, 0.95, 1000, t);
    if (lo <= 0.0 && 0.0 <= hi) ++covered;
  }
  const double coverage = static_cast<double>(covered) / trials;
  CHECK(coverage > 0.90);
  CHECK(coverage <= 1.0);
}

TEST_CASE("iou and balanced accuracy on toy rasters") {
  std::vector<std::uint8_t> truth{1, 1, 0, 0};
  std::vector<std::uint8_t> mask{1, 1, 1, 1};
  CHECK(iou(truth, truth, mask) == doctest::Approx(1.0));
  CHECK(balanced_accuracy(truth, truth, mask) == doctest::Approx(1.0));

  std::vector<std::uint8_t> disjoint{0, 0, 1, 1};
  CHECK(iou(disjoint, truth, mask) == doctest::Approx(0.0));

  // half overlap: pred {1,0,1,0} vs truth {1,1,0,0}: inter 1, union 3
  std::vector<std::uint8_t> half{1, 0, 1, 0};
  CHECK(iou(half, truth, mask) == doctest::Approx(1.0 / 3.0));

  std::vector<std::uint8_t> all_nav{1, 1, 1, 1};
  CHECK(balanced_accuracy(all_nav, truth, mask) == doctest::Approx(0.5));

  std::vector<std::uint8_t> empty_mask{0, 0, 0, 0};
  CHECK_THROWS_AS(iou(half, truth, empty_mask), MetricsError);

  // mask excludes the disagreement
  std::vector<std::uint8_t> partial_mask{1, 0, 0, 1};
  CHECK(iou(half, truth, partial_mask) == doctest::Approx(1.0));
}
