#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "navlab/bug.hpp"
#include "navlab/metrics.hpp"

using namespace navlab;

namespace {

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

Episode episode_between(const OccupancyGrid& g, double sx, double sy,
                        double gx, double gy, double theta = 0.0) {
  Episode ep;
  ep.start = Pose{sx, sy, 0.0, theta};
  ep.goal_x = gx;
  ep.goal_y = gy;
  ep.geodesic_dist = geodesic_distance(g, sx, sy, gx, gy);
  return ep;
}

}  // namespace

TEST_CASE("empty room with the goal straight ahead is near optimal") {
  const auto g = open_grid(48, 32);
  const auto ep = episode_between(g, 1.0, 2.0, 4.0, 2.0);
  for (BugVariant v :
       {BugVariant::Left, BugVariant::Right, BugVariant::Clairvoyant}) {
    const auto traj = bug_run(g, ep, v);
    CHECK(traj.success);
    CHECK(spl(traj, ep) >= 0.95);
  }
}

TEST_CASE("left and right mirror each other on a mirror-symmetric map") {
  auto g = open_grid(48, 32);
  // vertical wall symmetric about the start-goal line y = 2.0
  for (int y = 8; y <= 23; ++y) g.nav[g.idx(24, y)] = 0;
  const auto ep = episode_between(g, 1.0, 2.0, 5.0, 2.0);
  const auto left = bug_run(g, ep, BugVariant::Left);
  const auto right = bug_run(g, ep, BugVariant::Right);
  CHECK(left.success);
  CHECK(right.success);
  REQUIRE(left.steps.size() == right.steps.size());
  for (std::size_t i = 0; i < left.steps.size(); ++i) {
    int a = left.steps[i].action;
    const int b = right.steps[i].action;
    if (a == static_cast<int>(Action::TurnLeft))
      a = static_cast<int>(Action::TurnRight);
    else if (a == static_cast<int>(Action::TurnRight))
      a = static_cast<int>(Action::TurnLeft);
    CHECK(a == b);
    CHECK(left.steps[i].y + right.steps[i].y == doctest::Approx(4.0).epsilon(1e-6));
  }
}

TEST_CASE("clairvoyant picks the better side of an asymmetric wall") {
  auto g = open_grid(48, 32);
  // wall reaching close to the top border: going under is much shorter
  for (int y = 8; y <= 26; ++y) g.nav[g.idx(24, y)] = 0;
  const auto ep = episode_between(g, 1.0, 2.0, 5.0, 2.0);
  const auto left = bug_run(g, ep, BugVariant::Left);
  const auto right = bug_run(g, ep, BugVariant::Right);
  const auto oracle = bug_run(g, ep, BugVariant::Clairvoyant);
  CHECK(oracle.success);
  const double best = std::max(spl(left, ep), spl(right, ep));
  CHECK(spl(oracle, ep) >= best - 0.05);
}

TEST_CASE("clairvoyant completes a maze episode set") {
  std::mt19937_64 rng(42);
  for (std::uint64_t seed : {201, 202, 203, 204, 205}) {
    const auto g = generate_maze(seed, 32, 32, 0.3);
    for (int i = 0; i < 4; ++i) {
      auto ep = sample_episode(g, rng);
      ep.max_steps = 4000;
      const auto traj = bug_run(g, ep, BugVariant::Clairvoyant);
      CHECK(traj.success);
      // embodiment invariant: the disc never enters blocked space
      for (const auto& s : traj.steps)
        CHECK(disc_free(g, s.x, s.y, kAgentRadius - 1e-9));
    }
  }
}

TEST_CASE("benchmark report is deterministic and self-consistent") {
  std::mt19937_64 rng(7);
  const auto g = generate_maze(301, 32, 32, 0.3);
  std::vector<const OccupancyGrid*> grids;
  std::vector<Episode> eps;
  for (int i = 0; i < 5; ++i) {
    auto ep = sample_episode(g, rng);
    ep.max_steps = 4000;
    grids.push_back(&g);
    eps.push_back(ep);
  }
  const std::vector<BugVariant> variants{BugVariant::Left,
                                         BugVariant::Clairvoyant};
  const auto a = bug_benchmark(grids, eps, variants, 9);
  const auto b = bug_benchmark(grids, eps, variants, 9);
  CHECK(a == b);

  // the summary mean SPL must equal the hand-aggregated per-episode rows
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);  // header
  double left_spl_sum = 0;
  int left_rows = 0;
  double left_summary_spl = -1;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string tok;
    while (std::getline(row, tok, ',')) f.push_back(tok);
    if (f[0] == "summary" && f[1] == "left") {
      left_summary_spl = std::stod(f[5]);
    } else if (f[0] != "summary" && f[1] == "left") {
      left_spl_sum += std::stod(f[3]);
      ++left_rows;
    }
  }
  REQUIRE(left_rows == 5);
  CHECK(left_summary_spl == doctest::Approx(left_spl_sum / 5).epsilon(1e-9));
}
