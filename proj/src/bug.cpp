#include "navlab/bug.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "navlab/metrics.hpp"

namespace navlab {

const char* bug_variant_name(BugVariant v) {
  switch (v) {
    case BugVariant::Left: return "left";
    case BugVariant::Right: return "right";
    case BugVariant::Clairvoyant: return "clairvoyant";
  }
  return "?";
}

namespace {

constexpr double kLookahead = kForwardStep;  // leave-condition clearance probe
constexpr double kWaypointReach = 0.09;  // waypoint counts as reached below this
constexpr double kPassNear = 0.3;  // max range for passed-waypoint detection
constexpr std::size_t kPursuitWindow = 8;  // waypoints the tracker may cut ahead

double goal_bearing(const EnvState& env) {
  return std::atan2(env.episode().goal_y - env.pose().y,
                    env.episode().goal_x - env.pose().x);
}

double goal_euclid(const EnvState& env) {
  return std::hypot(env.episode().goal_x - env.pose().x,
                    env.episode().goal_y - env.pose().y);
}

// A wall-follow route: waypoints along the obstacle boundary, ending where
// direct travel toward the goal becomes available again.
struct Route {
  std::vector<std::pair<double, double>> pts;
  bool leaves = false;  // final waypoint satisfies the leave condition
};

// Plan a wall-follow route by walking cell centers that admit the agent's
// disc, keeping the blocking obstacle on the chosen side (hand-on-wall rule
// on the cell lattice). The route is cut at the first point that is strictly
// closer to the goal than the hit point and has a clear forward probe toward
// it; if the walk loops around the obstacle without finding one, it is cut
// at the boundary point closest to the goal instead, so each encounter still
// makes progress.
Route plan_follow_route(const OccupancyGrid& g, const Episode& ep, double sx,
                        double sy, double heading, double hit_dist,
                        bool wall_on_right) {
  Route route;
  auto cell_free = [&](int cx, int cy) {
    return cx >= 0 && cy >= 0 && cx < g.width && cy < g.height &&
           disc_free(g, g.center_x(cx), g.center_y(cy), kAgentRadius);
  };

  // deterministic nearest disc-admitting cell center around the start pose
  int scx = -1, scy = -1;
  double best_start = kUnreachable;
  for (int oy = -2; oy <= 2; ++oy)
    for (int ox = -2; ox <= 2; ++ox) {
      const int cx = g.cell_x(sx) + ox, cy = g.cell_y(sy) + oy;
      if (!cell_free(cx, cy)) continue;
      const double d = std::hypot(g.center_x(cx) - sx, g.center_y(cy) - sy);
      if (d < best_start - 1e-12) {
        best_start = d;
        scx = cx;
        scy = cy;
      }
    }
  if (scx < 0) return route;

  auto leave_at = [&](double x, double y) {
    const double dist = std::hypot(ep.goal_x - x, ep.goal_y - y);
    if (dist <= ep.success_radius) return true;
    if (dist >= hit_dist - 1e-6) return false;
    const double probe = std::min(kLookahead, dist);
    return disc_cast(g, x, y, (ep.goal_x - x) / dist, (ep.goal_y - y) / dist,
                     probe, kAgentRadius) >= probe - 1e-9;
  };

  static constexpr int dx4[4] = {1, 0, -1, 0};
  static constexpr int dy4[4] = {0, 1, 0, -1};
  int d = static_cast<int>(
              ((std::lround(heading / (M_PI / 2.0)) % 4) + 4) % 4);
  // attach the wall to the chosen side: find the blocked neighbor nearest
  // the collision heading and start walking perpendicular to it, so the
  // hand-on-wall invariant holds from the first step
  int wall_d = -1;
  double wall_err = kUnreachable;
  for (int k = 0; k < 4; ++k) {
    if (cell_free(scx + dx4[k], scy + dy4[k])) continue;
    const double e = angular_distance(k * (M_PI / 2.0), heading);
    if (e < wall_err - 1e-12) {
      wall_err = e;
      wall_d = k;
    }
  }
  if (wall_d >= 0) d = wall_on_right ? (wall_d + 1) & 3 : (wall_d + 3) & 3;
  // hand-on-wall priorities: turn into the wall side first, then straight,
  // then away, then back
  const int prio[4] = {wall_on_right ? 3 : 1, 0, wall_on_right ? 1 : 3, 2};

  std::set<std::tuple<int, int, int>> seen;
  std::vector<std::pair<int, int>> cells{{scx, scy}};
  const int cap = 8 * g.width * g.height;
  for (int step = 0; step < cap; ++step) {
    const auto [cx, cy] = cells.back();
    // the start cell sits at the hit distance by construction, so skip it
    if (step > 0 && leave_at(g.center_x(cx), g.center_y(cy))) {
      route.leaves = true;
      break;
    }
    if (!seen.insert({cx, cy, d}).second) break;  // full loop, no leave point
    int move = -1;
    for (int k = 0; k < 4; ++k) {
      const int nd = (d + prio[k]) & 3;
      if (cell_free(cx + dx4[nd], cy + dy4[nd])) {
        move = nd;
        break;
      }
    }
    if (move < 0) break;  // isolated cell
    d = move;
    cells.emplace_back(cx + dx4[d], cy + dy4[d]);
  }

  if (!route.leaves) {  // cut at the boundary point closest to the goal
    std::size_t best_i = 0;
    double best_e = kUnreachable;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double e = std::hypot(ep.goal_x - g.center_x(cells[i].first),
                                  ep.goal_y - g.center_y(cells[i].second));
      if (e < best_e - 1e-9) {
        best_e = e;
        best_i = i;
      }
    }
    cells.resize(best_i + 1);
  }

  // collapse dead-end spurs the walk entered and backed out of
  std::vector<std::pair<int, int>> pruned;
  for (const auto& c : cells) {
    if (pruned.size() >= 2 && pruned[pruned.size() - 2] == c)
      pruned.pop_back();
    else
      pruned.push_back(c);
  }
  route.pts.reserve(pruned.size());
  for (const auto& [cx, cy] : pruned)
    route.pts.emplace_back(g.center_x(cx), g.center_y(cy));
  return route;
}

struct BugState {
  std::vector<std::pair<double, double>> route;
  std::size_t next = 0;
  bool following() const { return next < route.size(); }
};

bool choose_follow_side(const EnvState& env, double hit_dist,
                        BugVariant variant) {
  switch (variant) {
    case BugVariant::Left: return false;  // wall kept on the left
    case BugVariant::Right: return true;
    case BugVariant::Clairvoyant: {
      // score both sides by boundary travel plus remaining geodesic distance
      // from the leave point
      auto score = [&](bool wor) {
        const Route r = plan_follow_route(env.grid(), env.episode(),
                                          env.pose().x, env.pose().y,
                                          env.pose().theta, hit_dist, wor);
        if (!r.leaves || r.pts.size() < 2) return kUnreachable;
        double travel = 0.0;
        for (std::size_t i = 1; i < r.pts.size(); ++i)
          travel += std::hypot(r.pts[i].first - r.pts[i - 1].first,
                               r.pts[i].second - r.pts[i - 1].second);
        return travel + geodesic_distance(env.grid(), r.pts.back().first,
                                          r.pts.back().second,
                                          env.episode().goal_x,
                                          env.episode().goal_y);
      };
      return !(score(false) <= score(true));
    }
  }
  return true;
}

Action next_action(const EnvState& env, BugState& st, BugVariant variant) {
  (void)variant;
  if (goal_euclid(env) <= env.episode().success_radius) return Action::Stop;
  if (st.following()) {
    const double x = env.pose().x, y = env.pose().y;
    auto clear_to = [&](std::size_t k) {
      const double dx = st.route[k].first - x, dy = st.route[k].second - y;
      const double dist = std::hypot(dx, dy);
      return dist < 1e-9 ||
             disc_cast(env.grid(), x, y, dx / dist, dy / dist, dist,
                       kAgentRadius) >= dist - 1e-9;
    };
    // advance past the farthest windowed waypoint already reached, or one
    // the forward step overshot (behind us relative to the path tangent and
    // with a clear line to its successor)
    const std::size_t last = st.route.size() - 1;
    const std::size_t hi =
        std::min(st.next + kPursuitWindow, st.route.size());
    for (std::size_t k = hi; k-- > st.next;) {
      const double dx = st.route[k].first - x, dy = st.route[k].second - y;
      const double dist = std::hypot(dx, dy);
      bool consume = dist < kWaypointReach;
      if (!consume && k < last && dist < kPassNear) {
        const double tx = st.route[k + 1].first - st.route[k].first;
        const double ty = st.route[k + 1].second - st.route[k].second;
        consume = dx * tx + dy * ty < 0.0 && clear_to(k + 1);
      }
      if (!consume && k == last && dist < kPassNear) {
        // the step quantum may never land on the leave point itself; finish
        // the route as soon as the leave condition holds from the actual pose
        const double gx = env.episode().goal_x - x;
        const double gy = env.episode().goal_y - y;
        const double gd = std::hypot(gx, gy);
        const double probe = std::min(kForwardStep, gd);
        consume = gd > 1e-9 &&
                  disc_cast(env.grid(), x, y, gx / gd, gy / gd, probe,
                            kAgentRadius) >= probe - 1e-9;
      }
      if (consume) {
        st.next = k + 1;
        break;
      }
    }
    if (st.following()) {
      // pure pursuit: aim at the farthest windowed waypoint in clear sight
      std::size_t j = std::min(st.next + kPursuitWindow, st.route.size()) - 1;
      for (; j > st.next; --j)
        if (clear_to(j)) break;
      const double bearing =
          std::atan2(st.route[j].second - y, st.route[j].first - x);
      const double err = signed_angle(bearing - env.pose().theta);
      if (std::abs(err) > kTurnStep / 2.0 + 1e-9)
        return err > 0 ? Action::TurnLeft : Action::TurnRight;
      return Action::MoveForward;
    }
    st.route.clear();  // route finished: resume direct travel
    st.next = 0;
  }
  const double err = signed_angle(goal_bearing(env) - env.pose().theta);
  if (std::abs(err) > kTurnStep / 2.0 + 1e-9)
    return err > 0 ? Action::TurnLeft : Action::TurnRight;
  return Action::MoveForward;
}

}  // namespace

Trajectory bug_run(const OccupancyGrid& grid, const Episode& episode,
                   BugVariant variant) {
  EnvState env(&grid, episode);
  BugState st;
  Trajectory traj;
  traj.episode = episode;
  traj.steps.push_back({0, env.pose().x, env.pose().y, env.pose().theta,
                        static_cast<int>(Action::Start), false, 0.0,
                        env.geo_dist_to_goal()});
  while (!env.done()) {
    const Action a = next_action(env, st, variant);
    const auto r = env.step(a);
    if (a == Action::MoveForward && r.collided) {
      if (!st.following()) {  // new wall encounter: plan a follow route
        const double hit = goal_euclid(env);
        const bool wor = choose_follow_side(env, hit, variant);
        st.route = plan_follow_route(grid, episode, env.pose().x,
                                     env.pose().y, env.pose().theta, hit, wor)
                       .pts;
        if (st.route.size() < 2)  // degenerate walk: try the other side
          st.route = plan_follow_route(grid, episode, env.pose().x,
                                       env.pose().y, env.pose().theta, hit,
                                       !wor)
                         .pts;
        st.next = 0;
      } else {  // tracking hit something: drop the route and replan fresh
        st.route.clear();
        st.next = 0;
      }
    }
    traj.steps.push_back({env.t(), env.pose().x, env.pose().y,
                          env.pose().theta, static_cast<int>(a), r.collided,
                          0.0, r.geo_dist_to_goal});
  }
  traj.success = env.success();
  return traj;
}

std::string bug_benchmark(const std::vector<const OccupancyGrid*>& grids,
                          const std::vector<Episode>& episodes,
                          const std::vector<BugVariant>& variants,
                          std::uint64_t bootstrap_seed) {
  if (grids.size() != episodes.size())
    throw BugError("bug_benchmark: grids/episodes size mismatch");
  std::ostringstream csv;
  csv << "episode,variant,success,spl,steps\n";
  csv.precision(10);
  for (BugVariant v : variants) {
    std::vector<double> succ, spls;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      const auto traj = bug_run(*grids[i], episodes[i], v);
      const double s = spl(traj, episodes[i]);
      succ.push_back(traj.success ? 1.0 : 0.0);
      spls.push_back(s);
      csv << i << ',' << bug_variant_name(v) << ',' << (traj.success ? 1 : 0)
          << ',' << s << ',' << traj.steps.size() - 1 << '\n';
    }
    const auto [s_lo, s_hi] = bootstrap_ci(succ, 0.95, 2000, bootstrap_seed);
    const auto [p_lo, p_hi] = bootstrap_ci(spls, 0.95, 2000, bootstrap_seed);
    double sm = 0, pm = 0;
    for (double x : succ) sm += x;
    for (double x : spls) pm += x;
    sm /= succ.size();
    pm /= spls.size();
    csv << "summary," << bug_variant_name(v) << ',' << sm << ',' << s_lo << ','
        << s_hi << ',' << pm << ',' << p_lo << ',' << p_hi << '\n';
  }
  return csv.str();
}

}  // namespace navlab
