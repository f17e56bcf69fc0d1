#include "navlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace navlab {

double normalize_angle(double theta) {
  const double two_pi = 2.0 * M_PI;
  double t = std::fmod(theta, two_pi);
  if (t < 0) t += two_pi;
  return t;
}

double signed_angle(double theta) {
  double t = normalize_angle(theta);
  if (t > M_PI) t -= 2.0 * M_PI;
  return t;
}

double angular_distance(double a, double b) {
  return std::abs(signed_angle(a - b));
}

double Trajectory::path_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < steps.size(); ++i) {
    const double dx = steps[i].x - steps[i - 1].x;
    const double dy = steps[i].y - steps[i - 1].y;
    len += std::hypot(dx, dy);
  }
  return len;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Entry parameter of ray p + t*d into an AABB, or +inf. Starting inside
// counts as t = 0.
double ray_aabb(double px, double py, double dx, double dy, double x0,
                double x1, double y0, double y1) {
  double tmin = 0.0, tmax = kInf;
  for (int axis = 0; axis < 2; ++axis) {
    const double p = axis == 0 ? px : py;
    const double d = axis == 0 ? dx : dy;
    const double lo = axis == 0 ? x0 : y0;
    const double hi = axis == 0 ? x1 : y1;
    if (std::abs(d) < 1e-15) {
      if (p < lo || p > hi) return kInf;
    } else {
      double t1 = (lo - p) / d;
      double t2 = (hi - p) / d;
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return kInf;
    }
  }
  return tmin;
}

double ray_circle(double px, double py, double dx, double dy, double cx,
                  double cy, double r) {
  const double ox = px - cx, oy = py - cy;
  const double b = ox * dx + oy * dy;
  const double c = ox * ox + oy * oy - r * r;
  if (c <= 0.0) return 0.0;  // already inside
  const double disc = b * b - c;
  if (disc < 0.0) return kInf;
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? t : kInf;
}

// First contact of a disc swept along (dx, dy) with one blocked cell,
// via the Minkowski-expanded rounded rectangle.
double disc_cell_contact(double px, double py, double dx, double dy,
                         double bx0, double by0, double cell, double r) {
  const double bx1 = bx0 + cell, by1 = by0 + cell;
  double t = ray_aabb(px, py, dx, dy, bx0 - r, bx1 + r, by0, by1);
  t = std::min(t, ray_aabb(px, py, dx, dy, bx0, bx1, by0 - r, by1 + r));
  t = std::min(t, ray_circle(px, py, dx, dy, bx0, by0, r));
  t = std::min(t, ray_circle(px, py, dx, dy, bx1, by0, r));
  t = std::min(t, ray_circle(px, py, dx, dy, bx0, by1, r));
  t = std::min(t, ray_circle(px, py, dx, dy, bx1, by1, r));
  return t;
}

}  // namespace

double disc_cast(const OccupancyGrid& grid, double x, double y, double dx,
                 double dy, double max_dist, double radius) {
  const double ex = x + dx * max_dist, ey = y + dy * max_dist;
  const double pad = radius + grid.cell_size;
  const int cx0 = std::max(0, grid.cell_x(std::min(x, ex) - pad));
  const int cx1 = std::min(grid.width - 1, grid.cell_x(std::max(x, ex) + pad));
  const int cy0 = std::max(0, grid.cell_y(std::min(y, ey) - pad));
  const int cy1 = std::min(grid.height - 1, grid.cell_y(std::max(y, ey) + pad));
  double best = max_dist;
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      if (grid.navigable(cx, cy)) continue;
      const double t = disc_cell_contact(x, y, dx, dy, cx * grid.cell_size,
                                         cy * grid.cell_size, grid.cell_size,
                                         radius);
      best = std::min(best, t);
    }
  }
  return best;
}

EnvState::EnvState(const OccupancyGrid* grid, Episode episode)
    : grid_(grid), ep_(std::move(episode)), pose_(ep_.start), frame_(ep_.start) {
  pose_.theta = normalize_angle(pose_.theta);
  const int gx = grid_->cell_x(ep_.goal_x);
  const int gy = grid_->cell_y(ep_.goal_y);
  if (!grid_->in_bounds(gx, gy))
    throw EnvError("EnvState: goal outside grid bounds");
  goal_field_ = distance_field(*grid_, {grid_->idx(gx, gy)});
}

double EnvState::geo_dist_to_goal() const {
  const int cx = grid_->cell_x(pose_.x);
  const int cy = grid_->cell_y(pose_.y);
  return goal_field_[grid_->idx(cx, cy)];
}

double EnvState::euclid_dist_to_goal() const {
  return std::hypot(ep_.goal_x - pose_.x, ep_.goal_y - pose_.y);
}

double EnvState::shortest_path_heading() const {
  const int cx = grid_->cell_x(pose_.x);
  const int cy = grid_->cell_y(pose_.y);
  double best = goal_field_[grid_->idx(cx, cy)];
  int bdx = 0, bdy = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = cx + dx, ny = cy + dy;
      if (!grid_->navigable(nx, ny)) continue;
      const double d = goal_field_[grid_->idx(nx, ny)];
      if (d < best) {
        best = d;
        bdx = dx;
        bdy = dy;
      }
    }
  }
  if (bdx == 0 && bdy == 0)
    return normalize_angle(std::atan2(ep_.goal_y - pose_.y, ep_.goal_x - pose_.x));
  return normalize_angle(std::atan2(static_cast<double>(bdy),
                                    static_cast<double>(bdx)));
}

Observation EnvState::observation() const {
  Observation obs;
  obs.prev_action = prev_action_;
  if (ep_.coord_mode == CoordMode::Episodic) {
    const double c = std::cos(-frame_.theta), s = std::sin(-frame_.theta);
    const double rx = pose_.x - frame_.x, ry = pose_.y - frame_.y;
    obs.gps = {c * rx - s * ry, s * rx + c * ry, 0.0};
    const double gx = ep_.goal_x - frame_.x, gy = ep_.goal_y - frame_.y;
    obs.goal_rel = {c * gx - s * gy, s * gx + c * gy, 0.0};
    obs.compass = signed_angle(pose_.theta - frame_.theta);
  } else {
    obs.gps = {pose_.x, pose_.y, 0.0};
    obs.goal_rel = {ep_.goal_x, ep_.goal_y, 0.0};
    obs.compass = signed_angle(pose_.theta);
  }
  const double dx = obs.goal_rel[0] - obs.gps[0];
  const double dy = obs.goal_rel[1] - obs.gps[1];
  obs.proximity = std::min(std::hypot(dx, dy), kProximityCap);
  return obs;
}

StepResult EnvState::step(Action action) {
  if (done_) throw EnvError("EnvState::step: episode already done");
  if (action == Action::Start)
    throw EnvError("EnvState::step: Start is not an emittable action");

  bool collided = false;
  switch (action) {
    case Action::TurnLeft:
      pose_.theta = normalize_angle(pose_.theta + kTurnStep);
      break;
    case Action::TurnRight:
      pose_.theta = normalize_angle(pose_.theta - kTurnStep);
      break;
    case Action::MoveForward: {
      const double dx = std::cos(pose_.theta), dy = std::sin(pose_.theta);
      const double hit = disc_cast(*grid_, pose_.x, pose_.y, dx, dy,
                                   kForwardStep, kAgentRadius);
      double realized = kForwardStep;
      if (hit < kForwardStep) {
        realized = std::max(0.0, hit - kContactEps);
        collided = true;
      }
      pose_.x += dx * realized;
      pose_.y += dy * realized;
      break;
    }
    case Action::Stop:
      done_ = true;
      success_ = euclid_dist_to_goal() <= ep_.success_radius;
      break;
    default:
      break;
  }
  ++t_;
  if (!done_ && t_ >= ep_.max_steps) done_ = true;
  prev_action_ = action;

  StepResult result;
  result.observation = observation();
  result.collided = collided;
  result.done = done_;
  result.success = success_;
  result.geo_dist_to_goal = geo_dist_to_goal();
  return result;
}

Episode sample_episode(const OccupancyGrid& grid, std::mt19937_64& rng,
                       const EpisodeConstraints& constraints, CoordMode mode) {
  const std::vector<std::size_t> valid = disc_valid_cells(grid, kAgentRadius);
  if (valid.size() < 2)
    throw EnvError("sample_episode: grid has no disc-valid cells");

  // Disc-reachability components over valid cells (4-connected).
  std::vector<int> comp(grid.cell_count(), -1);
  {
    std::vector<std::uint8_t> is_valid(grid.cell_count(), 0);
    for (auto i : valid) is_valid[i] = 1;
    int next = 0;
    for (auto s : valid) {
      if (comp[s] >= 0) continue;
      std::vector<std::size_t> stack{s};
      comp[s] = next;
      while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(i % grid.width);
        const int y = static_cast<int>(i / grid.width);
        const int nbs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (auto& nb : nbs) {
          const int nx = x + nb[0], ny = y + nb[1];
          if (!grid.in_bounds(nx, ny)) continue;
          const std::size_t ni = grid.idx(nx, ny);
          if (is_valid[ni] && comp[ni] < 0) {
            comp[ni] = next;
            stack.push_back(ni);
          }
        }
      }
      ++next;
    }
  }

  std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);

  int tries = 0;
  while (tries < constraints.max_tries) {
    const std::size_t si = valid[pick(rng)];
    const double heading = angle(rng);
    const auto field = distance_field(grid, {si});
    const double sx = grid.center_x(static_cast<int>(si % grid.width));
    const double sy = grid.center_y(static_cast<int>(si / grid.width));
    for (int g = 0; g < 20 && tries < constraints.max_tries; ++g, ++tries) {
      const std::size_t gi = valid[pick(rng)];
      if (gi == si || comp[gi] != comp[si]) continue;
      const double d = field[gi];
      if (!(d >= constraints.min_geo && d <= constraints.max_geo)) continue;
      const double gx = grid.center_x(static_cast<int>(gi % grid.width));
      const double gy = grid.center_y(static_cast<int>(gi / grid.width));
      const double euclid = std::hypot(gx - sx, gy - sy);
      if (euclid <= 0.0 || d / euclid < constraints.min_ratio) continue;

      Episode ep;
      ep.start = Pose{sx, sy, 0.0, normalize_angle(heading)};
      ep.goal_x = gx;
      ep.goal_y = gy;
      ep.geodesic_dist = d;
      ep.coord_mode = mode;
      return ep;
    }
  }
  throw EnvError("sample_episode: retry budget exhausted");
}

std::string trajectory_to_jsonl(const Trajectory& traj) {
  std::string out;
  nlohmann::json meta;
  meta["meta"] = {{"start", {traj.episode.start.x, traj.episode.start.y,
                             traj.episode.start.theta}},
                  {"goal", {traj.episode.goal_x, traj.episode.goal_y}},
                  {"geodesic_dist", traj.episode.geodesic_dist},
                  {"success", traj.success},
                  {"grid_id", traj.episode.grid_id}};
  out += meta.dump();
  out.push_back('\n');
  for (const auto& s : traj.steps) {
    nlohmann::json j;
    j["t"] = s.t;
    j["x"] = s.x;
    j["y"] = s.y;
    j["theta"] = s.theta;
    j["action"] = s.action;
    j["collided"] = s.collided;
    j["reward"] = s.reward;
    j["geo_dist"] = s.geo_dist;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

Trajectory trajectory_from_jsonl(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("meta")) {
      const auto& m = j["meta"];
      traj.episode.start.x = m["start"][0];
      traj.episode.start.y = m["start"][1];
      traj.episode.start.theta = m["start"][2];
      traj.episode.goal_x = m["goal"][0];
      traj.episode.goal_y = m["goal"][1];
      traj.episode.geodesic_dist = m["geodesic_dist"];
      traj.success = m["success"];
      traj.episode.grid_id = m.value("grid_id", std::string());
      continue;
    }
    StepRecord s;
    s.t = j["t"];
    s.x = j["x"];
    s.y = j["y"];
    s.theta = j["theta"];
    s.action = j["action"];
    s.collided = j["collided"];
    s.reward = j["reward"];
    s.geo_dist = j["geo_dist"];
    traj.steps.push_back(s);
  }
  return traj;
}

}  // namespace navlab
