#pragma once
// Agent embodiment: disc kinematics on an occupancy grid, episodic and
// global coordinate frames, episode sampling.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/grid.hpp"

namespace navlab {

enum class Action : int {
  MoveForward = 0,
  TurnLeft = 1,
  TurnRight = 2,
  Stop = 3,
  Start = 4,  // observation-only token for t = 0, never emitted by a policy
};

constexpr int kPolicyActions = 4;
constexpr int kActionVocab = 5;

constexpr double kForwardStep = 0.25;       // meters
constexpr double kTurnStep = 10.0 * M_PI / 180.0;
constexpr double kAgentRadius = 0.1;        // meters (0.2 m diameter disc)
constexpr double kContactEps = 1e-3;        // meters backed off at contact
constexpr double kProximityCap = 0.5;       // meters

double normalize_angle(double theta);          // -> [0, 2*pi)
double signed_angle(double theta);             // -> (-pi, pi]
double angular_distance(double a, double b);   // |wrapped difference|

struct Pose {
  double x = 0.0, y = 0.0, z = 0.0;  // z always 0 in 2D
  double theta = 0.0;                // radians in [0, 2*pi), 0 = +x, ccw
};

enum class CoordMode { Episodic, Global };

struct Episode {
  std::string grid_id;
  Pose start;
  double goal_x = 0.0, goal_y = 0.0, goal_z = 0.0;
  double geodesic_dist = 0.0;
  CoordMode coord_mode = CoordMode::Episodic;
  int max_steps = 2000;
  double success_radius = 0.2;
};

struct Observation {
  std::array<double, 3> goal_rel{};  // goal in the episode frame
  std::array<double, 3> gps{};       // integrated position relative to start
  double compass = 0.0;              // heading relative to start, (-pi, pi]
  double proximity = 0.0;            // min(|goal_rel - gps|, 0.5)
  Action prev_action = Action::Start;
};

struct StepResult {
  Observation observation;
  bool collided = false;
  bool done = false;
  bool success = false;
  double geo_dist_to_goal = 0.0;
};

struct StepRecord {
  int t = 0;
  double x = 0.0, y = 0.0, theta = 0.0;
  int action = 0;
  bool collided = false;
  double reward = 0.0;
  double geo_dist = 0.0;
};

struct Trajectory {
  Episode episode;
  std::vector<StepRecord> steps;
  bool success = false;
  // Optional flattened (h, c) snapshot per step, filled by analysis code.
  std::vector<std::vector<float>> hidden;

  double path_length() const;
};

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First contact distance of a disc swept from (x, y) along the unit
// direction (dx, dy), against blocked cells, capped at max_dist.
double disc_cast(const OccupancyGrid& grid, double x, double y, double dx,
                 double dy, double max_dist, double radius);

// Value-semantic environment state machine. Instances are independent; a
// single instance must not be stepped concurrently.
class EnvState {
 public:
  EnvState() = default;
  EnvState(const OccupancyGrid* grid, Episode episode);

  // Probe support: report observations in a frame anchored at a pose other
  // than the episode start (the transplanting agent's original frame).
  void set_frame_anchor(const Pose& anchor) { frame_ = anchor; }

  Observation observation() const;
  StepResult step(Action action);

  const Pose& pose() const { return pose_; }
  const Episode& episode() const { return ep_; }
  const OccupancyGrid& grid() const { return *grid_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  bool success() const { return success_; }
  Action prev_action() const { return prev_action_; }
  double geo_dist_to_goal() const;
  double euclid_dist_to_goal() const;
  // Heading along the shortest path to goal from the current cell.
  double shortest_path_heading() const;

 private:
  const OccupancyGrid* grid_ = nullptr;
  Episode ep_;
  Pose pose_;
  Pose frame_;
  int t_ = 0;
  bool done_ = false;
  bool success_ = false;
  Action prev_action_ = Action::Start;
  std::vector<double> goal_field_;  // geodesic distance to goal per cell
};

struct EpisodeConstraints {
  double min_geo = 1.2;
  double max_geo = 30.0;
  double min_ratio = 1.1;
  int max_tries = 4000;
};

// Start pose uniform over disc-valid free cells with uniform heading; goal
// satisfies the geodesic range and detour-ratio constraints and is reachable
// by the disc. Throws EnvError when the retry budget is exhausted.
Episode sample_episode(const OccupancyGrid& grid, std::mt19937_64& rng,
                       const EpisodeConstraints& constraints = {},
                       CoordMode mode = CoordMode::Episodic);

// JSON-lines trajectory log, one record per step.
std::string trajectory_to_jsonl(const Trajectory& traj);
Trajectory trajectory_from_jsonl(const std::string& text);

}  // namespace navlab
