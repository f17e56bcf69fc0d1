#include <cmath>
#include <random>

#include "doctest.h"
#include "navlab/probe.hpp"

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

// All-zero network except a large Stop bias: argmax policy stops immediately.
std::vector<float> stop_params(const PolicyConfig& cfg) {
  const ParamLayout layout = ParamLayout::make(cfg);
  std::vector<float> p(layout.total, 0.0f);
  p[layout.head_b() + static_cast<int>(Action::Stop)] = 5.0f;
  return p;
}

const PolicyConfig kTiny{8, 1, 32};

}  // namespace

TEST_CASE("capture returns nothing for a failed episode") {
  const auto g = open_grid(32, 32);
  EpisodeSample s;
  s.grid = &g;
  s.episode = episode_between(g, 1.0, 1.0, 3.0, 3.0);
  s.episode.max_steps = 20;
  const ParamLayout layout = ParamLayout::make(kTiny);
  const std::vector<float> zeros(layout.total, 0.0f);  // argmax: forward only
  CHECK(!capture_memory(kTiny, zeros, s).has_value());
}

TEST_CASE("capture snapshot equals the streaming hidden at the Stop step") {
  const auto g = open_grid(32, 32);
  EpisodeSample s;
  s.grid = &g;
  s.episode = episode_between(g, 2.0, 2.0, 2.15, 2.0);
  const auto params = stop_params(kTiny);
  const auto cap = capture_memory(kTiny, params, s);
  REQUIRE(cap.has_value());
  CHECK(cap->trajectory.success);
  CHECK(cap->snapshot.agent_final_pose.x == doctest::Approx(2.0));

  const ParamLayout layout = ParamLayout::make(kTiny);
  EnvState env(&g, s.episode);
  const auto oracle =
      truncated_encode(kTiny, layout, params, {env.observation()});
  REQUIRE(cap->snapshot.hidden.h.size() == oracle.h.size());
  for (std::size_t l = 0; l < oracle.h.size(); ++l) {
    CHECK(cap->snapshot.hidden.h[l] == oracle.h[l]);
    CHECK(cap->snapshot.hidden.c[l] == oracle.c[l]);
  }

  // determinism: identical re-run gives identical snapshot bytes
  const auto cap2 = capture_memory(kTiny, params, s);
  REQUIRE(cap2.has_value());
  CHECK(cap->snapshot.hidden.flatten() == cap2->snapshot.hidden.flatten());
}

TEST_CASE("untrained memory: zero-length walk, determinism, distinctness") {
  const auto g = open_grid(32, 32);
  std::mt19937_64 rng(77);
  const auto rand_params = init_params(rng, kTiny);

  Trajectory none;
  none.episode = episode_between(g, 2.0, 2.0, 3.0, 2.0);
  const auto zero_walk = make_untrained_memory(kTiny, rand_params, g, none);
  for (const auto& v : zero_walk.hidden.h)
    for (float x : v) CHECK(x == 0.0f);
  for (const auto& v : zero_walk.hidden.c)
    for (float x : v) CHECK(x == 0.0f);

  // a short scripted agent walk: forward x3 then stop
  EnvState env(&g, none.episode);
  Trajectory walk;
  walk.episode = none.episode;
  walk.steps.push_back({0, env.pose().x, env.pose().y, env.pose().theta,
                        static_cast<int>(Action::Start), false, 0.0, 0.0});
  for (Action a : {Action::MoveForward, Action::MoveForward,
                   Action::MoveForward, Action::Stop}) {
    env.step(a);
    walk.steps.push_back({env.t(), env.pose().x, env.pose().y,
                          env.pose().theta, static_cast<int>(a), false, 0.0,
                          0.0});
  }

  const auto a = make_untrained_memory(kTiny, rand_params, g, walk);
  const auto b = make_untrained_memory(kTiny, rand_params, g, walk);
  CHECK(a.hidden.flatten() == b.hidden.flatten());
  CHECK(a.agent_final_pose.x == doctest::Approx(2.75));

  std::mt19937_64 rng2(78);
  const auto other = init_params(rng2, kTiny);
  const auto c = make_untrained_memory(kTiny, other, g, walk);
  CHECK(a.hidden.flatten() != c.hidden.flatten());
}

TEST_CASE("probe samples share the agent frame") {
  const auto g = open_grid(32, 32);
  const auto agent_ep = episode_between(g, 1.5, 1.5, 3.0, 2.5, 0.7);

  // scripted agent: wander a few steps, record its final gps reading
  EnvState env(&g, agent_ep);
  for (Action a : {Action::MoveForward, Action::TurnLeft, Action::MoveForward,
                   Action::MoveForward, Action::TurnRight})
    env.step(a);
  const Pose final_pose = env.pose();
  const auto agent_final_obs = env.observation();

  const auto zero = HiddenState<float>::zero(kTiny);

  SUBCASE("StoT restarts at S with the agent's final heading") {
    const auto s =
        make_probe_sample(g, agent_ep, final_pose, zero, ProbeTask::StoT);
    CHECK(s.episode.start.x == agent_ep.start.x);
    CHECK(s.episode.start.y == agent_ep.start.y);
    CHECK(s.episode.start.theta == final_pose.theta);
    CHECK(s.episode.goal_x == agent_ep.goal_x);
    REQUIRE(s.frame_anchor.has_value());
    CHECK(s.frame_anchor->theta == agent_ep.start.theta);
  }

  SUBCASE("TtoS initial gps equals the agent's final gps bit-exactly") {
    const auto s =
        make_probe_sample(g, agent_ep, final_pose, zero, ProbeTask::TtoS);
    CHECK(s.episode.goal_x == agent_ep.start.x);
    CHECK(s.episode.goal_y == agent_ep.start.y);
    CHECK(s.episode.geodesic_dist > 0.0);
    EnvState probe(&g, s.episode);
    probe.set_frame_anchor(*s.frame_anchor);
    const auto obs = probe.observation();
    CHECK(obs.gps[0] == agent_final_obs.gps[0]);
    CHECK(obs.gps[1] == agent_final_obs.gps[1]);
    CHECK(obs.compass == agent_final_obs.compass);
    CHECK(obs.prev_action == Action::Start);
  }
}

TEST_CASE("pool building captures successes and rejects hopeless agents") {
  std::vector<OccupancyGrid> maps{open_grid(32, 32)};
  EpisodeConstraints ec;
  ec.min_geo = 0.05;
  ec.max_geo = 0.19;  // every goal is inside the success radius
  ec.min_ratio = 1.0;
  std::mt19937_64 rng(5);
  const auto rand_params = init_params(rng, kTiny);

  const auto pool = build_probe_pool(kTiny, stop_params(kTiny), rand_params,
                                     &maps, ec, 50, 3, 50, 11);
  CHECK(pool.trained.size() == 3);
  CHECK(pool.untrained.size() == 3);
  CHECK(pool.agent_episodes.size() == 3);

  const ParamLayout layout = ParamLayout::make(kTiny);
  const std::vector<float> zeros(layout.total, 0.0f);  // never stops
  CHECK_THROWS_AS(build_probe_pool(kTiny, zeros, rand_params, &maps, ec, 20,
                                   3, 10, 11),
                  ProbeError);
}

TEST_CASE("probe training runs from a pool and leaves the agent untouched") {
  std::vector<OccupancyGrid> maps{open_grid(32, 32)};
  EpisodeConstraints ec;
  ec.min_geo = 0.05;
  ec.max_geo = 0.19;
  ec.min_ratio = 1.0;
  std::mt19937_64 rng(5);
  const auto rand_params = init_params(rng, kTiny);
  const auto agent = stop_params(kTiny);
  const auto agent_before = agent;

  const auto pool =
      build_probe_pool(kTiny, agent, rand_params, &maps, ec, 50, 3, 50, 11);
  TrainConfig tc;
  tc.seed = 3;
  tc.num_envs = 4;
  tc.rollout_len = 16;
  const auto probe = train_probe(kTiny, tc, pool,
                                 ProbeCondition::TrainedAgentMemory,
                                 ProbeTask::StoT, 2);
  CHECK(probe.size() == ParamLayout::make(kTiny).total);
  CHECK(agent == agent_before);  // no gradient path back to the agent
}

TEST_CASE("suite report aggregates per condition and task") {
  const auto g = open_grid(32, 32);
  std::mt19937_64 rng(5);
  ProbePairParams pair;
  pair.agent = stop_params(kTiny);
  pair.untrained = init_params(rng, kTiny);
  // probe params left empty: the suite falls back to the agent parameters

  std::vector<EpisodeSample> eval_eps;
  for (int i = 0; i < 4; ++i) {
    EpisodeSample s;
    s.grid = &g;
    s.episode = episode_between(g, 1.5 + 0.25 * i, 1.5, 1.65 + 0.25 * i, 1.5);
    s.episode.max_steps = 50;
    eval_eps.push_back(s);
  }
  const auto report = run_probe_suite(
      kTiny, {pair},
      {ProbeCondition::AllZeroMemory, ProbeCondition::TrainedAgentMemory},
      {ProbeTask::StoT}, eval_eps, 200, 9);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(row.episodes == 4);
    CHECK(row.success == doctest::Approx(1.0));
    CHECK(row.spl == doctest::Approx(1.0));
    CHECK(row.spl_lo <= row.spl);
    CHECK(row.spl_hi >= row.spl);
  }
  CHECK(report.paired.size() == 8);
  const auto csv = probe_report_csv(report);
  CHECK(csv.find("zero,s2t,4,") != std::string::npos);
  CHECK(csv.find("trained,s2t,4,") != std::string::npos);
}

TEST_CASE("no-input probe masks gps and compass at every step") {
  const auto g = open_grid(32, 32);
  std::mt19937_64 rng(21);
  const auto params = init_params(rng, kTiny);
  EpisodeSample s;
  s.grid = &g;
  s.episode = episode_between(g, 1.5, 1.5, 2.5, 2.0);
  s.episode.max_steps = 30;
  const auto res = run_no_input_probe(kTiny, params, s, 4);
  REQUIRE(res.trajectory.hidden.size() >= 2);

  // oracle: replay the recorded actions, zero gps/compass, teacher-force
  const ParamLayout layout = ParamLayout::make(kTiny);
  EnvState env(&g, s.episode);
  std::vector<Observation> masked;
  for (std::size_t i = 1; i < res.trajectory.steps.size(); ++i) {
    Observation o = env.observation();
    o.gps = {0.0, 0.0, 0.0};
    o.compass = 0.0;
    masked.push_back(o);
    env.step(static_cast<Action>(res.trajectory.steps[i].action));
  }
  const auto oracle = truncated_encode(kTiny, layout, params, masked);
  const auto got = HiddenState<float>::unflatten(
      kTiny, res.trajectory.hidden[res.trajectory.hidden.size() - 2]);
  CHECK(got.flatten() == oracle.flatten());
}
