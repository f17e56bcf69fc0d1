#include "navlab/probe.hpp"

#include <cmath>

#include "navlab/metrics.hpp"

namespace navlab {

const char* to_string(ProbeCondition c) {
  switch (c) {
    case ProbeCondition::TrainedAgentMemory: return "trained";
    case ProbeCondition::UntrainedAgentMemory: return "untrained";
    case ProbeCondition::AllZeroMemory: return "zero";
  }
  return "?";
}

const char* to_string(ProbeTask t) {
  return t == ProbeTask::StoT ? "s2t" : "t2s";
}

std::optional<CaptureResult> capture_memory(
    const PolicyConfig& cfg, const std::vector<float>& agent_params,
    const EpisodeSample& sample, const EvalOptions& options) {
  EvalOptions opts = options;
  opts.record_hidden = true;
  EvalResult res = run_policy_episode(cfg, agent_params, sample, opts);
  if (!res.success) return std::nullopt;
  // hidden[i] is the state after processing observation i; the final record
  // is a post-terminal extra step, so the state that emitted Stop is the
  // second-to-last entry.
  const auto& hid = res.trajectory.hidden;
  if (hid.size() < 2) throw ProbeError("capture_memory: missing hidden log");
  CaptureResult out;
  out.snapshot.hidden =
      HiddenState<float>::unflatten(cfg, hid[hid.size() - 2]);
  out.snapshot.source_episode = sample.episode.grid_id;
  const auto& last = res.trajectory.steps.back();
  out.snapshot.agent_final_pose = Pose{last.x, last.y, 0.0, last.theta};
  res.trajectory.hidden.clear();  // snapshots carry the state; drop the log
  out.snapshot.agent_trajectory = res.trajectory;
  out.trajectory = std::move(res.trajectory);
  return out;
}

MemorySnapshot make_untrained_memory(const PolicyConfig& cfg,
                                     const std::vector<float>& random_params,
                                     const OccupancyGrid& grid,
                                     const Trajectory& agent_trajectory) {
  const ParamLayout layout = ParamLayout::make(cfg);
  MemorySnapshot snap;
  snap.source_episode = agent_trajectory.episode.grid_id;
  snap.agent_trajectory = agent_trajectory;
  snap.hidden = HiddenState<float>::zero(cfg);
  const auto& steps = agent_trajectory.steps;
  if (steps.empty()) {
    snap.agent_final_pose = agent_trajectory.episode.start;
    return snap;
  }
  snap.agent_final_pose =
      Pose{steps.back().x, steps.back().y, 0.0, steps.back().theta};
  // Replay the recorded actions to reconstruct the observation sequence the
  // agent saw, teacher-forcing it through the random network.
  EnvState env(&grid, agent_trajectory.episode);
  for (std::size_t i = 1; i < steps.size(); ++i) {
    const Observation obs = env.observation();
    HiddenState<float> next;
    policy_forward(cfg, layout, random_params, obs, snap.hidden, &next);
    snap.hidden = std::move(next);
    env.step(static_cast<Action>(steps[i].action));
  }
  return snap;
}

EpisodeSample make_probe_sample(const OccupancyGrid& grid,
                                const Episode& agent_episode,
                                const Pose& agent_final_pose,
                                const HiddenState<float>& init_hidden,
                                ProbeTask task) {
  EpisodeSample s;
  s.grid = &grid;
  s.episode = agent_episode;
  if (task == ProbeTask::StoT) {
    // restart at S with the agent's final heading; goal stays T
    s.episode.start = agent_episode.start;
    s.episode.start.theta = agent_final_pose.theta;
  } else {
    s.episode.start = agent_final_pose;
    s.episode.goal_x = agent_episode.start.x;
    s.episode.goal_y = agent_episode.start.y;
    s.episode.goal_z = 0.0;
  }
  s.episode.geodesic_dist =
      geodesic_distance(grid, s.episode.start.x, s.episode.start.y,
                        s.episode.goal_x, s.episode.goal_y);
  // the probe reports observations in the agent's original frame
  s.frame_anchor = agent_episode.start;
  s.init_hidden = init_hidden;
  return s;
}

ProbeSeedPool build_probe_pool(const PolicyConfig& cfg,
                               const std::vector<float>& agent_params,
                               const std::vector<float>& untrained_params,
                               const std::vector<OccupancyGrid>* maps,
                               const EpisodeConstraints& constraints,
                               int max_steps, int want, int max_tries,
                               std::uint64_t seed) {
  if (!maps || maps->empty()) throw ProbeError("build_probe_pool: no maps");
  auto provider =
      make_map_provider(maps, constraints, CoordMode::Episodic, max_steps);
  std::mt19937_64 rng(seed);
  ProbeSeedPool pool;
  for (int tries = 0; tries < max_tries &&
                      static_cast<int>(pool.trained.size()) < want;
       ++tries) {
    EpisodeSample sample = provider(rng);
    auto cap = capture_memory(cfg, agent_params, sample);
    if (!cap) continue;
    pool.grids.push_back(sample.grid);
    pool.agent_episodes.push_back(sample.episode);
    pool.untrained.push_back(make_untrained_memory(
        cfg, untrained_params, *sample.grid, cap->trajectory));
    pool.trained.push_back(std::move(cap->snapshot));
  }
  if (static_cast<int>(pool.trained.size()) < want)
    throw ProbeError("build_probe_pool: insufficient successful episodes");
  return pool;
}

const HiddenState<float>* pool_hidden(const ProbeSeedPool& pool,
                                      std::size_t index, ProbeCondition cond) {
  static const HiddenState<float> empty;
  switch (cond) {
    case ProbeCondition::TrainedAgentMemory: return &pool.trained[index].hidden;
    case ProbeCondition::UntrainedAgentMemory:
      return &pool.untrained[index].hidden;
    case ProbeCondition::AllZeroMemory: return &empty;
  }
  return &empty;
}

std::vector<float> train_probe(const PolicyConfig& cfg,
                               const TrainConfig& train_cfg,
                               const ProbeSeedPool& pool, ProbeCondition cond,
                               ProbeTask task, int updates,
                               const std::vector<float>* init) {
  if (pool.trained.empty())
    throw ProbeError("train_probe: empty seed pool");
  auto provider = [&pool, cond, task](std::mt19937_64& rng) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(
        0, pool.trained.size() - 1)(rng);
    const HiddenState<float>* hidden = pool_hidden(pool, i, cond);
    EpisodeSample s = make_probe_sample(
        *pool.grids[i], pool.agent_episodes[i],
        pool.trained[i].agent_final_pose, *hidden, task);
    s.episode.max_steps = pool.agent_episodes[i].max_steps;
    return s;
  };
  Trainer trainer(cfg, train_cfg, provider);
  if (init) trainer.set_params(*init);
  for (int u = 0; u < updates; ++u) trainer.step();
  return trainer.params();
}

ProbeReport run_probe_suite(const PolicyConfig& cfg,
                            const std::vector<ProbePairParams>& pairs,
                            const std::vector<ProbeCondition>& conditions,
                            const std::vector<ProbeTask>& tasks,
                            const std::vector<EpisodeSample>& eval_episodes,
                            int bootstrap_resamples, std::uint64_t seed) {
  struct Cell {
    std::vector<double> pair_spl_sums;
    std::vector<double> pair_counts;
    double success = 0.0;
    int episodes = 0;
  };
  ProbeReport report;
  std::vector<Cell> cells(conditions.size() * tasks.size());
  for (auto& c : cells) {
    c.pair_spl_sums.assign(pairs.size(), 0.0);
    c.pair_counts.assign(pairs.size(), 0.0);
  }

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (const EpisodeSample& ep : eval_episodes) {
      auto cap = capture_memory(cfg, pairs[p].agent, ep);
      if (!cap) continue;  // excluded symmetrically across conditions
      MemorySnapshot untrained = make_untrained_memory(
          cfg, pairs[p].untrained, *ep.grid, cap->trajectory);
      for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
          const ProbeCondition cond = conditions[ci];
          const ProbeTask task = tasks[ti];
          const HiddenState<float> zero = HiddenState<float>::zero(cfg);
          const HiddenState<float>& hidden =
              cond == ProbeCondition::TrainedAgentMemory ? cap->snapshot.hidden
              : cond == ProbeCondition::UntrainedAgentMemory ? untrained.hidden
                                                             : zero;
          EpisodeSample ps =
              make_probe_sample(*ep.grid, ep.episode,
                                cap->snapshot.agent_final_pose, hidden, task);
          ps.episode.max_steps = ep.episode.max_steps;
          const auto& probe_params =
              pairs[p].probe[static_cast<int>(cond)][static_cast<int>(task)];
          EvalResult res = run_policy_episode(
              cfg, probe_params.empty() ? pairs[p].agent : probe_params, ps,
              {});
          Cell& cell = cells[ci * tasks.size() + ti];
          cell.pair_spl_sums[p] += res.spl;
          cell.pair_counts[p] += 1.0;
          cell.success += res.success ? 1.0 : 0.0;
          ++cell.episodes;
          ProbePairedEpisode pe;
          pe.pair = static_cast<int>(p);
          pe.condition = cond;
          pe.task = task;
          pe.agent = cap->trajectory;
          pe.probe = std::move(res.trajectory);
          report.paired.push_back(std::move(pe));
        }
      }
    }
  }

  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const Cell& cell = cells[ci * tasks.size() + ti];
      ProbeSuiteRow row;
      row.condition = conditions[ci];
      row.task = tasks[ti];
      row.episodes = cell.episodes;
      if (cell.episodes > 0) {
        row.success = cell.success / cell.episodes;
        double spl_sum = 0.0;
        std::vector<double> pair_means;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          spl_sum += cell.pair_spl_sums[p];
          if (cell.pair_counts[p] > 0)
            pair_means.push_back(cell.pair_spl_sums[p] / cell.pair_counts[p]);
        }
        row.spl = spl_sum / cell.episodes;
        if (!pair_means.empty()) {
          const auto ci95 = bootstrap_ci(pair_means, 0.95, bootstrap_resamples,
                                         seed + ci * 131 + ti);
          row.spl_lo = ci95.first;
          row.spl_hi = ci95.second;
        }
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

std::string probe_report_csv(const ProbeReport& report) {
  std::string out = "condition,task,episodes,success,spl,spl_lo,spl_hi\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f\n",
                  to_string(r.condition), to_string(r.task), r.episodes,
                  r.success, r.spl, r.spl_lo, r.spl_hi);
    out += buf;
  }
  return out;
}

EvalResult run_no_input_probe(const PolicyConfig& cfg,
                              const std::vector<float>& probe_params,
                              const EpisodeSample& probe_sample,
                              std::uint64_t seed) {
  EvalOptions opts;
  opts.zero_gps_compass = true;
  opts.record_hidden = true;
  opts.seed = seed;
  return run_policy_episode(cfg, probe_params, probe_sample, opts);
}

}  // namespace navlab
