#pragma once
// Memory-transplant probes: capture a trained agent's final recurrent state,
// implant it into an architecturally identical probe agent, and train or
// evaluate that probe under different initial-memory conditions and task
// directions (start-to-goal again, or goal-back-to-start).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "navlab/ppo.hpp"

namespace navlab {

struct ProbeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProbeCondition {
  TrainedAgentMemory = 0,
  UntrainedAgentMemory = 1,
  AllZeroMemory = 2,
};

enum class ProbeTask {
  StoT = 0,  // restart at S (agent's final heading), goal T
  TtoS = 1,  // start at the agent's final pose, goal S
};

const char* to_string(ProbeCondition c);
const char* to_string(ProbeTask t);

struct MemorySnapshot {
  HiddenState<float> hidden;
  std::string source_episode;
  Pose agent_final_pose;
  Trajectory agent_trajectory;
};

struct CaptureResult {
  Trajectory trajectory;
  MemorySnapshot snapshot;
};

// Runs the agent on the episode. On success returns the trajectory plus the
// recurrent state at the Stop step; failed episodes return nullopt and are
// excluded from all probe datasets.
std::optional<CaptureResult> capture_memory(
    const PolicyConfig& cfg, const std::vector<float>& agent_params,
    const EpisodeSample& sample, const EvalOptions& options = {});

// Teacher-forces the agent's observation/prev-action sequence through a
// random-parameter network of identical architecture, from a zero state.
MemorySnapshot make_untrained_memory(const PolicyConfig& cfg,
                                     const std::vector<float>& random_params,
                                     const OccupancyGrid& grid,
                                     const Trajectory& agent_trajectory);

// Probe episode on the agent's map, sharing the agent's coordinate frame
// (observations stay anchored at the agent's original start pose).
EpisodeSample make_probe_sample(const OccupancyGrid& grid,
                                const Episode& agent_episode,
                                const Pose& agent_final_pose,
                                const HiddenState<float>& init_hidden,
                                ProbeTask task);

// Pre-captured successful agent episodes used to seed probe training and
// evaluation; parallel arrays, one entry per successful episode.
struct ProbeSeedPool {
  std::vector<const OccupancyGrid*> grids;
  std::vector<Episode> agent_episodes;
  std::vector<MemorySnapshot> trained;    // agent's final memory
  std::vector<MemorySnapshot> untrained;  // random net walked along the path
};

// Runs the agent over sampled episodes until `want` successes are captured.
// Throws ProbeError when `max_tries` episodes yield fewer successes.
ProbeSeedPool build_probe_pool(const PolicyConfig& cfg,
                               const std::vector<float>& agent_params,
                               const std::vector<float>& untrained_params,
                               const std::vector<OccupancyGrid>* maps,
                               const EpisodeConstraints& constraints,
                               int max_steps, int want, int max_tries,
                               std::uint64_t seed);

const HiddenState<float>* pool_hidden(const ProbeSeedPool& pool,
                                      std::size_t index, ProbeCondition cond);

// Standard PPO training of a fresh probe whose per-episode initial hidden
// state comes from the pool under the given condition. The agent's
// parameters are not part of the optimization (no gradient can reach them).
// init, when given, warm-starts the probe (e.g. from the agent's own
// parameters) instead of a fresh random initialization.
std::vector<float> train_probe(const PolicyConfig& cfg,
                               const TrainConfig& train_cfg,
                               const ProbeSeedPool& pool, ProbeCondition cond,
                               ProbeTask task, int updates,
                               const std::vector<float>* init = nullptr);

struct ProbePairParams {
  std::vector<float> agent;
  std::vector<float> untrained;  // random parameters, held-out seed
  // probe parameters per [condition][task]
  std::array<std::array<std::vector<float>, 2>, 3> probe;
};

struct ProbeSuiteRow {
  ProbeCondition condition{};
  ProbeTask task{};
  int episodes = 0;  // successful agent episodes summed over pairs
  double success = 0.0;
  double spl = 0.0;
  double spl_lo = 0.0, spl_hi = 0.0;  // bootstrap CI over pair means
};

struct ProbePairedEpisode {
  int pair = 0;
  ProbeCondition condition{};
  ProbeTask task{};
  Trajectory agent;
  Trajectory probe;
};

struct ProbeReport {
  std::vector<ProbeSuiteRow> rows;
  std::vector<ProbePairedEpisode> paired;
};

// Evaluates every pair's probes on held-out episodes; episodes the pair's
// agent fails are excluded symmetrically across conditions.
ProbeReport run_probe_suite(const PolicyConfig& cfg,
                            const std::vector<ProbePairParams>& pairs,
                            const std::vector<ProbeCondition>& conditions,
                            const std::vector<ProbeTask>& tasks,
                            const std::vector<EpisodeSample>& eval_episodes,
                            int bootstrap_resamples = 10000,
                            std::uint64_t seed = 0);

std::string probe_report_csv(const ProbeReport& report);

// Evaluation of a probe trained in no-input mode: the gps/compass fields are
// zeroed at every step, so the probe navigates by dead reckoning from its
// transplanted memory and the previous-action token.
EvalResult run_no_input_probe(const PolicyConfig& cfg,
                              const std::vector<float>& probe_params,
                              const EpisodeSample& probe_sample,
                              std::uint64_t seed = 0);

}  // namespace navlab
