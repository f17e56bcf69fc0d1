#pragma once
// PPO training loop: reward shaping, GAE, clipped updates, Adam.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "navlab/env.hpp"
#include "navlab/policy.hpp"

namespace navlab {

struct PpoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RewardVariant { Standard, NoInputProbe };

struct TrainConfig {
  double gamma = 0.99;
  double gae_tau = 0.95;
  double clip = 0.2;
  double lr = 2.5e-4;
  double slack = 0.001;
  double success_bonus = 2.5;
  int rollout_len = 256;
  int num_envs = 16;
  int ppo_epochs = 2;
  int minibatches = 2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;  // global gradient-norm clip; <= 0 disables
  int max_updates = 0;
  int memory_budget = 0;  // 0 = unrestricted; k rebuilds (h,c) from last k
  RewardVariant reward_variant = RewardVariant::Standard;
  bool zero_gps_compass = false;  // memory-only probe mode
  std::uint64_t seed = 0;
  int eval_every = 50;
  int checkpoint_every = 200;
};

struct AdamState {
  std::vector<float> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  static AdamState init(std::size_t n) {
    AdamState s;
    s.m.assign(n, 0.0f);
    s.v.assign(n, 0.0f);
    return s;
  }
};

void adam_step(AdamState& state, std::vector<float>& params,
               const std::vector<float>& grad, double lr);

struct RewardInputs {
  Action action = Action::MoveForward;
  bool success = false;
  double geo_before = 0.0, geo_after = 0.0;
  double heading_err_before = 0.0, heading_err_after = 0.0;
  double geo_start = 1.0;  // GeoDist(s_0, g), used by the no-input variant
};

double compute_reward(const RewardInputs& in, const TrainConfig& cfg);

// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t
// A_t = delta_t + gamma*tau*(1-done_t)*A_{t+1}; returns = A + V.
void compute_gae(const std::vector<float>& rewards,
                 const std::vector<float>& values,
                 const std::vector<std::uint8_t>& dones, float bootstrap_value,
                 double gamma, double tau, std::vector<float>* advantages,
                 std::vector<float>* returns);

// One episode's worth of work handed to the collector: which grid, which
// episode, what the initial recurrent state is, and (for probes) the frame
// the observations are reported in.
struct EpisodeSample {
  const OccupancyGrid* grid = nullptr;
  Episode episode;
  HiddenState<float> init_hidden;  // empty -> zeros
  std::optional<Pose> frame_anchor;
};

using EpisodeProvider = std::function<EpisodeSample(std::mt19937_64&)>;

// Uniform map choice + constrained episode sampling.
EpisodeProvider make_map_provider(
    const std::vector<OccupancyGrid>* maps,
    EpisodeConstraints constraints = {}, CoordMode mode = CoordMode::Episodic,
    int max_steps = 500);

struct RolloutBuffer {
  int num_envs = 0, len = 0;
  // [env][t]
  std::vector<std::vector<Observation>> obs;
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<float>> logprobs, values, rewards;
  std::vector<std::vector<std::uint8_t>> dones;
  std::vector<std::vector<float>> advantages, returns;
  std::vector<float> bootstrap_value;  // per env
  // Hidden snapshots: slice start plus every in-slice episode reset,
  // keyed by the step at which they take effect.
  std::vector<std::vector<std::pair<int, HiddenState<float>>>> hidden_resets;
};

struct TrainStats {
  double policy_loss = 0.0, value_loss = 0.0;
  double entropy = 0.0, clip_frac = 0.0;
  double mean_ratio_error = 0.0;  // |rho - 1| on the first epoch
  double grad_norm = 0.0;         // pre-clip norm averaged over minibatches
};

struct EvalResult {
  bool success = false;
  double spl = 0.0;
  int steps = 0;
  double reward_sum = 0.0;
  Trajectory trajectory;
};

struct EvalOptions {
  SampleMode mode = SampleMode::Argmax;
  int memory_budget = 0;
  bool zero_gps_compass = false;
  bool record_hidden = false;  // store flattened (h,c) per step
  std::uint64_t seed = 0;
};

EvalResult run_policy_episode(const PolicyConfig& cfg,
                              const std::vector<float>& params,
                              const EpisodeSample& sample,
                              const EvalOptions& options);

std::vector<EvalResult> evaluate(const PolicyConfig& cfg,
                                 const std::vector<float>& params,
                                 const std::vector<EpisodeSample>& episodes,
                                 const EvalOptions& options);

class Trainer {
 public:
  Trainer(PolicyConfig policy_cfg, TrainConfig train_cfg,
          EpisodeProvider provider);

  // Seeds parameters and environments; may also adopt an existing checkpoint.
  void set_params(std::vector<float> params);
  const std::vector<float>& params() const { return params_; }
  std::uint64_t env_steps() const { return env_steps_; }

  RolloutBuffer collect_rollout();
  TrainStats ppo_update(RolloutBuffer& buffer);
  // One collect+update cycle.
  TrainStats step();

  const PolicyConfig& policy_config() const { return policy_cfg_; }
  const TrainConfig& train_config() const { return train_cfg_; }

 private:
  struct EnvSlot {
    EnvState env;
    HiddenState<float> hidden;
    HiddenState<float> episode_init_hidden;
    std::vector<Observation> window;  // only kept under a memory budget
    double geo_start = 1.0;
    EpisodeSample sample;
  };
  void reset_slot(EnvSlot& slot);
  Observation slot_observation(EnvSlot& slot) const;

  PolicyConfig policy_cfg_;
  ParamLayout layout_;
  TrainConfig train_cfg_;
  EpisodeProvider provider_;
  std::vector<float> params_;
  AdamState adam_;
  std::vector<EnvSlot> slots_;
  std::mt19937_64 rng_;
  std::uint64_t env_steps_ = 0;
};

struct TrainLoopResult {
  Checkpoint checkpoint;
  std::string metrics_csv;  // update,env_steps,success,spl,reward,entropy,clip_frac
};

// Full loop: alternating collection and update with periodic evaluation on
// held-out episodes; writes checkpoints and metrics.csv under out_dir when
// out_dir is nonempty.
TrainLoopResult train_loop(const PolicyConfig& policy_cfg,
                           const TrainConfig& train_cfg,
                           EpisodeProvider train_provider,
                           const std::vector<EpisodeSample>& eval_episodes,
                           const std::string& out_dir);

}  // namespace navlab
