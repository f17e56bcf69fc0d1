#include "navlab/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "navlab/metrics.hpp"

namespace navlab {

void adam_step(AdamState& state, std::vector<float>& params,
               const std::vector<float>& grad, double lr) {
  if (params.size() != grad.size() || state.m.size() != params.size())
    throw PpoError("adam_step: size mismatch");
  ++state.step;
  const double b1t = 1.0 - std::pow(state.beta1, state.step);
  const double b2t = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = static_cast<float>(state.beta1 * state.m[i] +
                                    (1.0 - state.beta1) * g);
    state.v[i] = static_cast<float>(state.beta2 * state.v[i] +
                                    (1.0 - state.beta2) * g * g);
    const double mhat = state.m[i] / b1t;
    const double vhat = state.v[i] / b2t;
    params[i] -= static_cast<float>(lr * mhat /
                                    (std::sqrt(vhat) + state.epsilon));
  }
}

double compute_reward(const RewardInputs& in, const TrainConfig& cfg) {
  if (in.action == Action::Stop)
    return in.success ? cfg.success_bonus : 0.0;
  const double dgeo = in.geo_after - in.geo_before;
  switch (cfg.reward_variant) {
    case RewardVariant::Standard:
      return -dgeo - cfg.slack;
    case RewardVariant::NoInputProbe: {
      const double scale = std::max(in.geo_start, 1e-9);
      const double dherr = in.heading_err_after - in.heading_err_before;
      return -10.0 * dgeo / scale - 0.25 * dherr - cfg.slack;
    }
  }
  throw PpoError("compute_reward: unknown variant");
}

void compute_gae(const std::vector<float>& rewards,
                 const std::vector<float>& values,
                 const std::vector<std::uint8_t>& dones, float bootstrap_value,
                 double gamma, double tau, std::vector<float>* advantages,
                 std::vector<float>* returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw PpoError("compute_gae: size mismatch");
  advantages->assign(n, 0.0f);
  returns->assign(n, 0.0f);
  double carry = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double mask = dones[t] ? 0.0 : 1.0;
    const double next_v = (t + 1 < n) ? values[t + 1] : bootstrap_value;
    const double delta = rewards[t] + gamma * next_v * mask - values[t];
    carry = delta + gamma * tau * mask * carry;
    (*advantages)[t] = static_cast<float>(carry);
    (*returns)[t] = static_cast<float>(carry + values[t]);
  }
}

EpisodeProvider make_map_provider(const std::vector<OccupancyGrid>* maps,
                                  EpisodeConstraints constraints,
                                  CoordMode mode, int max_steps) {
  if (!maps || maps->empty())
    throw PpoError("make_map_provider: empty map set");
  return [maps, constraints, mode, max_steps](std::mt19937_64& rng) {
    const std::size_t i =
        std::uniform_int_distribution<std::size_t>(0, maps->size() - 1)(rng);
    EpisodeSample s;
    s.grid = &(*maps)[i];
    s.episode = sample_episode((*maps)[i], rng, constraints, mode);
    s.episode.max_steps = max_steps;
    return s;
  };
}

namespace {

Observation masked_observation(const EnvState& env, bool zero_gps_compass) {
  Observation obs = env.observation();
  if (zero_gps_compass) {
    obs.gps = {0.0, 0.0, 0.0};
    obs.compass = 0.0;
  }
  return obs;
}

// Hidden state entering step t under a memory budget k: encoded from the
// last k-1 observations before t, starting from zeros.
HiddenState<float> budget_hidden(const PolicyConfig& cfg,
                                 const ParamLayout& layout,
                                 const std::vector<float>& params,
                                 const std::vector<Observation>& window) {
  if (window.empty()) return HiddenState<float>::zero(cfg);
  return truncated_encode(cfg, layout, params, window);
}

void trim_window(std::vector<Observation>& window, int budget) {
  const std::size_t keep = budget > 0 ? static_cast<std::size_t>(budget - 1) : 0;
  if (window.size() > keep)
    window.erase(window.begin(),
                 window.end() - static_cast<std::ptrdiff_t>(keep));
}

double heading_error(const EnvState& env) {
  return angular_distance(env.pose().theta, env.shortest_path_heading());
}

struct MinibatchAccum {
  double policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
  std::size_t clipped = 0, count = 0;
  double ratio_err = 0.0;
  std::size_t ratio_count = 0;
};

// Per-step loss gradient for the combined PPO objective, normalized by the
// minibatch sample count.
StepGrad<float> step_loss_grad(const std::array<float, kPolicyActions>& logits,
                               int action, float old_logprob, float adv,
                               float ret, float value,
                               const TrainConfig& cfg, double inv_n,
                               MinibatchAccum* acc) {
  const auto logp = log_softmax(logits);
  std::array<double, kPolicyActions> pi;
  double ent = 0.0;
  for (int i = 0; i < kPolicyActions; ++i) {
    pi[i] = std::exp(static_cast<double>(logp[i]));
    ent -= pi[i] * logp[i];
  }
  const double ratio = std::exp(static_cast<double>(logp[action] - old_logprob));
  const double surr1 = ratio * adv;
  const double clamped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
  const double surr2 = clamped * adv;
  const bool use_unclipped = surr1 <= surr2;

  StepGrad<float> g;
  for (int i = 0; i < kPolicyActions; ++i) {
    double d = 0.0;
    if (use_unclipped) {
      const double onehot = (i == action) ? 1.0 : 0.0;
      d += -adv * ratio * (onehot - pi[i]);
    }
    d += cfg.entropy_coef * pi[i] * (logp[i] + ent);
    g.dlogits[i] = static_cast<float>(d * inv_n);
  }
  const double verr = value - ret;
  g.dvalue = static_cast<float>(cfg.value_coef * 2.0 * verr * inv_n);

  acc->policy_loss += -std::min(surr1, surr2);
  acc->value_loss += verr * verr;
  acc->entropy += ent;
  acc->clipped += std::abs(ratio - 1.0) > cfg.clip ? 1 : 0;
  acc->count += 1;
  acc->ratio_err += std::abs(ratio - 1.0);
  acc->ratio_count += 1;
  return g;
}

}  // namespace

EvalResult run_policy_episode(const PolicyConfig& cfg,
                              const std::vector<float>& params,
                              const EpisodeSample& sample,
                              const EvalOptions& options) {
  if (!sample.grid) throw PpoError("run_policy_episode: null grid");
  const ParamLayout layout = ParamLayout::make(cfg);
  EnvState env(sample.grid, sample.episode);
  if (sample.frame_anchor) env.set_frame_anchor(*sample.frame_anchor);
  HiddenState<float> hidden = sample.init_hidden.h.empty()
                                  ? HiddenState<float>::zero(cfg)
                                  : sample.init_hidden;
  std::vector<Observation> window;
  std::mt19937_64 rng(options.seed);
  TrainConfig reward_cfg;  // standard shaping for diagnostics

  EvalResult out;
  out.trajectory.episode = sample.episode;
  out.trajectory.steps.push_back({0, env.pose().x, env.pose().y,
                                  env.pose().theta,
                                  static_cast<int>(Action::Start), false, 0.0,
                                  env.geo_dist_to_goal()});
  while (!env.done()) {
    const Observation obs = masked_observation(env, options.zero_gps_compass);
    if (options.memory_budget > 0)
      hidden = budget_hidden(cfg, layout, params, window);
    HiddenState<float> next;
    const auto fwd = policy_forward(cfg, layout, params, obs, hidden, &next);
    hidden = std::move(next);
    if (options.record_hidden)
      out.trajectory.hidden.push_back(hidden.flatten());
    if (options.memory_budget > 0) {
      window.push_back(obs);
      trim_window(window, options.memory_budget);
    }
    const auto pick = sample_action(fwd.logits, rng, options.mode);
    RewardInputs ri;
    ri.action = pick.action;
    ri.geo_before = env.geo_dist_to_goal();
    const auto r = env.step(pick.action);
    ri.geo_after = r.geo_dist_to_goal;
    ri.success = r.success;
    const double reward = compute_reward(ri, reward_cfg);
    out.reward_sum += reward;
    out.trajectory.steps.push_back({env.t(), env.pose().x, env.pose().y,
                                    env.pose().theta,
                                    static_cast<int>(pick.action), r.collided,
                                    reward, r.geo_dist_to_goal});
  }
  if (options.record_hidden) {
    // One more forward on the terminal observation so hidden[i] lines up
    // with steps[i+1] is avoided: instead append the post-terminal state so
    // hidden.size() == steps.size() and hidden.back() is the final memory.
    const Observation obs = masked_observation(env, options.zero_gps_compass);
    if (options.memory_budget > 0)
      hidden = budget_hidden(cfg, layout, params, window);
    HiddenState<float> next;
    policy_forward(cfg, layout, params, obs, hidden, &next);
    out.trajectory.hidden.push_back(next.flatten());
  }
  out.success = env.success();
  out.steps = env.t();
  out.trajectory.success = out.success;
  out.spl = spl(out.trajectory, sample.episode);
  return out;
}

std::vector<EvalResult> evaluate(const PolicyConfig& cfg,
                                 const std::vector<float>& params,
                                 const std::vector<EpisodeSample>& episodes,
                                 const EvalOptions& options) {
  std::vector<EvalResult> out;
  out.reserve(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    EvalOptions o = options;
    o.seed = options.seed * 0x9E3779B97F4A7C15ULL + i;
    out.push_back(run_policy_episode(cfg, params, episodes[i], o));
  }
  return out;
}

Trainer::Trainer(PolicyConfig policy_cfg, TrainConfig train_cfg,
                 EpisodeProvider provider)
    : policy_cfg_(policy_cfg),
      layout_(ParamLayout::make(policy_cfg)),
      train_cfg_(train_cfg),
      provider_(std::move(provider)),
      rng_(train_cfg.seed) {
  if (train_cfg_.num_envs < 1 || train_cfg_.rollout_len < 1 ||
      train_cfg_.minibatches < 1 ||
      train_cfg_.num_envs % train_cfg_.minibatches != 0)
    throw PpoError("Trainer: bad env/minibatch configuration");
  params_ = init_params(rng_, policy_cfg_);
  adam_ = AdamState::init(layout_.total);
  slots_.resize(train_cfg_.num_envs);
  for (auto& slot : slots_) reset_slot(slot);
}

void Trainer::set_params(std::vector<float> params) {
  if (params.size() != layout_.total)
    throw PpoError("set_params: size mismatch");
  params_ = std::move(params);
  adam_ = AdamState::init(layout_.total);
}

void Trainer::reset_slot(EnvSlot& slot) {
  slot.sample = provider_(rng_);
  slot.env = EnvState(slot.sample.grid, slot.sample.episode);
  if (slot.sample.frame_anchor)
    slot.env.set_frame_anchor(*slot.sample.frame_anchor);
  slot.hidden = slot.sample.init_hidden.h.empty()
                    ? HiddenState<float>::zero(policy_cfg_)
                    : slot.sample.init_hidden;
  slot.episode_init_hidden = slot.hidden;
  slot.window.clear();
  slot.geo_start = std::max(slot.env.geo_dist_to_goal(), 1e-9);
}

Observation Trainer::slot_observation(EnvSlot& slot) const {
  return masked_observation(slot.env, train_cfg_.zero_gps_compass);
}

RolloutBuffer Trainer::collect_rollout() {
  const int n = train_cfg_.num_envs;
  const int len = train_cfg_.rollout_len;
  RolloutBuffer buf;
  buf.num_envs = n;
  buf.len = len;
  buf.obs.assign(n, {});
  buf.actions.assign(n, {});
  buf.logprobs.assign(n, {});
  buf.values.assign(n, {});
  buf.rewards.assign(n, {});
  buf.dones.assign(n, {});
  buf.bootstrap_value.assign(n, 0.0f);
  buf.hidden_resets.assign(n, {});
  for (int e = 0; e < n; ++e)
    buf.hidden_resets[e].push_back({0, slots_[e].hidden});

  for (int t = 0; t < len; ++t) {
    for (int e = 0; e < n; ++e) {
      auto& slot = slots_[e];
      const Observation obs = slot_observation(slot);
      if (train_cfg_.memory_budget > 0)
        slot.hidden = budget_hidden(policy_cfg_, layout_, params_, slot.window);
      HiddenState<float> next;
      const auto fwd =
          policy_forward(policy_cfg_, layout_, params_, obs, slot.hidden, &next);
      const auto pick = sample_action(fwd.logits, rng_, SampleMode::Sample);
      slot.hidden = std::move(next);
      if (train_cfg_.memory_budget > 0) {
        slot.window.push_back(obs);
        trim_window(slot.window, train_cfg_.memory_budget);
      }

      RewardInputs ri;
      ri.action = pick.action;
      ri.geo_before = slot.env.geo_dist_to_goal();
      ri.geo_start = slot.geo_start;
      if (train_cfg_.reward_variant == RewardVariant::NoInputProbe)
        ri.heading_err_before = heading_error(slot.env);
      const auto r = slot.env.step(pick.action);
      ri.geo_after = r.geo_dist_to_goal;
      ri.success = r.success;
      if (train_cfg_.reward_variant == RewardVariant::NoInputProbe &&
          !r.done)
        ri.heading_err_after = heading_error(slot.env);
      else
        ri.heading_err_after = ri.heading_err_before;

      buf.obs[e].push_back(obs);
      buf.actions[e].push_back(static_cast<int>(pick.action));
      buf.logprobs[e].push_back(static_cast<float>(pick.logprob));
      buf.values[e].push_back(fwd.value);
      buf.rewards[e].push_back(
          static_cast<float>(compute_reward(ri, train_cfg_)));
      buf.dones[e].push_back(r.done ? 1 : 0);

      if (r.done) {
        reset_slot(slot);
        if (t + 1 < len)
          buf.hidden_resets[e].push_back({t + 1, slot.hidden});
      }
    }
    env_steps_ += static_cast<std::uint64_t>(n);
  }

  for (int e = 0; e < n; ++e) {
    auto& slot = slots_[e];
    const Observation obs = slot_observation(slot);
    HiddenState<float> hid = slot.hidden;
    if (train_cfg_.memory_budget > 0)
      hid = budget_hidden(policy_cfg_, layout_, params_, slot.window);
    const auto fwd = policy_forward(policy_cfg_, layout_, params_, obs, hid,
                                    static_cast<HiddenState<float>*>(nullptr));
    buf.bootstrap_value[e] = fwd.value;
  }

  buf.advantages.assign(n, {});
  buf.returns.assign(n, {});
  for (int e = 0; e < n; ++e)
    compute_gae(buf.rewards[e], buf.values[e], buf.dones[e],
                buf.bootstrap_value[e], train_cfg_.gamma, train_cfg_.gae_tau,
                &buf.advantages[e], &buf.returns[e]);
  return buf;
}

TrainStats Trainer::ppo_update(RolloutBuffer& buf) {
  const int n = buf.num_envs;
  const int len = buf.len;
  const int groups = train_cfg_.minibatches;
  const int per_group = n / groups;
  TrainStats stats;
  MinibatchAccum total;
  MinibatchAccum first;  // first minibatch of the first epoch only
  int norm_batches = 0;

  for (int epoch = 0; epoch < train_cfg_.ppo_epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);

    for (int g = 0; g < groups; ++g) {
      const int* envs = order.data() + g * per_group;

      // normalize advantages within the minibatch
      double mean = 0.0;
      for (int i = 0; i < per_group; ++i)
        for (int t = 0; t < len; ++t) mean += buf.advantages[envs[i]][t];
      const double count = static_cast<double>(per_group) * len;
      mean /= count;
      double var = 0.0;
      for (int i = 0; i < per_group; ++i)
        for (int t = 0; t < len; ++t) {
          const double d = buf.advantages[envs[i]][t] - mean;
          var += d * d;
        }
      const double inv_std = 1.0 / (std::sqrt(var / count) + 1e-8);
      const double inv_n = 1.0 / count;

      std::vector<float> grad(layout_.total, 0.0f);
      MinibatchAccum acc;
      for (int i = 0; i < per_group; ++i) {
        const int e = envs[i];
        // episode segments delimited by hidden resets
        const auto& resets = buf.hidden_resets[e];
        for (std::size_t s = 0; s < resets.size(); ++s) {
          const int s0 = resets[s].first;
          const int s1 = (s + 1 < resets.size()) ? resets[s + 1].first : len;
          if (train_cfg_.memory_budget > 0) {
            // per-step truncated windows: gradients stop k steps back
            for (int t = s0; t < s1; ++t) {
              const int w0 = std::max(s0, t - train_cfg_.memory_budget + 1);
              RolloutTape<float> tape;
              tape.h0 = HiddenState<float>::zero(policy_cfg_);
              HiddenState<float> hid = tape.h0;
              ForwardOut<float> fwd;
              for (int u = w0; u <= t; ++u) {
                tape.steps.emplace_back();
                HiddenState<float> next;
                fwd = policy_forward(policy_cfg_, layout_, params_,
                                     buf.obs[e][u], hid, &next,
                                     &tape.steps.back());
                hid = std::move(next);
              }
              std::vector<StepGrad<float>> lg(tape.steps.size());
              const float adv = static_cast<float>(
                  (buf.advantages[e][t] - mean) * inv_std);
              lg.back() = step_loss_grad(fwd.logits, buf.actions[e][t],
                                         buf.logprobs[e][t], adv,
                                         buf.returns[e][t], fwd.value,
                                         train_cfg_, inv_n, &acc);
              const auto seg_grad = rollout_backward(policy_cfg_, layout_,
                                                     params_, tape, lg);
              kern::axpy(1.0f, seg_grad.data(), grad.data(), grad.size());
            }
          } else {
            RolloutTape<float> tape;
            tape.h0 = resets[s].second;
            HiddenState<float> hid = tape.h0;
            std::vector<StepGrad<float>> lg;
            for (int t = s0; t < s1; ++t) {
              tape.steps.emplace_back();
              HiddenState<float> next;
              const auto fwd = policy_forward(policy_cfg_, layout_, params_,
                                              buf.obs[e][t], hid, &next,
                                              &tape.steps.back());
              hid = std::move(next);
              const float adv = static_cast<float>(
                  (buf.advantages[e][t] - mean) * inv_std);
              lg.push_back(step_loss_grad(fwd.logits, buf.actions[e][t],
                                          buf.logprobs[e][t], adv,
                                          buf.returns[e][t], fwd.value,
                                          train_cfg_, inv_n, &acc));
            }
            const auto seg_grad = rollout_backward(policy_cfg_, layout_,
                                                   params_, tape, lg);
            kern::axpy(1.0f, seg_grad.data(), grad.data(), grad.size());
          }
        }
      }

      for (float v : grad)
        if (!std::isfinite(v))
          throw PpoError("ppo_update: non-finite gradient");
      double norm_sq = 0.0;
      for (float v : grad) norm_sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(norm_sq);
      stats.grad_norm += norm;
      ++norm_batches;
      if (train_cfg_.max_grad_norm > 0.0 && norm > train_cfg_.max_grad_norm) {
        const float scale =
            static_cast<float>(train_cfg_.max_grad_norm / norm);
        for (float& v : grad) v *= scale;
      }
      adam_step(adam_, params_, grad, train_cfg_.lr);

      total.policy_loss += acc.policy_loss;
      total.value_loss += acc.value_loss;
      total.entropy += acc.entropy;
      total.clipped += acc.clipped;
      total.count += acc.count;
      if (epoch == 0 && g == 0) first = acc;
    }
  }

  const double c = std::max<double>(1, total.count);
  stats.policy_loss = total.policy_loss / c;
  stats.value_loss = total.value_loss / c;
  stats.entropy = total.entropy / c;
  stats.clip_frac = static_cast<double>(total.clipped) / c;
  stats.mean_ratio_error =
      first.ratio_count ? first.ratio_err / first.ratio_count : 0.0;
  stats.grad_norm /= std::max(1, norm_batches);
  return stats;
}

TrainStats Trainer::step() {
  auto buf = collect_rollout();
  return ppo_update(buf);
}

TrainLoopResult train_loop(const PolicyConfig& policy_cfg,
                           const TrainConfig& train_cfg,
                           EpisodeProvider train_provider,
                           const std::vector<EpisodeSample>& eval_episodes,
                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  Trainer trainer(policy_cfg, train_cfg, std::move(train_provider));
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::ostringstream csv;
  csv << "update,env_steps,success,spl,reward,entropy,clip_frac\n";

  auto run_eval = [&](int update, double mean_reward, const TrainStats& st) {
    double succ = -1.0, mean_spl = -1.0;
    if (!eval_episodes.empty()) {
      EvalOptions opts;
      opts.mode = SampleMode::Argmax;
      opts.memory_budget = train_cfg.memory_budget;
      opts.zero_gps_compass = train_cfg.zero_gps_compass;
      opts.seed = train_cfg.seed + 1000003ULL * update;
      const auto results =
          evaluate(policy_cfg, trainer.params(), eval_episodes, opts);
      succ = 0.0;
      mean_spl = 0.0;
      for (const auto& r : results) {
        succ += r.success ? 1.0 : 0.0;
        mean_spl += r.spl;
      }
      succ /= results.size();
      mean_spl /= results.size();
    }
    csv << update << ',' << trainer.env_steps() << ',' << succ << ','
        << mean_spl << ',' << mean_reward << ',' << st.entropy << ','
        << st.clip_frac << '\n';
    if (!out_dir.empty()) {
      std::ofstream f(fs::path(out_dir) / "metrics.csv");
      f << csv.str();
    }
  };

  auto save = [&](const std::string& name) {
    if (out_dir.empty()) return;
    Checkpoint ck;
    ck.config = policy_cfg;
    ck.seed = train_cfg.seed;
    ck.env_steps = trainer.env_steps();
    ck.params = trainer.params();
    save_checkpoint((fs::path(out_dir) / name).string(), ck);
  };

  TrainStats st;
  for (int update = 1; update <= train_cfg.max_updates; ++update) {
    auto buf = trainer.collect_rollout();
    double mean_reward = 0.0;
    for (const auto& row : buf.rewards)
      for (float r : row) mean_reward += r;
    mean_reward /= static_cast<double>(buf.num_envs) * buf.len;
    st = trainer.ppo_update(buf);
    if (train_cfg.eval_every > 0 &&
        (update % train_cfg.eval_every == 0 || update == train_cfg.max_updates))
      run_eval(update, mean_reward, st);
    if (train_cfg.checkpoint_every > 0 &&
        update % train_cfg.checkpoint_every == 0)
      save("latest.ckpt");
  }

  TrainLoopResult out;
  out.checkpoint.config = policy_cfg;
  out.checkpoint.seed = train_cfg.seed;
  out.checkpoint.env_steps = trainer.env_steps();
  out.checkpoint.params = trainer.params();
  out.metrics_csv = csv.str();
  if (!out_dir.empty()) {
    save("final.ckpt");
    std::ofstream f(fs::path(out_dir) / "metrics.csv");
    f << out.metrics_csv;
  }
  return out;
}

}  // namespace navlab
