#pragma once
// Blind-agent network: four observation encoders, LSTM stack, actor-critic
// head. Forward and reverse passes are hand-rolled over the kernel layer;
// everything is templated on the scalar so gradient checks can run in
// double while training runs in float.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "navlab/env.hpp"
#include "navlab/kernels.hpp"

namespace navlab {

struct PolicyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PolicyConfig {
  int embed_dim = 16;    // paper-scale: 32
  int lstm_layers = 1;   // paper-scale: 3
  int lstm_hidden = 128; // paper-scale: 512
  static constexpr int action_count = kPolicyActions;

  int input_dim() const { return 5 * embed_dim; }
  int flat_hidden_dim() const { return 2 * lstm_layers * lstm_hidden; }
  bool operator==(const PolicyConfig&) const = default;
};

// Named slices into the flat parameter vector, in declared (serialized) order.
struct TensorSpec {
  std::string name;
  std::size_t rows = 0, cols = 0, offset = 0;
  std::size_t size() const { return rows * cols; }
};

struct ParamLayout {
  PolicyConfig cfg;
  std::vector<TensorSpec> tensors;
  std::size_t total = 0;

  static ParamLayout make(const PolicyConfig& cfg);
  const TensorSpec& find(const std::string& name) const;

  // Fixed projection input widths: goal(3), gps(3), compass(1), proximity(1).
  static constexpr std::array<int, 4> kProjIn = {3, 3, 1, 1};

  std::size_t proj_W(int j) const { return tensors[2 * j].offset; }
  std::size_t proj_b(int j) const { return tensors[2 * j + 1].offset; }
  std::size_t act_embed() const { return tensors[8].offset; }
  std::size_t lstm_wx(int l) const { return tensors[9 + 3 * l].offset; }
  std::size_t lstm_wh(int l) const { return tensors[10 + 3 * l].offset; }
  std::size_t lstm_b(int l) const { return tensors[11 + 3 * l].offset; }
  std::size_t head_W() const { return tensors[9 + 3 * cfg.lstm_layers].offset; }
  std::size_t head_b() const {
    return tensors[10 + 3 * cfg.lstm_layers].offset;
  }
  int lstm_in(int l) const { return l == 0 ? cfg.input_dim() : cfg.lstm_hidden; }
};

template <typename T>
struct HiddenState {
  std::vector<std::vector<T>> h, c;  // per layer, lstm_hidden each

  static HiddenState zero(const PolicyConfig& cfg) {
    HiddenState s;
    s.h.assign(cfg.lstm_layers, std::vector<T>(cfg.lstm_hidden, T(0)));
    s.c.assign(cfg.lstm_layers, std::vector<T>(cfg.lstm_hidden, T(0)));
    return s;
  }
  std::vector<T> flatten() const {
    std::vector<T> out;
    for (const auto& v : h) out.insert(out.end(), v.begin(), v.end());
    for (const auto& v : c) out.insert(out.end(), v.begin(), v.end());
    return out;
  }
  static HiddenState unflatten(const PolicyConfig& cfg,
                               const std::vector<T>& flat) {
    HiddenState s = zero(cfg);
    std::size_t k = 0;
    for (auto& v : s.h)
      for (auto& x : v) x = flat[k++];
    for (auto& v : s.c)
      for (auto& x : v) x = flat[k++];
    return s;
  }
};

template <typename T>
struct ForwardOut {
  std::array<T, kPolicyActions> logits{};
  T value = T(0);
};

// Per-step activations recorded for backpropagation through time.
template <typename T>
struct StepCache {
  std::array<std::vector<T>, 4> obs_in;   // raw inputs per projection
  std::array<std::vector<T>, 4> proj_pre; // pre-ReLU projections
  int prev_action = 0;
  std::vector<T> x;  // concatenated LSTM input
  struct Layer {
    std::vector<T> h_prev, c_prev;
    std::vector<T> gates;   // activated [i f g o], 4H
    std::vector<T> c, tanh_c, h;
    std::vector<T> x_in;    // input to this layer (h of layer below for l>0)
  };
  std::vector<Layer> layers;
};

template <typename T>
struct RolloutTape {
  HiddenState<T> h0;
  std::vector<StepCache<T>> steps;
};

template <typename T>
struct StepGrad {
  std::array<T, kPolicyActions> dlogits{};
  T dvalue = T(0);
};

// ---- kernel shims (float dispatches to SIMD, double stays scalar) ----
inline void k_matvec(const float* W, const float* x, const float* b, float* y,
                     std::size_t r, std::size_t c) {
  kern::matvec(W, x, b, y, r, c);
}
inline void k_matvec(const double* W, const double* x, const double* b,
                     double* y, std::size_t r, std::size_t c) {
  kern::matvec_d(W, x, b, y, r, c);
}
inline void k_matvec_t_acc(const float* W, const float* g, float* out,
                           std::size_t r, std::size_t c) {
  kern::matvec_t_acc(W, g, out, r, c);
}
inline void k_matvec_t_acc(const double* W, const double* g, double* out,
                           std::size_t r, std::size_t c) {
  kern::matvec_t_acc_d(W, g, out, r, c);
}
inline void k_ger_acc(float* W, const float* g, const float* x, std::size_t r,
                      std::size_t c) {
  kern::ger_acc(W, g, x, r, c);
}
inline void k_ger_acc(double* W, const double* g, const double* x,
                      std::size_t r, std::size_t c) {
  kern::ger_acc_d(W, g, x, r, c);
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Observation as the four raw projection inputs.
template <typename T>
std::array<std::vector<T>, 4> observation_inputs(const Observation& obs) {
  return {std::vector<T>{T(obs.goal_rel[0]), T(obs.goal_rel[1]),
                         T(obs.goal_rel[2])},
          std::vector<T>{T(obs.gps[0]), T(obs.gps[1]), T(obs.gps[2])},
          std::vector<T>{T(obs.compass)}, std::vector<T>{T(obs.proximity)}};
}

template <typename T>
ForwardOut<T> policy_forward(const PolicyConfig& cfg, const ParamLayout& layout,
                             const std::vector<T>& params,
                             const Observation& obs,
                             const HiddenState<T>& hidden,
                             HiddenState<T>* next_hidden,
                             StepCache<T>* cache = nullptr) {
  const int e = cfg.embed_dim;
  const int H = cfg.lstm_hidden;
  auto inputs = observation_inputs<T>(obs);
  for (const auto& v : inputs)
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x)))
        throw PolicyError("policy_forward: non-finite observation");

  std::vector<T> x(cfg.input_dim());
  for (int j = 0; j < 4; ++j) {
    std::vector<T> pre(e);
    k_matvec(params.data() + layout.proj_W(j), inputs[j].data(),
             params.data() + layout.proj_b(j), pre.data(), e,
             inputs[j].size());
    for (int i = 0; i < e; ++i) x[j * e + i] = pre[i] > T(0) ? pre[i] : T(0);
    if (cache) {
      cache->obs_in[j] = inputs[j];
      cache->proj_pre[j] = std::move(pre);
    }
  }
  const int a = static_cast<int>(obs.prev_action);
  const T* embed = params.data() + layout.act_embed() + a * e;
  for (int i = 0; i < e; ++i) x[4 * e + i] = embed[i];
  if (cache) {
    cache->prev_action = a;
    cache->x = x;
    cache->layers.resize(cfg.lstm_layers);
  }

  std::vector<T> layer_in = x;
  HiddenState<T> next = HiddenState<T>::zero(cfg);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    std::vector<T> gates(4 * H);
    k_matvec(params.data() + layout.lstm_wx(l), layer_in.data(),
             params.data() + layout.lstm_b(l), gates.data(), 4 * H,
             layer_in.size());
    std::vector<T> rec(4 * H, T(0));
    k_matvec(params.data() + layout.lstm_wh(l), hidden.h[l].data(), nullptr,
             rec.data(), 4 * H, H);
    for (int i = 0; i < 4 * H; ++i) gates[i] += rec[i];
    for (int i = 0; i < H; ++i) {
      gates[i] = sigmoid(gates[i]);               // input
      gates[H + i] = sigmoid(gates[H + i]);       // forget
      gates[2 * H + i] = std::tanh(gates[2 * H + i]);  // candidate
      gates[3 * H + i] = sigmoid(gates[3 * H + i]);    // output
    }
    std::vector<T> c(H), tanh_c(H), h(H);
    for (int i = 0; i < H; ++i) {
      c[i] = gates[H + i] * hidden.c[l][i] + gates[i] * gates[2 * H + i];
      tanh_c[i] = std::tanh(c[i]);
      h[i] = gates[3 * H + i] * tanh_c[i];
    }
    if (cache) {
      auto& cl = cache->layers[l];
      cl.h_prev = hidden.h[l];
      cl.c_prev = hidden.c[l];
      cl.gates = gates;
      cl.c = c;
      cl.tanh_c = tanh_c;
      cl.h = h;
      cl.x_in = layer_in;
    }
    next.h[l] = h;
    next.c[l] = c;
    layer_in = std::move(h);
  }

  ForwardOut<T> out;
  std::vector<T> head(kPolicyActions + 1);
  k_matvec(params.data() + layout.head_W(), next.h.back().data(),
           params.data() + layout.head_b(), head.data(), kPolicyActions + 1,
           H);
  for (int i = 0; i < kPolicyActions; ++i) out.logits[i] = head[i];
  out.value = head[kPolicyActions];
  if (next_hidden) *next_hidden = std::move(next);
  return out;
}

// Exact reverse-mode gradients of the recorded rollout slice, summed over
// time. loss_grads[t] holds dLoss/dlogits and dLoss/dvalue at step t.
template <typename T>
std::vector<T> rollout_backward(const PolicyConfig& cfg,
                                const ParamLayout& layout,
                                const std::vector<T>& params,
                                const RolloutTape<T>& tape,
                                const std::vector<StepGrad<T>>& loss_grads) {
  if (tape.steps.size() != loss_grads.size())
    throw PolicyError("rollout_backward: tape/loss length mismatch");
  const int e = cfg.embed_dim;
  const int H = cfg.lstm_hidden;
  const int L = cfg.lstm_layers;
  std::vector<T> grad(layout.total, T(0));

  // dh/dc carried backward across time per layer.
  std::vector<std::vector<T>> dh(L, std::vector<T>(H, T(0)));
  std::vector<std::vector<T>> dc(L, std::vector<T>(H, T(0)));

  for (std::size_t ti = tape.steps.size(); ti-- > 0;) {
    const auto& sc = tape.steps[ti];
    const auto& lg = loss_grads[ti];

    // head
    std::vector<T> dhead(kPolicyActions + 1);
    for (int i = 0; i < kPolicyActions; ++i) dhead[i] = lg.dlogits[i];
    dhead[kPolicyActions] = lg.dvalue;
    const auto& h_top = sc.layers[L - 1].h;
    k_ger_acc(grad.data() + layout.head_W(), dhead.data(), h_top.data(),
              kPolicyActions + 1, H);
    for (int i = 0; i < kPolicyActions + 1; ++i)
      grad[layout.head_b() + i] += dhead[i];
    std::vector<T> dh_same(H, T(0));
    k_matvec_t_acc(params.data() + layout.head_W(), dhead.data(),
                   dh_same.data(), kPolicyActions + 1, H);

    std::vector<T> dx_below;  // gradient flowing into the layer below's h
    for (int l = L - 1; l >= 0; --l) {
      const auto& cl = sc.layers[l];
      std::vector<T> dh_t = dh[l];
      if (l == L - 1)
        for (int i = 0; i < H; ++i) dh_t[i] += dh_same[i];
      else
        for (int i = 0; i < H; ++i) dh_t[i] += dx_below[i];

      std::vector<T> dgates(4 * H);
      std::vector<T> dc_t = dc[l];
      for (int i = 0; i < H; ++i) {
        const T o = cl.gates[3 * H + i];
        const T tc = cl.tanh_c[i];
        dc_t[i] += dh_t[i] * o * (T(1) - tc * tc);
        const T dO = dh_t[i] * tc;
        const T ig = cl.gates[i], fg = cl.gates[H + i], gg = cl.gates[2 * H + i];
        const T dI = dc_t[i] * gg;
        const T dF = dc_t[i] * cl.c_prev[i];
        const T dG = dc_t[i] * ig;
        dgates[i] = dI * ig * (T(1) - ig);
        dgates[H + i] = dF * fg * (T(1) - fg);
        dgates[2 * H + i] = dG * (T(1) - gg * gg);
        dgates[3 * H + i] = dO * o * (T(1) - o);
        dc[l][i] = dc_t[i] * fg;  // carried to step t-1
      }

      k_ger_acc(grad.data() + layout.lstm_wx(l), dgates.data(),
                cl.x_in.data(), 4 * H, cl.x_in.size());
      k_ger_acc(grad.data() + layout.lstm_wh(l), dgates.data(),
                cl.h_prev.data(), 4 * H, H);
      for (int i = 0; i < 4 * H; ++i) grad[layout.lstm_b(l) + i] += dgates[i];

      std::vector<T> dx(cl.x_in.size(), T(0));
      k_matvec_t_acc(params.data() + layout.lstm_wx(l), dgates.data(),
                     dx.data(), 4 * H, cl.x_in.size());
      std::fill(dh[l].begin(), dh[l].end(), T(0));
      k_matvec_t_acc(params.data() + layout.lstm_wh(l), dgates.data(),
                     dh[l].data(), 4 * H, H);

      if (l > 0) {
        dx_below = std::move(dx);
      } else {
        // split into projection and action-embedding gradients
        for (int i = 0; i < e; ++i)
          grad[layout.act_embed() + sc.prev_action * e + i] += dx[4 * e + i];
        for (int j = 0; j < 4; ++j) {
          std::vector<T> dpre(e);
          for (int i = 0; i < e; ++i)
            dpre[i] = sc.proj_pre[j][i] > T(0) ? dx[j * e + i] : T(0);
          k_ger_acc(grad.data() + layout.proj_W(j), dpre.data(),
                    sc.obs_in[j].data(), e, sc.obs_in[j].size());
          for (int i = 0; i < e; ++i) grad[layout.proj_b(j) + i] += dpre[i];
        }
      }
    }
  }
  return grad;
}

// Hidden state rebuilt from zeros over exactly the window's steps.
template <typename T>
HiddenState<T> truncated_encode(const PolicyConfig& cfg,
                                const ParamLayout& layout,
                                const std::vector<T>& params,
                                const std::vector<Observation>& window) {
  if (window.empty()) throw PolicyError("truncated_encode: empty window");
  HiddenState<T> h = HiddenState<T>::zero(cfg);
  for (const auto& obs : window) {
    HiddenState<T> next;
    policy_forward(cfg, layout, params, obs, h, &next);
    h = std::move(next);
  }
  return h;
}

enum class SampleMode { Sample, Argmax };

template <typename T>
std::array<T, kPolicyActions> log_softmax(
    const std::array<T, kPolicyActions>& logits) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T sum = T(0);
  for (T v : logits) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  std::array<T, kPolicyActions> out;
  for (int i = 0; i < kPolicyActions; ++i) out[i] = logits[i] - lse;
  return out;
}

struct ActionSample {
  Action action = Action::Stop;
  double logprob = 0.0;
};

ActionSample sample_action(const std::array<float, kPolicyActions>& logits,
                           std::mt19937_64& rng, SampleMode mode);

// Orthogonal recurrent matrices, scaled-uniform projections, zero biases,
// forget-gate bias +1. Deterministic in the rng state.
std::vector<float> init_params(std::mt19937_64& rng, const PolicyConfig& cfg);

std::vector<double> to_double(const std::vector<float>& params);
std::vector<float> to_float(const std::vector<double>& params);

// Checkpoint file: one-line JSON header then a little-endian float32 blob in
// declared tensor order.
struct Checkpoint {
  PolicyConfig config;
  std::uint64_t seed = 0;
  std::uint64_t env_steps = 0;
  std::vector<float> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace navlab
