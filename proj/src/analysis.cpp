#include "navlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "navlab/metrics.hpp"

namespace navlab {

namespace {

std::vector<float> normalized(const std::vector<float>& x,
                              const std::vector<double>& mean,
                              const std::vector<double>& stdev) {
  if (mean.empty()) return x;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>((x[i] - mean[i]) / stdev[i]);
  return out;
}

std::vector<Trajectory> roll_episodes(const PolicyConfig& cfg,
                                      const std::vector<float>& params,
                                      const std::vector<EpisodeSample>& eps,
                                      const EvalOptions& options) {
  EvalOptions opts = options;
  opts.record_hidden = true;
  std::vector<Trajectory> out;
  out.reserve(eps.size());
  for (const auto& res : evaluate(cfg, params, eps, opts))
    out.push_back(res.trajectory);
  return out;
}

}  // namespace

void zscore_fit(HiddenStateDataset& ds) {
  if (ds.x.empty()) throw AnalysisError("zscore_fit: empty dataset");
  const std::size_t d = ds.x[0].size();
  ds.mean.assign(d, 0.0);
  ds.stdev.assign(d, 0.0);
  for (const auto& row : ds.x)
    for (std::size_t i = 0; i < d; ++i) ds.mean[i] += row[i];
  for (double& m : ds.mean) m /= static_cast<double>(ds.x.size());
  for (const auto& row : ds.x)
    for (std::size_t i = 0; i < d; ++i) {
      const double dv = row[i] - ds.mean[i];
      ds.stdev[i] += dv * dv;
    }
  for (double& s : ds.stdev) {
    s = std::sqrt(s / static_cast<double>(ds.x.size()));
    if (s < 1e-12) s = 1.0;  // constant dimension: leave centered only
  }
  zscore_apply(ds, ds.mean, ds.stdev);
}

void zscore_apply(HiddenStateDataset& ds, const std::vector<double>& mean,
                  const std::vector<double>& stdev) {
  for (auto& row : ds.x)
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = static_cast<float>((row[i] - mean[i]) / stdev[i]);
  ds.mean = mean;
  ds.stdev = stdev;
}

HiddenStateDataset build_collision_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    std::vector<Trajectory>* trajectories) {
  HiddenStateDataset ds;
  ds.dim = cfg.flat_hidden_dim();
  auto trajs = roll_episodes(cfg, params, episodes, options);
  for (std::size_t e = 0; e < trajs.size(); ++e) {
    const auto& traj = trajs[e];
    // hidden[t] is the state after seeing the observation that follows
    // action t-1, i.e. the first state that can know about that collision
    for (std::size_t t = 1; t < traj.steps.size() && t < traj.hidden.size();
         ++t) {
      ds.x.push_back(traj.hidden[t]);
      ds.label_flag.push_back(traj.steps[t].collided ? 1 : 0);
      ds.episode_id.push_back(static_cast<int>(e));
      ds.t.push_back(static_cast<int>(t));
    }
  }
  if (trajectories) *trajectories = std::move(trajs);
  return ds;
}

HiddenStateDataset map_dataset_from_trajectories(
    const std::vector<Trajectory>& trajectories,
    const std::vector<const OccupancyGrid*>& grids,
    const MapDatasetOptions& mo) {
  HiddenStateDataset ds;
  const int G = mo.grid_extent;
  for (std::size_t e = 0; e < trajectories.size(); ++e) {
    const auto& traj = trajectories[e];
    if (traj.hidden.empty()) continue;
    ds.dim = static_cast<int>(traj.hidden[0].size());
    const auto& ep = traj.episode;
    const OccupancyGrid& grid = *grids[e];
    const double c = std::cos(ep.start.theta), s = std::sin(ep.start.theta);
    std::vector<std::uint8_t> truth(G * G, 0), mask(G * G, 0);
    for (int j = 0; j < G; ++j) {
      for (int i = 0; i < G; ++i) {
        // allocentric grid in the episode frame, centered on the start
        const double ox = (i + 0.5 - G / 2.0) * mo.grid_res;
        const double oy = (j + 0.5 - G / 2.0) * mo.grid_res;
        const double wx = ep.start.x + c * ox - s * oy;
        const double wy = ep.start.y + s * ox + c * oy;
        truth[j * G + i] =
            grid.navigable(grid.cell_x(wx), grid.cell_y(wy)) ? 1 : 0;
        for (const auto& st : traj.steps) {
          if (std::hypot(st.x - wx, st.y - wy) <= mo.mask_radius) {
            mask[j * G + i] = 1;
            break;
          }
        }
      }
    }
    const int T = static_cast<int>(traj.hidden.size()) - 1;  // in-episode
    if (T < 0) continue;
    const int n = std::min(mo.samples_per_episode, T + 1);
    for (int q = 0; q < n; ++q) {
      const int t =
          n == 1 ? T : static_cast<int>(std::lround(q * double(T) / (n - 1)));
      ds.x.push_back(traj.hidden[t]);
      ds.label_grid.push_back(truth);
      ds.label_mask.push_back(mask);
      ds.episode_id.push_back(static_cast<int>(e));
      ds.t.push_back(t);
    }
  }
  return ds;
}

HiddenStateDataset build_map_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    const MapDatasetOptions& mo, std::vector<Trajectory>* trajectories) {
  auto trajs = roll_episodes(cfg, params, episodes, options);
  std::vector<const OccupancyGrid*> grids;
  for (const auto& e : episodes) grids.push_back(e.grid);
  auto ds = map_dataset_from_trajectories(trajs, grids, mo);
  ds.dim = cfg.flat_hidden_dim();
  if (trajectories) *trajectories = std::move(trajs);
  return ds;
}

std::vector<std::vector<float>> replay_hidden(const PolicyConfig& cfg,
                                              const std::vector<float>& params,
                                              const OccupancyGrid& grid,
                                              const Trajectory& trajectory) {
  const ParamLayout layout = ParamLayout::make(cfg);
  EnvState env(&grid, trajectory.episode);
  HiddenState<float> state = HiddenState<float>::zero(cfg);
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
    const Observation obs = env.observation();
    HiddenState<float> next;
    policy_forward(cfg, layout, params, obs, state, &next);
    state = std::move(next);
    out.push_back(state.flatten());
    if (i + 1 < trajectory.steps.size())
      env.step(static_cast<Action>(trajectory.steps[i + 1].action));
  }
  return out;
}

HiddenStateDataset position_dataset_from_trajectories(
    const std::vector<Trajectory>& trajectories, int k) {
  HiddenStateDataset ds;
  for (std::size_t e = 0; e < trajectories.size(); ++e) {
    const auto& traj = trajectories[e];
    if (traj.hidden.empty()) continue;
    ds.dim = static_cast<int>(traj.hidden[0].size());
    const auto& ep = traj.episode;
    const double c = std::cos(-ep.start.theta), s = std::sin(-ep.start.theta);
    const int T = static_cast<int>(traj.steps.size()) - 1;
    for (int t = 0; t <= T && t < static_cast<int>(traj.hidden.size()); ++t) {
      const int u = t + k;
      if (u < 0 || u > T) continue;
      const double dx = traj.steps[u].x - traj.steps[t].x;
      const double dy = traj.steps[u].y - traj.steps[t].y;
      ds.x.push_back(traj.hidden[t]);
      ds.label_offset.push_back({c * dx - s * dy, s * dx + c * dy, 0.0});
      ds.episode_id.push_back(static_cast<int>(e));
      ds.t.push_back(t);
    }
  }
  return ds;
}

HiddenStateDataset build_position_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    int k, std::vector<Trajectory>* trajectories) {
  auto trajs = roll_episodes(cfg, params, episodes, options);
  auto ds = position_dataset_from_trajectories(trajs, k);
  ds.dim = cfg.flat_hidden_dim();
  if (trajectories) *trajectories = std::move(trajs);
  return ds;
}

HiddenStateDataset shuffle_hidden_across_episodes(
    const HiddenStateDataset& ds, std::uint64_t seed) {
  HiddenStateDataset out = ds;
  const std::size_t n = ds.x.size();
  if (n < 2) return out;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  // repair fixed episodes: every record must borrow from another episode
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.episode_id[perm[i]] != ds.episode_id[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (ds.episode_id[perm[j]] != ds.episode_id[i] &&
          ds.episode_id[perm[i]] != ds.episode_id[j]) {
        std::swap(perm[i], perm[j]);
        break;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.x[i] = ds.x[perm[i]];
  return out;
}

// ---------------------------------------------------------------- file IO

void save_hidden_dataset(const std::string& path, const HiddenStateDataset& ds,
                         const std::string& task, const std::string& split) {
  nlohmann::json header;
  header["magic"] = "navlab-hidden-v1";
  header["task"] = task;
  header["split"] = split;
  header["dim"] = ds.dim;
  header["records"] = ds.x.size();
  header["flags"] = ds.label_flag.size();
  header["offsets"] = ds.label_offset.size();
  header["grids"] = ds.label_grid.size();
  header["grid_cells"] = ds.label_grid.empty() ? 0 : ds.label_grid[0].size();
  header["mean"] = ds.mean;
  header["stdev"] = ds.stdev;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw AnalysisError("save_hidden_dataset: cannot open " + path);
  out << header.dump() << '\n';
  for (const auto& row : ds.x)
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  if (!ds.label_flag.empty())
    out.write(reinterpret_cast<const char*>(ds.label_flag.data()),
              static_cast<std::streamsize>(ds.label_flag.size()));
  for (const auto& off : ds.label_offset)
    out.write(reinterpret_cast<const char*>(off.data()),
              3 * sizeof(double));
  for (std::size_t i = 0; i < ds.label_grid.size(); ++i) {
    out.write(reinterpret_cast<const char*>(ds.label_grid[i].data()),
              static_cast<std::streamsize>(ds.label_grid[i].size()));
    out.write(reinterpret_cast<const char*>(ds.label_mask[i].data()),
              static_cast<std::streamsize>(ds.label_mask[i].size()));
  }
  out.write(reinterpret_cast<const char*>(ds.episode_id.data()),
            static_cast<std::streamsize>(ds.episode_id.size() * sizeof(int)));
  out.write(reinterpret_cast<const char*>(ds.t.data()),
            static_cast<std::streamsize>(ds.t.size() * sizeof(int)));
  if (!out) throw AnalysisError("save_hidden_dataset: write failed: " + path);
}

HiddenStateDataset load_hidden_dataset(const std::string& path,
                                       std::string* task,
                                       std::string* split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnalysisError("load_hidden_dataset: cannot open " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw AnalysisError(std::string("load_hidden_dataset: bad header: ") +
                        e.what());
  }
  if (header.value("magic", std::string()) != "navlab-hidden-v1")
    throw AnalysisError("load_hidden_dataset: magic mismatch in " + path);
  if (task) *task = header.value("task", std::string());
  if (split) *split = header.value("split", std::string());

  HiddenStateDataset ds;
  ds.dim = header["dim"];
  const std::size_t n = header["records"];
  ds.mean = header["mean"].get<std::vector<double>>();
  ds.stdev = header["stdev"].get<std::vector<double>>();
  auto read_or_throw = [&](char* dst, std::size_t bytes) {
    in.read(dst, static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
      throw AnalysisError("load_hidden_dataset: truncated file: " + path);
  };
  ds.x.assign(n, std::vector<float>(ds.dim));
  for (auto& row : ds.x)
    read_or_throw(reinterpret_cast<char*>(row.data()),
                  row.size() * sizeof(float));
  const std::size_t flags = header["flags"];
  ds.label_flag.resize(flags);
  if (flags)
    read_or_throw(reinterpret_cast<char*>(ds.label_flag.data()), flags);
  const std::size_t offsets = header["offsets"];
  ds.label_offset.resize(offsets);
  for (auto& off : ds.label_offset)
    read_or_throw(reinterpret_cast<char*>(off.data()), 3 * sizeof(double));
  const std::size_t grids = header["grids"];
  const std::size_t cells = header["grid_cells"];
  ds.label_grid.assign(grids, std::vector<std::uint8_t>(cells));
  ds.label_mask.assign(grids, std::vector<std::uint8_t>(cells));
  for (std::size_t i = 0; i < grids; ++i) {
    read_or_throw(reinterpret_cast<char*>(ds.label_grid[i].data()), cells);
    read_or_throw(reinterpret_cast<char*>(ds.label_mask[i].data()), cells);
  }
  ds.episode_id.resize(n);
  ds.t.resize(n);
  read_or_throw(reinterpret_cast<char*>(ds.episode_id.data()),
                n * sizeof(int));
  read_or_throw(reinterpret_cast<char*>(ds.t.data()), n * sizeof(int));
  return ds;
}

// ---------------------------------------------------------------- probes

ProbeFit train_collision_probe(const HiddenStateDataset& train,
                               double l1_penalty, int epochs, double lr) {
  const std::size_t n = train.x.size();
  if (n == 0) throw AnalysisError("train_collision_probe: empty dataset");
  bool any0 = false, any1 = false;
  for (auto v : train.label_flag) (v ? any1 : any0) = true;
  if (!any0 || !any1)
    throw AnalysisError("train_collision_probe: single-class dataset");
  const std::size_t d = train.x[0].size();
  ProbeFit fit;
  fit.probe.weight.assign(d, 0.0);
  fit.probe.l1_penalty = l1_penalty;
  std::vector<double> grad(d);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = fit.probe.bias;
      const auto& row = train.x[i];
      for (std::size_t j = 0; j < d; ++j) z += fit.probe.weight[j] * row[j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - train.label_flag[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * row[j];
      gb += err;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      double g = grad[j] * inv_n;
      const double w = fit.probe.weight[j];
      g += l1_penalty * (w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0));
      fit.probe.weight[j] -= lr * g;
    }
    fit.probe.bias -= lr * gb * inv_n;
  }
  fit.train_accuracy = probe_accuracy(fit.probe, train);
  return fit;
}

namespace {

double probe_score(const LinearProbe& probe, const std::vector<float>& row) {
  double z = probe.bias;
  for (std::size_t j = 0; j < row.size(); ++j) z += probe.weight[j] * row[j];
  return z;
}

}  // namespace

double probe_accuracy(const LinearProbe& probe, const HiddenStateDataset& ds) {
  if (ds.x.empty()) throw AnalysisError("probe_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.x.size(); ++i)
    correct += (probe_score(probe, ds.x[i]) > 0.0) == (ds.label_flag[i] != 0);
  return static_cast<double>(correct) / static_cast<double>(ds.x.size());
}

double probe_balanced_accuracy(const LinearProbe& probe,
                               const HiddenStateDataset& ds) {
  double hit[2] = {0, 0}, tot[2] = {0, 0};
  for (std::size_t i = 0; i < ds.x.size(); ++i) {
    const int y = ds.label_flag[i] ? 1 : 0;
    tot[y] += 1.0;
    if ((probe_score(probe, ds.x[i]) > 0.0) == (y != 0)) hit[y] += 1.0;
  }
  double sum = 0.0;
  int classes = 0;
  for (int y = 0; y < 2; ++y)
    if (tot[y] > 0) {
      sum += hit[y] / tot[y];
      ++classes;
    }
  if (classes == 0) throw AnalysisError("probe_balanced_accuracy: empty");
  return sum / classes;
}

double truncated_probe_accuracy(const LinearProbe& probe,
                                const HiddenStateDataset& ds, int top_n) {
  std::vector<int> order(probe.weight.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(probe.weight[a]) > std::abs(probe.weight[b]);
  });
  LinearProbe cut;
  cut.bias = probe.bias;
  cut.weight.assign(probe.weight.size(), 0.0);
  for (int i = 0; i < top_n && i < static_cast<int>(order.size()); ++i)
    cut.weight[order[i]] = probe.weight[order[i]];
  return probe_accuracy(cut, ds);
}

TopDimSelection select_top_dims(const HiddenStateDataset& train,
                                const HiddenStateDataset& heldout,
                                const std::vector<double>& penalties,
                                double retain_frac, int epochs) {
  if (penalties.empty()) throw AnalysisError("select_top_dims: no penalties");
  const auto full = train_collision_probe(train, 0.0, epochs);
  TopDimSelection sel;
  sel.full_accuracy = probe_accuracy(full.probe, heldout);
  const double target = retain_frac * sel.full_accuracy;
  int best_count = -1;

  for (double pen : penalties) {
    const auto fit = train_collision_probe(train, pen, epochs);
    std::vector<int> order(fit.probe.weight.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(fit.probe.weight[a]) > std::abs(fit.probe.weight[b]);
    });
    // incremental prefix scores over the held-out set
    std::vector<double> score(heldout.x.size(), fit.probe.bias);
    int kept = -1;
    double kept_acc = 0.0;
    for (std::size_t p = 0; p < order.size(); ++p) {
      const int dim = order[p];
      const double w = fit.probe.weight[dim];
      if (w != 0.0)
        for (std::size_t i = 0; i < heldout.x.size(); ++i)
          score[i] += w * heldout.x[i][dim];
      std::size_t correct = 0;
      for (std::size_t i = 0; i < heldout.x.size(); ++i)
        correct += (score[i] > 0.0) == (heldout.label_flag[i] != 0);
      const double acc =
          static_cast<double>(correct) / static_cast<double>(heldout.x.size());
      if (acc >= target) {
        kept = static_cast<int>(p) + 1;
        kept_acc = acc;
        break;
      }
    }
    if (kept < 0) continue;
    if (best_count < 0 || kept < best_count) {
      best_count = kept;
      sel.penalty = pen;
      sel.reduced_accuracy = kept_acc;
      sel.dims.assign(order.begin(), order.begin() + kept);
    }
  }
  if (best_count < 0)
    throw AnalysisError("select_top_dims: no penalty met the retain target");
  return sel;
}

// ---------------------------------------------------------------- MLP

Mlp Mlp::make(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw AnalysisError("Mlp::make: need >= 2 layer sizes");
  Mlp m;
  m.dims = dims;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const double s = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-s, s);
    std::vector<float> w(static_cast<std::size_t>(out) * in);
    for (auto& v : w) v = static_cast<float>(u(rng));
    m.w.push_back(std::move(w));
    m.b.emplace_back(out, 0.0f);
  }
  return m;
}

std::vector<float> Mlp::forward(const std::vector<float>& in) const {
  std::vector<float> a = in;
  for (std::size_t l = 0; l < w.size(); ++l) {
    std::vector<float> z(dims[l + 1]);
    kern::matvec(w[l].data(), a.data(), b[l].data(), z.data(), dims[l + 1],
                 dims[l]);
    if (l + 1 < w.size())
      for (auto& v : z) v = v > 0.0f ? v : 0.0f;
    a = std::move(z);
  }
  return a;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  return n;
}

namespace {

// Shared minibatch-Adam trainer. loss_grad(sample_index, output, dz) returns
// the sample's loss and fills the output-layer gradient.
struct MlpTrainer {
  Mlp net;
  std::vector<std::vector<float>> mw, vw, mb, vb;
  long step = 0;

  explicit MlpTrainer(Mlp n) : net(std::move(n)) {
    for (std::size_t l = 0; l < net.w.size(); ++l) {
      mw.emplace_back(net.w[l].size(), 0.0f);
      vw.emplace_back(net.w[l].size(), 0.0f);
      mb.emplace_back(net.b[l].size(), 0.0f);
      vb.emplace_back(net.b[l].size(), 0.0f);
    }
  }

  template <typename LossGrad>
  double run_batch(const std::vector<std::vector<float>>& xs,
                   const std::vector<std::size_t>& batch, double lr,
                   LossGrad&& loss_grad) {
    const std::size_t L = net.w.size();
    std::vector<std::vector<float>> gw(L), gb(L);
    for (std::size_t l = 0; l < L; ++l) {
      gw[l].assign(net.w[l].size(), 0.0f);
      gb[l].assign(net.b[l].size(), 0.0f);
    }
    double loss = 0.0;
    std::vector<std::vector<float>> act(L + 1);
    for (std::size_t idx : batch) {
      act[0] = xs[idx];
      for (std::size_t l = 0; l < L; ++l) {
        act[l + 1].assign(net.dims[l + 1], 0.0f);
        kern::matvec(net.w[l].data(), act[l].data(), net.b[l].data(),
                     act[l + 1].data(), net.dims[l + 1], net.dims[l]);
        if (l + 1 < L)
          for (auto& v : act[l + 1]) v = v > 0.0f ? v : 0.0f;
      }
      std::vector<float> dz(net.dims.back(), 0.0f);
      loss += loss_grad(idx, act[L], dz);
      for (std::size_t l = L; l-- > 0;) {
        kern::ger_acc(gw[l].data(), dz.data(), act[l].data(), net.dims[l + 1],
                      net.dims[l]);
        for (int i = 0; i < net.dims[l + 1]; ++i) gb[l][i] += dz[i];
        if (l == 0) break;
        std::vector<float> dprev(net.dims[l], 0.0f);
        kern::matvec_t_acc(net.w[l].data(), dz.data(), dprev.data(),
                           net.dims[l + 1], net.dims[l]);
        for (int i = 0; i < net.dims[l]; ++i)
          if (act[l][i] <= 0.0f) dprev[i] = 0.0f;
        dz = std::move(dprev);
      }
    }
    const float inv = 1.0f / static_cast<float>(batch.size());
    ++step;
    const double b1t = 1.0 - std::pow(0.9, step);
    const double b2t = 1.0 - std::pow(0.999, step);
    auto adam = [&](std::vector<float>& p, std::vector<float>& m,
                    std::vector<float>& v, const std::vector<float>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] * inv;
        m[i] = static_cast<float>(0.9 * m[i] + 0.1 * gi);
        v[i] = static_cast<float>(0.999 * v[i] + 0.001 * gi * gi);
        p[i] -= static_cast<float>(lr * (m[i] / b1t) /
                                   (std::sqrt(v[i] / b2t) + 1e-8));
      }
    };
    for (std::size_t l = 0; l < L; ++l) {
      adam(net.w[l], mw[l], vw[l], gw[l]);
      adam(net.b[l], mb[l], vb[l], gb[l]);
    }
    return loss / batch.size();
  }
};

template <typename LossFn, typename LossGrad>
Mlp fit_mlp(Mlp init, const std::vector<std::vector<float>>& train_x,
            std::size_t train_n, const std::vector<std::vector<float>>& val_x,
            LossFn&& val_loss, LossGrad&& loss_grad, double lr, int max_epochs,
            int patience, std::uint64_t seed) {
  MlpTrainer trainer(std::move(init));
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  std::vector<std::size_t> order(train_n);
  std::iota(order.begin(), order.end(), 0);
  Mlp best = trainer.net;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::size_t batch_size = 32;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t o = 0; o < train_n; o += batch_size) {
      std::vector<std::size_t> batch(
          order.begin() + o,
          order.begin() + std::min(train_n, o + batch_size));
      trainer.run_batch(train_x, batch, lr, loss_grad);
    }
    double v = 0.0;
    for (std::size_t i = 0; i < val_x.size(); ++i)
      v += val_loss(i, trainer.net.forward(val_x[i]));
    v /= std::max<std::size_t>(1, val_x.size());
    if (v < best_val - 1e-9) {
      best_val = v;
      best = trainer.net;
      stale = 0;
    } else if (++stale >= patience) {
      break;
    }
  }
  return best;
}

}  // namespace

double focal_loss(double p_true, double alpha, double gamma) {
  const double p = std::max(p_true, 1e-12);
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

namespace {

// dL/dz for a 2-class focal loss on softmax(z0, z1) with true class y.
void focal_grad(const float* z, int y, double alpha, double gamma,
                float* dz, double* loss) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  const double sum = e0 + e1;
  const double p[2] = {e0 / sum, e1 / sum};
  const double py = std::max(p[y], 1e-12);
  const double u = 1.0 - py;
  *loss += focal_loss(py, alpha, gamma);
  const double dldp =
      (gamma > 0.0 ? alpha * gamma * std::pow(u, gamma - 1.0) * std::log(py)
                   : 0.0) -
      alpha * std::pow(u, gamma) / py;
  for (int j = 0; j < 2; ++j) {
    const double dpdz = py * ((j == y ? 1.0 : 0.0) - p[j]);
    dz[j] += static_cast<float>(dldp * dpdz);
  }
}

double map_sample_loss(const HiddenStateDataset& ds, std::size_t i,
                       const std::vector<float>& out,
                       const MapDecoderConfig& cfg, std::vector<float>* dz) {
  const auto& truth = ds.label_grid[i];
  const auto& mask = ds.label_mask[i];
  double loss = 0.0;
  int cells = 0;
  for (std::size_t cidx = 0; cidx < truth.size(); ++cidx) {
    if (!mask[cidx]) continue;
    const int y = truth[cidx] ? 1 : 0;
    const double alpha = y ? cfg.alpha_navigable : cfg.alpha_not_navigable;
    float local[2] = {0.0f, 0.0f};
    double l = 0.0;
    focal_grad(out.data() + 2 * cidx, y, alpha, cfg.gamma, local, &l);
    loss += l;
    ++cells;
    if (dz) {
      (*dz)[2 * cidx] += local[0];
      (*dz)[2 * cidx + 1] += local[1];
    }
  }
  if (cells > 0) {
    loss /= cells;
    if (dz)
      for (auto& v : *dz) v /= static_cast<float>(cells);
  }
  return loss;
}

}  // namespace

MapDecoder train_map_decoder(const HiddenStateDataset& train,
                             const HiddenStateDataset& validation,
                             const MapDecoderConfig& config) {
  if (train.x.empty() || train.label_grid.empty())
    throw AnalysisError("train_map_decoder: empty dataset");
  const int G =
      static_cast<int>(std::lround(std::sqrt(train.label_grid[0].size())));
  MapDecoder dec;
  dec.grid_extent = G;
  dec.net = fit_mlp(
      Mlp::make({static_cast<int>(train.x[0].size()), config.hidden1,
                 config.hidden2, G * G * 2},
                config.seed),
      train.x, train.x.size(), validation.x,
      [&](std::size_t i, const std::vector<float>& out) {
        return map_sample_loss(validation, i, out, config, nullptr);
      },
      [&](std::size_t i, const std::vector<float>& out,
          std::vector<float>& dz) {
        return map_sample_loss(train, i, out, config, &dz);
      },
      config.lr, config.max_epochs, config.patience, config.seed);
  return dec;
}

std::vector<std::uint8_t> decode_map(const MapDecoder& decoder,
                                     const std::vector<float>& hidden) {
  const auto out = decoder.net.forward(hidden);
  std::vector<std::uint8_t> pred(out.size() / 2);
  for (std::size_t c = 0; c < pred.size(); ++c)
    pred[c] = out[2 * c + 1] > out[2 * c] ? 1 : 0;
  return pred;
}

MapEvalResult eval_map_decoder(const MapDecoder& decoder,
                               const HiddenStateDataset& ds) {
  if (ds.x.empty()) throw AnalysisError("eval_map_decoder: empty dataset");
  MapEvalResult res;
  double bal = 0.0;
  for (std::size_t i = 0; i < ds.x.size(); ++i) {
    const auto pred = decode_map(decoder, ds.x[i]);
    res.iou.push_back(iou(pred, ds.label_grid[i], ds.label_mask[i]));
    bal += balanced_accuracy(pred, ds.label_grid[i], ds.label_mask[i]);
  }
  res.mean_iou =
      std::accumulate(res.iou.begin(), res.iou.end(), 0.0) / res.iou.size();
  res.mean_balanced_accuracy = bal / ds.x.size();
  return res;
}

namespace {

double huber(double d, double delta) {
  const double a = std::abs(d);
  return a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
}

double position_sample_loss(const HiddenStateDataset& ds, std::size_t i,
                            const std::vector<float>& out, double delta,
                            std::vector<float>* dz) {
  double loss = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double d = out[j] - ds.label_offset[i][j];
    loss += huber(d, delta);
    if (dz) (*dz)[j] += static_cast<float>(std::clamp(d, -delta, delta));
  }
  return loss;
}

}  // namespace

PositionDecoder train_position_decoder(const HiddenStateDataset& train,
                                       const HiddenStateDataset& validation,
                                       int k,
                                       const PositionDecoderConfig& cfg) {
  if (train.x.empty())
    throw AnalysisError("train_position_decoder: empty dataset");
  PositionDecoder dec;
  dec.k = k;
  dec.mean = train.mean;
  dec.stdev = train.stdev;
  dec.net = fit_mlp(
      Mlp::make({static_cast<int>(train.x[0].size()), cfg.hidden1, cfg.hidden2,
                 3},
                cfg.seed),
      train.x, train.x.size(), validation.x,
      [&](std::size_t i, const std::vector<float>& out) {
        return position_sample_loss(validation, i, out, cfg.huber_delta,
                                    nullptr);
      },
      [&](std::size_t i, const std::vector<float>& out,
          std::vector<float>& dz) {
        return position_sample_loss(train, i, out, cfg.huber_delta, &dz);
      },
      cfg.lr, cfg.max_epochs, cfg.patience, cfg.seed);
  return dec;
}

PositionEvalResult eval_position_decoder(const PositionDecoder& decoder,
                                         const HiddenStateDataset& ds) {
  PositionEvalResult res;
  for (std::size_t i = 0; i < ds.x.size(); ++i) {
    const auto out = decoder.net.forward(ds.x[i]);
    double err2 = 0.0, den2 = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double d = out[j] - ds.label_offset[i][j];
      err2 += d * d;
      den2 += ds.label_offset[i][j] * ds.label_offset[i][j];
    }
    const double den = std::sqrt(den2);
    if (den < 1e-9) continue;
    res.abs_error += std::sqrt(err2);
    res.rel_error += std::sqrt(err2) / den;
    res.rel_errors.push_back(std::sqrt(err2) / den);
    ++res.records;
  }
  if (res.records > 0) {
    res.abs_error /= res.records;
    res.rel_error /= res.records;
  }
  return res;
}

// ---------------------------------------------------------------- excursions

std::vector<ExcursionInterval> detect_excursions(
    const Trajectory& traj, const ExcursionConfig& config) {
  const int n = static_cast<int>(traj.steps.size());
  std::vector<ExcursionInterval> merged;
  if (n < config.min_steps) return merged;
  // prefix path length over step positions
  std::vector<double> pref(n, 0.0);
  for (int i = 1; i < n; ++i)
    pref[i] = pref[i - 1] + std::hypot(traj.steps[i].x - traj.steps[i - 1].x,
                                       traj.steps[i].y - traj.steps[i - 1].y);
  std::vector<std::pair<int, int>> cand;
  for (int a = 0; a < n; ++a) {
    for (int b = a + config.min_steps; b < n; ++b) {
      if (pref[b] - pref[a] < config.min_loop_len) continue;
      if (std::hypot(traj.steps[b].x - traj.steps[a].x,
                     traj.steps[b].y - traj.steps[a].y) > config.closure_dist)
        continue;
      cand.emplace_back(a, b);
    }
  }
  std::sort(cand.begin(), cand.end());
  for (const auto& [a, b] : cand) {
    if (!merged.empty() && a <= merged.back().b)
      merged.back().b = std::max(merged.back().b, b);
    else
      merged.push_back({a, b, 0});
  }
  for (auto& iv : merged) {
    const int len = iv.b - iv.a + 1;
    const int exit_len = static_cast<int>(std::ceil(0.1 * len));
    iv.exit_start = iv.b - exit_len + 1;
  }
  return merged;
}

const char* to_string(ExcursionClass c) {
  switch (c) {
    case ExcursionClass::NonExcursion: return "non_excursion";
    case ExcursionClass::Excursion: return "excursion";
    case ExcursionClass::Exit: return "exit";
  }
  return "?";
}

ExcursionClass classify_step(const std::vector<ExcursionInterval>& intervals,
                             int t) {
  for (const auto& iv : intervals) {
    if (t < iv.a || t > iv.b) continue;
    return t >= iv.exit_start ? ExcursionClass::Exit : ExcursionClass::Excursion;
  }
  return ExcursionClass::NonExcursion;
}

std::vector<ExcursionErrorRow> excursion_calibrated_eval(
    const std::vector<PositionDecoder>& decoders,
    const std::vector<Trajectory>& trajectories,
    const ExcursionConfig& config) {
  std::vector<ExcursionErrorRow> rows;
  for (const auto& dec : decoders) {
    double err[3] = {0, 0, 0};
    int cnt[3] = {0, 0, 0};
    for (const auto& traj : trajectories) {
      if (traj.hidden.empty()) continue;
      const auto intervals = detect_excursions(traj, config);
      const auto& ep = traj.episode;
      const double c = std::cos(-ep.start.theta),
                   s = std::sin(-ep.start.theta);
      const int T = static_cast<int>(traj.steps.size()) - 1;
      for (int t = 0; t <= T && t < static_cast<int>(traj.hidden.size());
           ++t) {
        const int u = t + dec.k;
        if (u < 0 || u > T) continue;
        const ExcursionClass cls = classify_step(intervals, t);
        if (cls == ExcursionClass::NonExcursion) {
          if (classify_step(intervals, u) != ExcursionClass::NonExcursion)
            continue;
          const int lo = std::min(t, u), hi = std::max(t, u);
          bool spans = false;
          for (const auto& iv : intervals)
            if (iv.a <= hi && iv.b >= lo) {
              spans = true;
              break;
            }
          if (spans) continue;
        }
        const double dx = traj.steps[u].x - traj.steps[t].x;
        const double dy = traj.steps[u].y - traj.steps[t].y;
        const double tx = c * dx - s * dy, ty = s * dx + c * dy;
        const double den = std::hypot(tx, ty);
        if (den < 1e-9) continue;
        const auto out =
            dec.net.forward(normalized(traj.hidden[t], dec.mean, dec.stdev));
        const double ex = out[0] - tx, ey = out[1] - ty,
                     ez = out[2] - 0.0;
        err[static_cast<int>(cls)] +=
            std::sqrt(ex * ex + ey * ey + ez * ez) / den;
        ++cnt[static_cast<int>(cls)];
      }
    }
    for (int cls = 0; cls < 3; ++cls) {
      if (cnt[cls] == 0) continue;  // empty category: row omitted
      rows.push_back({dec.k, static_cast<ExcursionClass>(cls), cnt[cls],
                      err[cls] / cnt[cls]});
    }
  }
  return rows;
}

// ---------------------------------------------------------------- memlen

std::vector<MemlenPoint> memlen_eval(const PolicyConfig& cfg,
                                     const std::vector<float>& params,
                                     const std::vector<EpisodeSample>& episodes,
                                     const std::vector<int>& budgets,
                                     std::uint64_t seed) {
  std::vector<MemlenPoint> curve;
  for (int k : budgets) {
    EvalOptions opts;
    opts.memory_budget = k;
    opts.seed = seed;
    const auto res = evaluate(cfg, params, episodes, opts);
    MemlenPoint pt;
    pt.budget = k;
    std::vector<double> succ;
    for (const auto& r : res) {
      succ.push_back(r.success ? 1.0 : 0.0);
      pt.success += r.success ? 1.0 : 0.0;
      pt.spl += r.spl;
    }
    pt.success /= res.size();
    pt.spl /= res.size();
    const auto ci = bootstrap_ci(succ, 0.95, 2000, seed + k);
    pt.success_lo = ci.first;
    pt.success_hi = ci.second;
    curve.push_back(pt);
  }
  return curve;
}

std::string memlen_csv(const std::vector<MemlenPoint>& curve) {
  std::string out = "budget,success,spl,success_lo,success_hi\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", p.budget,
                  p.success, p.spl, p.success_lo, p.success_hi);
    out += buf;
  }
  return out;
}

}  // namespace navlab
