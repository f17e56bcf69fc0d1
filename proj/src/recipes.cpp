#include "navlab/recipes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "navlab/bug.hpp"
#include "navlab/metrics.hpp"
#include "navlab/probe.hpp"
#include "navlab/render.hpp"
#include "navlab/tsne.hpp"

namespace navlab {

namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------ config JSON

void reject_unknown(const nlohmann::json& j,
                    const std::vector<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw RecipeError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["worldgen"] = {{"train_maps", c.train_maps},
                   {"test_maps", c.test_maps},
                   {"map_width", c.map_width},
                   {"map_height", c.map_height},
                   {"maze_density", c.maze_density}};
  j["policy"] = {{"embed_dim", c.policy.embed_dim},
                 {"lstm_layers", c.policy.lstm_layers},
                 {"lstm_hidden", c.policy.lstm_hidden}};
  j["train"] = {{"gamma", c.train.gamma},
                {"gae_tau", c.train.gae_tau},
                {"clip", c.train.clip},
                {"lr", c.train.lr},
                {"slack", c.train.slack},
                {"success_bonus", c.train.success_bonus},
                {"rollout_len", c.train.rollout_len},
                {"num_envs", c.train.num_envs},
                {"ppo_epochs", c.train.ppo_epochs},
                {"minibatches", c.train.minibatches},
                {"value_coef", c.train.value_coef},
                {"entropy_coef", c.train.entropy_coef},
                {"max_grad_norm", c.train.max_grad_norm},
                {"max_updates", c.train.max_updates},
                {"memory_budget", c.train.memory_budget},
                {"max_steps", c.train_max_steps},
                {"eval_max_steps", c.eval_max_steps},
                {"bug_max_steps", c.bug_max_steps},
                {"eval_episodes", c.eval_episodes},
                {"eval_min_geo", c.eval_min_geo},
                {"eval_max_geo", c.eval_max_geo},
                {"eval_min_ratio", c.eval_min_ratio},
                {"curriculum_min_geo", c.curriculum_min_geo},
                {"curriculum_start_geo", c.curriculum_start_geo},
                {"curriculum_gate", c.curriculum_gate},
                {"curriculum_growth", c.curriculum_growth}};
  j["probe"] = {{"pairs", c.probe_pairs},
                {"pool_size", c.probe_pool_size},
                {"updates", c.probe_updates},
                {"min_geo", c.probe_min_geo},
                {"max_geo", c.probe_max_geo},
                {"min_ratio", c.probe_min_ratio}};
  j["analysis"] = {{"map_grid_extent", c.map_dataset.grid_extent},
                   {"map_grid_res", c.map_dataset.grid_res},
                   {"map_mask_radius", c.map_dataset.mask_radius},
                   {"map_samples_per_episode", c.map_dataset.samples_per_episode},
                   {"position_ks", c.position_ks},
                   {"memlen_budgets", c.memlen_budgets},
                   {"dataset_episodes", c.dataset_episodes},
                   {"tsne_perplexity", c.tsne_perplexity},
                   {"tsne_iters", c.tsne_iters}};
  j["seeds"] = {{"seed", c.seed}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  reject_unknown(
      j, {"worldgen", "policy", "train", "probe", "analysis", "seeds"},
      "root");
  ExperimentConfig c;
  if (j.contains("worldgen")) {
    const auto& w = j.at("worldgen");
    reject_unknown(w, {"train_maps", "test_maps", "map_width", "map_height",
                       "maze_density"},
                   "worldgen");
    maybe(w, "train_maps", c.train_maps);
    maybe(w, "test_maps", c.test_maps);
    maybe(w, "map_width", c.map_width);
    maybe(w, "map_height", c.map_height);
    maybe(w, "maze_density", c.maze_density);
  }
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    reject_unknown(p, {"embed_dim", "lstm_layers", "lstm_hidden"}, "policy");
    maybe(p, "embed_dim", c.policy.embed_dim);
    maybe(p, "lstm_layers", c.policy.lstm_layers);
    maybe(p, "lstm_hidden", c.policy.lstm_hidden);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t,
                   {"gamma", "gae_tau", "clip", "lr", "slack", "success_bonus",
                    "rollout_len", "num_envs", "ppo_epochs", "minibatches",
                    "value_coef", "entropy_coef", "max_grad_norm",
                    "max_updates", "memory_budget", "max_steps",
                    "eval_max_steps", "bug_max_steps", "eval_episodes",
                    "eval_min_geo", "eval_max_geo", "eval_min_ratio",
                    "curriculum_min_geo", "curriculum_start_geo",
                    "curriculum_gate", "curriculum_growth"},
                   "train");
    maybe(t, "gamma", c.train.gamma);
    maybe(t, "gae_tau", c.train.gae_tau);
    maybe(t, "clip", c.train.clip);
    maybe(t, "lr", c.train.lr);
    maybe(t, "slack", c.train.slack);
    maybe(t, "success_bonus", c.train.success_bonus);
    maybe(t, "rollout_len", c.train.rollout_len);
    maybe(t, "num_envs", c.train.num_envs);
    maybe(t, "ppo_epochs", c.train.ppo_epochs);
    maybe(t, "minibatches", c.train.minibatches);
    maybe(t, "value_coef", c.train.value_coef);
    maybe(t, "entropy_coef", c.train.entropy_coef);
    maybe(t, "max_grad_norm", c.train.max_grad_norm);
    maybe(t, "max_updates", c.train.max_updates);
    maybe(t, "memory_budget", c.train.memory_budget);
    maybe(t, "max_steps", c.train_max_steps);
    maybe(t, "eval_max_steps", c.eval_max_steps);
    maybe(t, "bug_max_steps", c.bug_max_steps);
    maybe(t, "eval_episodes", c.eval_episodes);
    maybe(t, "eval_min_geo", c.eval_min_geo);
    maybe(t, "eval_max_geo", c.eval_max_geo);
    maybe(t, "eval_min_ratio", c.eval_min_ratio);
    maybe(t, "curriculum_min_geo", c.curriculum_min_geo);
    maybe(t, "curriculum_start_geo", c.curriculum_start_geo);
    maybe(t, "curriculum_gate", c.curriculum_gate);
    maybe(t, "curriculum_growth", c.curriculum_growth);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    reject_unknown(
        p, {"pairs", "pool_size", "updates", "min_geo", "max_geo",
            "min_ratio"},
        "probe");
    maybe(p, "pairs", c.probe_pairs);
    maybe(p, "pool_size", c.probe_pool_size);
    maybe(p, "updates", c.probe_updates);
    maybe(p, "min_geo", c.probe_min_geo);
    maybe(p, "max_geo", c.probe_max_geo);
    maybe(p, "min_ratio", c.probe_min_ratio);
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    reject_unknown(a,
                   {"map_grid_extent", "map_grid_res", "map_mask_radius",
                    "map_samples_per_episode", "position_ks",
                    "memlen_budgets", "dataset_episodes", "tsne_perplexity",
                    "tsne_iters"},
                   "analysis");
    maybe(a, "map_grid_extent", c.map_dataset.grid_extent);
    maybe(a, "map_grid_res", c.map_dataset.grid_res);
    maybe(a, "map_mask_radius", c.map_dataset.mask_radius);
    maybe(a, "map_samples_per_episode", c.map_dataset.samples_per_episode);
    maybe(a, "position_ks", c.position_ks);
    maybe(a, "memlen_budgets", c.memlen_budgets);
    maybe(a, "dataset_episodes", c.dataset_episodes);
    maybe(a, "tsne_perplexity", c.tsne_perplexity);
    maybe(a, "tsne_iters", c.tsne_iters);
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    reject_unknown(s, {"seed"}, "seeds");
    maybe(s, "seed", c.seed);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RecipeError("load_config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw RecipeError(std::string("load_config: parse error: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------- world & agent

std::vector<OccupancyGrid> make_train_maps(const ExperimentConfig& cfg) {
  std::vector<OccupancyGrid> maps;
  for (int i = 0; i < cfg.train_maps; ++i)
    maps.push_back(generate_maze(cfg.seed * 1000 + i, cfg.map_width,
                                 cfg.map_height, cfg.maze_density));
  return maps;
}

std::vector<OccupancyGrid> make_test_maps(const ExperimentConfig& cfg) {
  std::vector<OccupancyGrid> maps;
  for (int i = 0; i < cfg.test_maps; ++i)
    maps.push_back(generate_maze(cfg.seed * 1000 + 500000 + i, cfg.map_width,
                                 cfg.map_height, cfg.maze_density));
  return maps;
}

namespace {

EpisodeConstraints eval_constraints(const ExperimentConfig& cfg) {
  EpisodeConstraints ec;
  ec.min_geo = cfg.eval_min_geo;
  ec.max_geo = cfg.eval_max_geo;
  ec.min_ratio = cfg.eval_min_ratio;
  return ec;
}

std::vector<EpisodeSample> sample_eval_episodes(
    const std::vector<OccupancyGrid>& maps, int count, int max_steps,
    std::uint64_t seed, const EpisodeConstraints& ec = {},
    CoordMode mode = CoordMode::Episodic) {
  std::mt19937_64 rng(seed);
  std::vector<EpisodeSample> out;
  for (int i = 0; i < count; ++i) {
    EpisodeSample s;
    s.grid = &maps[i % maps.size()];
    s.episode = sample_episode(*s.grid, rng, ec, mode);
    s.episode.max_steps = max_steps;
    out.push_back(std::move(s));
  }
  return out;
}

// Artifact writer: stamps the config hash into CSVs and SVGs.
struct ArtifactDir {
  fs::path dir;
  std::string hash;
  std::vector<std::string> names;

  void write(const std::string& name, const std::string& content) {
    std::string body = content;
    if (name.size() > 4 && name.rfind(".csv") == name.size() - 4)
      body = "# config_hash=" + hash + "\n" + content;
    else if (name.size() > 4 && name.rfind(".svg") == name.size() - 4)
      body = "<!-- config_hash=" + hash + " -->\n" + content;
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw RecipeError("cannot write " + (dir / name).string());
    out << body;
    names.push_back(name);
  }
};

// Geodesic-range curriculum training shared by the multi-map agent and the
// single-map MDP control: goals start close (blind agents never get off the
// ground on the full goal distribution at this scale) and the admissible
// range grows whenever the agent clears the gate success rate at the current
// difficulty. Writes metrics.csv under dir.
Checkpoint train_curriculum(const ExperimentConfig& cfg,
                            std::shared_ptr<std::vector<OccupancyGrid>> maps,
                            CoordMode mode,
                            const std::vector<EpisodeSample>& eval_eps,
                            const std::string& dir) {
  auto cons = std::make_shared<EpisodeConstraints>();
  cons->min_geo = cfg.curriculum_min_geo;
  cons->max_geo = cfg.curriculum_start_geo;
  cons->min_ratio = 1.0;
  const int max_steps = cfg.train_max_steps;
  EpisodeProvider provider = [maps, cons, max_steps,
                              mode](std::mt19937_64& rng) {
    EpisodeSample s;
    const auto& ms = *maps;
    s.grid = &ms[std::uniform_int_distribution<std::size_t>(
        0, ms.size() - 1)(rng)];
    s.episode = sample_episode(*s.grid, rng, *cons, mode);
    s.episode.max_steps = max_steps;
    return s;
  };
  Trainer trainer(cfg.policy, cfg.train, provider);
  std::mt19937_64 gate_rng(cfg.seed + 23);
  std::string metrics =
      "update,env_steps,success,spl,reward,entropy,clip_frac\n";
  char line[160];
  const int eval_every = std::max(1, cfg.train.eval_every);
  for (int u = 1; u <= cfg.train.max_updates; ++u) {
    const auto stats = trainer.step();
    if (cfg.curriculum_gate > 0.0 && u % 25 == 0 &&
        cons->max_geo < cfg.eval_max_geo) {
      std::vector<EpisodeSample> gate_eps;
      for (int i = 0; i < 30; ++i) {
        EpisodeSample s;
        s.grid = &(*maps)[i % maps->size()];
        s.episode = sample_episode(*s.grid, gate_rng, *cons, mode);
        s.episode.max_steps = cfg.train_max_steps;
        gate_eps.push_back(std::move(s));
      }
      double gate = 0.0;
      for (const auto& r :
           evaluate(cfg.policy, trainer.params(), gate_eps, {}))
        gate += r.success;
      if (gate / gate_eps.size() >= cfg.curriculum_gate)
        cons->max_geo =
            std::min(cfg.eval_max_geo, cons->max_geo * cfg.curriculum_growth);
    }
    if (u % eval_every == 0 || u == cfg.train.max_updates) {
      double succ = 0, spl_sum = 0, rew = 0;
      for (const auto& r :
           evaluate(cfg.policy, trainer.params(), eval_eps, {})) {
        succ += r.success;
        spl_sum += r.spl;
        rew += r.reward_sum;
      }
      const double n = static_cast<double>(eval_eps.size());
      std::snprintf(line, sizeof(line), "%d,%llu,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                    u, (unsigned long long)trainer.env_steps(), succ / n,
                    spl_sum / n, rew / n, stats.entropy, stats.clip_frac);
      metrics += line;
    }
  }
  {
    std::ofstream out(fs::path(dir) / "metrics.csv");
    out << metrics;
  }
  Checkpoint ckpt;
  ckpt.config = cfg.policy;
  ckpt.seed = cfg.train.seed;
  ckpt.env_steps = trainer.env_steps();
  ckpt.params = trainer.params();
  return ckpt;
}

RenderPath trajectory_path(const Trajectory& traj, const std::string& color) {
  RenderPath p;
  p.color = color;
  for (const auto& st : traj.steps) p.points.push_back({st.x, st.y});
  return p;
}

RenderSpec episode_markers(const Episode& ep) {
  RenderSpec spec;
  spec.has_markers = true;
  spec.start_x = ep.start.x;
  spec.start_y = ep.start.y;
  spec.goal_x = ep.goal_x;
  spec.goal_y = ep.goal_y;
  return spec;
}

}  // namespace

Checkpoint ensure_agent(const ExperimentConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path path = fs::path(dir) / "agent.ckpt";
  if (fs::exists(path)) {
    Checkpoint ckpt = load_checkpoint(path.string());
    if (!(ckpt.config == cfg.policy))
      throw RecipeError("ensure_agent: checkpoint architecture mismatch at " +
                        path.string());
    return ckpt;
  }
  if (cfg.train.max_updates <= 0)
    throw RecipeError(
        "ensure_agent: no checkpoint at " + path.string() +
        " and train.max_updates is 0; provide agent.ckpt or a training "
        "budget");
  auto maps = std::make_shared<std::vector<OccupancyGrid>>(
      make_train_maps(cfg));
  auto test_maps = std::make_shared<std::vector<OccupancyGrid>>(
      make_test_maps(cfg));
  const auto eval_eps = sample_eval_episodes(
      *test_maps, std::min(cfg.eval_episodes, 20), cfg.eval_max_steps,
      cfg.seed + 17, eval_constraints(cfg));

  if (cfg.curriculum_gate <= 0.0) {
    auto base = make_map_provider(maps.get(), {}, CoordMode::Episodic,
                                  cfg.train_max_steps);
    EpisodeProvider provider = [maps, base](std::mt19937_64& rng) {
      return base(rng);
    };
    auto result = train_loop(cfg.policy, cfg.train, provider, eval_eps, dir);
    result.checkpoint.seed = cfg.train.seed;
    save_checkpoint(path.string(), result.checkpoint);
    return result.checkpoint;
  }

  Checkpoint ckpt =
      train_curriculum(cfg, maps, CoordMode::Episodic, eval_eps, dir);
  save_checkpoint(path.string(), ckpt);
  return ckpt;
}

// ----------------------------------------------------------------- recipes

namespace {

RecipeResult finish(ArtifactDir& art, const std::string& name,
                    const ExperimentConfig& cfg) {
  nlohmann::json manifest;
  manifest["recipe"] = name;
  manifest["config_hash"] = art.hash;
  manifest["seed"] = cfg.seed;
  std::sort(art.names.begin(), art.names.end());
  manifest["artifacts"] = art.names;
  manifest["generated_at"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  std::ofstream out(art.dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  RecipeResult res;
  res.dir = art.dir.string();
  res.artifacts = art.names;
  return res;
}

bool already_done(const fs::path& dir, const std::string& name,
                  const std::string& hash, RecipeResult* res) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) return false;
  std::ifstream in(mpath);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  if (manifest.value("recipe", std::string()) != name) return false;
  if (manifest.value("config_hash", std::string()) != hash) return false;
  std::vector<std::string> artifacts =
      manifest.value("artifacts", std::vector<std::string>{});
  for (const auto& a : artifacts)
    if (!fs::exists(dir / a)) return false;
  res->dir = dir.string();
  res->artifacts = artifacts;
  res->resumed = true;
  return true;
}

RecipeResult recipe_bug(const ExperimentConfig& cfg, ArtifactDir& art) {
  const auto maps = make_test_maps(cfg);
  std::vector<const OccupancyGrid*> grids;
  std::vector<Episode> episodes;
  std::mt19937_64 rng(cfg.seed + 41);
  for (int i = 0; i < cfg.eval_episodes; ++i) {
    const auto& g = maps[i % maps.size()];
    Episode ep = sample_episode(g, rng, eval_constraints(cfg));
    ep.max_steps = cfg.bug_max_steps;
    grids.push_back(&g);
    episodes.push_back(ep);
  }
  art.write("bug_comparison.csv",
            bug_benchmark(grids, episodes,
                          {BugVariant::Left, BugVariant::Right,
                           BugVariant::Clairvoyant},
                          cfg.seed));
  const auto clair = bug_run(*grids[0], episodes[0], BugVariant::Clairvoyant);
  const auto left = bug_run(*grids[0], episodes[0], BugVariant::Left);
  art.write("fig1_trajectories.svg",
            render_trajectory(*grids[0],
                              {trajectory_path(left, "#ff7f0e"),
                               trajectory_path(clair, "#1f77b4")},
                              episode_markers(episodes[0])));
  return finish(art, "fig1_bug_comparison", cfg);
}

RecipeResult recipe_memlen(const ExperimentConfig& cfg, ArtifactDir& art) {
  const auto ckpt = ensure_agent(cfg, art.dir.string());
  const auto maps = make_test_maps(cfg);
  const auto eps = sample_eval_episodes(maps, cfg.eval_episodes,
                                        cfg.eval_max_steps, cfg.seed + 53,
                                        eval_constraints(cfg));
  const auto curve = memlen_eval(cfg.policy, ckpt.params, eps,
                                 cfg.memlen_budgets, cfg.seed);
  art.write("memlen.csv", memlen_csv(curve));
  CurveSeries s;
  s.name = "success";
  for (const auto& pt : curve) {
    s.x.push_back(pt.budget == 0 ? cfg.eval_max_steps : pt.budget);
    s.y.push_back(pt.success);
    s.y_lo.push_back(pt.success_lo);
    s.y_hi.push_back(pt.success_hi);
  }
  art.write("memlen.svg", render_curve({s}, "memory budget (steps)",
                                       "success"));
  return finish(art, "fig2_memlen", cfg);
}

RecipeResult recipe_probe(const ExperimentConfig& cfg, ArtifactDir& art) {
  const auto test_maps = make_test_maps(cfg);
  EpisodeConstraints ec;
  ec.min_geo = cfg.probe_min_geo;
  ec.max_geo = cfg.probe_max_geo;
  ec.min_ratio = cfg.probe_min_ratio;

  const std::vector<ProbeCondition> conditions{
      ProbeCondition::TrainedAgentMemory, ProbeCondition::UntrainedAgentMemory,
      ProbeCondition::AllZeroMemory};
  const std::vector<ProbeTask> tasks{ProbeTask::StoT, ProbeTask::TtoS};

  std::vector<ProbePairParams> pairs;
  for (int p = 0; p < cfg.probe_pairs; ++p) {
    ExperimentConfig pc = cfg;
    pc.train.seed = cfg.train.seed + p;
    const auto ckpt =
        ensure_agent(pc, (art.dir / ("pair" + std::to_string(p))).string());
    ProbePairParams pair;
    pair.agent = ckpt.params;
    std::mt19937_64 rng(cfg.seed + 9000 + p);
    pair.untrained = init_params(rng, cfg.policy);
    const auto pool = build_probe_pool(
        cfg.policy, pair.agent, pair.untrained, &test_maps, ec,
        cfg.eval_max_steps, cfg.probe_pool_size, cfg.probe_pool_size * 20,
        cfg.seed + 100 + p);
    TrainConfig ptc = cfg.train;
    ptc.seed = cfg.seed + 300 + p;
    for (std::size_t ci = 0; ci < conditions.size(); ++ci)
      for (std::size_t ti = 0; ti < tasks.size(); ++ti)
        pair.probe[ci][ti] = train_probe(cfg.policy, ptc, pool,
                                         conditions[ci], tasks[ti],
                                         cfg.probe_updates, &pair.agent);
    pairs.push_back(std::move(pair));
  }

  const auto eval_eps = sample_eval_episodes(
      test_maps, cfg.eval_episodes, cfg.eval_max_steps, cfg.seed + 61, ec);
  const auto report = run_probe_suite(cfg.policy, pairs, conditions, tasks,
                                      eval_eps, 10000, cfg.seed);
  art.write("probe_report.csv", probe_report_csv(report));
  if (!report.paired.empty()) {
    const auto& pe = report.paired.front();
    const OccupancyGrid* grid = eval_eps.front().grid;
    art.write("fig3_transplant.svg",
              render_trajectory(*grid,
                                {trajectory_path(pe.agent, "#1f77b4"),
                                 trajectory_path(pe.probe, "#2ca02c")},
                                episode_markers(pe.agent.episode)));
  }
  return finish(art, "fig3_probe", cfg);
}

RecipeResult recipe_maps(const ExperimentConfig& cfg, ArtifactDir& art) {
  const auto ckpt = ensure_agent(cfg, art.dir.string());
  std::mt19937_64 rng(cfg.seed + 8100);
  const auto untrained = init_params(rng, cfg.policy);

  const auto maps = make_test_maps(cfg);
  // map-disjoint decoder splits: first 60% of maps train, 20% val, 20% eval
  const int n_maps = static_cast<int>(maps.size());
  auto map_split = [&](int idx) {
    if (idx < n_maps * 3 / 5) return 0;
    if (idx < n_maps * 4 / 5) return 1;
    return 2;
  };
  EvalOptions ro;
  ro.record_hidden = true;
  std::vector<Trajectory> trajs[3];
  std::vector<const OccupancyGrid*> grids[3];
  std::mt19937_64 ep_rng(cfg.seed + 8200);
  for (int i = 0; i < cfg.dataset_episodes; ++i) {
    const int m = i % n_maps;
    EpisodeSample s;
    s.grid = &maps[m];
    s.episode = sample_episode(maps[m], ep_rng, eval_constraints(cfg));
    s.episode.max_steps = cfg.eval_max_steps;
    auto res = run_policy_episode(cfg.policy, ckpt.params, s, ro);
    const int split = map_split(m);
    trajs[split].push_back(std::move(res.trajectory));
    grids[split].push_back(s.grid);
  }

  auto build = [&](const std::vector<float>& params, int split) {
    std::vector<Trajectory> swapped = trajs[split];
    if (&params != &ckpt.params)
      for (std::size_t i = 0; i < swapped.size(); ++i)
        swapped[i].hidden = replay_hidden(cfg.policy, params,
                                          *grids[split][i], swapped[i]);
    return map_dataset_from_trajectories(swapped, grids[split],
                                         cfg.map_dataset);
  };
  MapDecoderConfig mdc;
  mdc.seed = cfg.seed;
  std::vector<double> iou_trained, iou_untrained;
  for (int which = 0; which < 2; ++which) {
    const auto& params = which == 0 ? ckpt.params : untrained;
    auto train = build(params, 0);
    auto val = build(params, 1);
    auto eval = build(params, 2);
    zscore_fit(train);
    zscore_apply(val, train.mean, train.stdev);
    zscore_apply(eval, train.mean, train.stdev);
    const auto dec = train_map_decoder(train, val, mdc);
    const auto res = eval_map_decoder(dec, eval);
    (which == 0 ? iou_trained : iou_untrained) = res.iou;
    if (which == 0 && !eval.x.empty())
      art.write("fig4_map_pair.svg",
                render_map_pair(decode_map(dec, eval.x[0]),
                                eval.label_grid[0], eval.label_mask[0],
                                cfg.map_dataset.grid_extent));
  }
  std::string csv = "record,trained_iou,untrained_iou\n";
  char buf[96];
  const std::size_t n = std::min(iou_trained.size(), iou_untrained.size());
  double mt = 0.0, mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i, iou_trained[i],
                  iou_untrained[i]);
    csv += buf;
    mt += iou_trained[i];
    mu += iou_untrained[i];
  }
  art.write("map_iou.csv", csv);
  const double p = wilcoxon_signed_rank(
      std::vector<double>(iou_trained.begin(), iou_trained.begin() + n),
      std::vector<double>(iou_untrained.begin(), iou_untrained.begin() + n),
      Alternative::Greater);
  std::snprintf(buf, sizeof(buf),
                "mean_trained_iou,mean_untrained_iou,wilcoxon_p\n%.6f,%.6f,"
                "%.6g\n",
                mt / std::max<std::size_t>(1, n),
                mu / std::max<std::size_t>(1, n), p);
  art.write("map_summary.csv", buf);
  return finish(art, "fig4_maps", cfg);
}

RecipeResult recipe_excursions(const ExperimentConfig& cfg,
                               ArtifactDir& art) {
  const auto ckpt = ensure_agent(cfg, art.dir.string());
  const auto maps = make_test_maps(cfg);
  const auto eps = sample_eval_episodes(maps, cfg.dataset_episodes,
                                        cfg.eval_max_steps, cfg.seed + 71,
                                        eval_constraints(cfg));
  EvalOptions ro;
  ro.record_hidden = true;
  std::vector<Trajectory> trajs;
  for (const auto& s : eps)
    trajs.push_back(run_policy_episode(cfg.policy, ckpt.params, s, ro)
                        .trajectory);
  const std::size_t n_train = trajs.size() * 3 / 5;
  const std::size_t n_val = trajs.size() / 5;
  std::vector<Trajectory> train_t(trajs.begin(), trajs.begin() + n_train);
  std::vector<Trajectory> val_t(trajs.begin() + n_train,
                                trajs.begin() + n_train + n_val);
  std::vector<Trajectory> eval_t(trajs.begin() + n_train + n_val,
                                 trajs.end());

  std::string csv =
      "k,records,trained_rel,trained_lo,trained_hi,chance_rel,chance_lo,"
      "chance_hi\n";
  char buf[160];
  std::vector<PositionDecoder> decoders;
  PositionDecoderConfig pdc;
  pdc.seed = cfg.seed;
  for (int k : cfg.position_ks) {
    auto train = position_dataset_from_trajectories(train_t, k);
    auto val = position_dataset_from_trajectories(val_t, k);
    auto eval = position_dataset_from_trajectories(eval_t, k);
    if (train.x.empty() || val.x.empty() || eval.x.empty()) continue;
    zscore_fit(train);
    zscore_apply(val, train.mean, train.stdev);
    zscore_apply(eval, train.mean, train.stdev);
    const auto dec = train_position_decoder(train, val, k, pdc);
    decoders.push_back(dec);
    const auto res = eval_position_decoder(dec, eval);
    const auto chance = eval_position_decoder(
        dec, shuffle_hidden_across_episodes(eval, cfg.seed + k * 31));
    const auto ci = bootstrap_ci(res.rel_errors, 0.95, 2000, cfg.seed);
    const auto cci = bootstrap_ci(chance.rel_errors, 0.95, 2000, cfg.seed);
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", k, res.records,
                  res.rel_error, ci.first, ci.second, chance.rel_error,
                  cci.first, cci.second);
    csv += buf;
  }
  art.write("position_decoding.csv", csv);

  csv = "k,class,pairs,rel_error\n";
  for (const auto& row : excursion_calibrated_eval(decoders, eval_t)) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.6f\n", row.k,
                  to_string(row.cls), row.pairs, row.rel_error);
    csv += buf;
  }
  art.write("excursion_errors.csv", csv);

  // render the longest evaluated trajectory with its excursions highlighted
  std::size_t longest = 0;
  for (std::size_t i = 1; i < eval_t.size(); ++i)
    if (eval_t[i].steps.size() > eval_t[longest].steps.size()) longest = i;
  if (!eval_t.empty()) {
    RenderPath path = trajectory_path(eval_t[longest], "#1f77b4");
    for (const auto& iv : detect_excursions(eval_t[longest]))
      path.highlights.push_back({iv.a, iv.b});
    const OccupancyGrid* grid = eps[n_train + n_val + longest].grid;
    art.write("fig5_excursions.svg",
              render_trajectory(*grid, {path},
                                episode_markers(eval_t[longest].episode)));
  }
  return finish(art, "fig5_excursions", cfg);
}

RecipeResult recipe_mdp(const ExperimentConfig& cfg, ArtifactDir& art) {
  // single-map training in the global frame
  auto home = std::make_shared<std::vector<OccupancyGrid>>();
  home->push_back(generate_maze(cfg.seed * 1000, cfg.map_width,
                                cfg.map_height, cfg.maze_density));
  const fs::path path = art.dir / "agent.ckpt";
  Checkpoint ckpt;
  if (fs::exists(path)) {
    ckpt = load_checkpoint(path.string());
  } else {
    std::mt19937_64 rng(cfg.seed + 5);
    std::vector<EpisodeSample> eval_eps;
    for (int i = 0; i < 10; ++i) {
      EpisodeSample s;
      s.grid = &(*home)[0];
      s.episode = sample_episode((*home)[0], rng, eval_constraints(cfg),
                                 CoordMode::Global);
      s.episode.max_steps = cfg.eval_max_steps;
      eval_eps.push_back(s);
    }
    ckpt = train_curriculum(cfg, home, CoordMode::Global, eval_eps,
                            art.dir.string());
    save_checkpoint(path.string(), ckpt);
  }

  std::mt19937_64 rng(cfg.seed + 7);
  std::vector<EpisodeSample> train_eps;
  for (int i = 0; i < cfg.eval_episodes; ++i) {
    EpisodeSample s;
    s.grid = &(*home)[0];
    s.episode = sample_episode((*home)[0], rng, eval_constraints(cfg),
                               CoordMode::Global);
    s.episode.max_steps = cfg.eval_max_steps;
    train_eps.push_back(s);
  }
  const auto unseen_maps = make_test_maps(cfg);
  const auto unseen = sample_eval_episodes(unseen_maps, cfg.eval_episodes,
                                           cfg.eval_max_steps, cfg.seed + 9,
                                           eval_constraints(cfg),
                                           CoordMode::Global);
  EvalOptions ro;
  ro.record_hidden = false;
  double tr_succ = 0, tr_spl = 0, un_succ = 0;
  Trajectory sample_traj;
  for (const auto& s : train_eps) {
    auto res = run_policy_episode(cfg.policy, ckpt.params, s, ro);
    tr_succ += res.success;
    tr_spl += res.spl;
    if (sample_traj.steps.empty() && res.success)
      sample_traj = res.trajectory;
  }
  for (const auto& s : unseen)
    un_succ += run_policy_episode(cfg.policy, ckpt.params, s, ro).success;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "train_success,train_spl,unseen_success\n%.6f,%.6f,%.6f\n",
                tr_succ / train_eps.size(), tr_spl / train_eps.size(),
                un_succ / unseen.size());
  art.write("mdp_control.csv", buf);
  if (!sample_traj.steps.empty())
    art.write("figA1_trajectory.svg",
              render_trajectory(home[0],
                                {trajectory_path(sample_traj, "#1f77b4")},
                                episode_markers(sample_traj.episode)));
  return finish(art, "tableA_mdp_control", cfg);
}

}  // namespace

RecipeResult run_recipe(const std::string& name, const ExperimentConfig& cfg,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  ArtifactDir art;
  art.dir = out_dir;
  art.hash = config_hash(cfg);
  RecipeResult done;
  if (already_done(art.dir, name, art.hash, &done)) return done;

  if (name == "fig1_bug_comparison") return recipe_bug(cfg, art);
  if (name == "fig2_memlen") return recipe_memlen(cfg, art);
  if (name == "fig3_probe") return recipe_probe(cfg, art);
  if (name == "fig4_maps") return recipe_maps(cfg, art);
  if (name == "fig5_excursions") return recipe_excursions(cfg, art);
  if (name == "tableA_mdp_control") return recipe_mdp(cfg, art);
  throw RecipeError("unknown recipe: " + name);
}

}  // namespace navlab
