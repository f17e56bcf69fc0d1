// Command-line front end: world generation, training, evaluation, baselines,
// decoders, embeddings, rendering, and figure recipes. Exit codes: 0 on
// success, 1 on usage errors, 2 on runtime failures.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "navlab/analysis.hpp"
#include "navlab/bug.hpp"
#include "navlab/metrics.hpp"
#include "navlab/probe.hpp"
#include "navlab/recipes.hpp"
#include "navlab/render.hpp"
#include "navlab/tsne.hpp"

namespace fs = std::filesystem;
using namespace navlab;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  std::string out_dir = ".";
  int threads = 1;  // accepted for interface compatibility; single worker
};

ExperimentConfig load_effective_config(const GlobalOpts& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "."
                                                    : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RecipeError("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RecipeError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<EpisodeSample> episodes_on(const std::vector<OccupancyGrid>& maps,
                                       int count, int max_steps,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EpisodeSample> out;
  for (int i = 0; i < count; ++i) {
    EpisodeSample s;
    s.grid = &maps[i % maps.size()];
    s.episode = sample_episode(*s.grid, rng);
    s.episode.max_steps = max_steps;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind-navigation laboratory: train recurrent PointGoal agents "
               "in grid worlds and analyze their emergent spatial memory"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "Override the experiment seed")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--config", g.config_path, "Experiment config JSON file");
  app.add_option("--out-dir", g.out_dir, "Artifact output directory");
  app.add_option("--threads", g.threads, "Worker count (single-core build)");

  // ------------------------------------------------------------- gen-maps
  auto* gen = app.add_subcommand("gen-maps", "Generate maze occupancy grids");
  int gen_count = 10;
  gen->add_option("--count", gen_count, "Number of maps");

  // ---------------------------------------------------------------- train
  auto* train = app.add_subcommand("train", "Train the navigation agent");

  // ----------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt;
  bool eval_dump_hidden = false;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_flag("--dump-hidden", eval_dump_hidden,
                     "Also write collision/position hidden-state datasets");

  // ------------------------------------------------------------------ bug
  auto* bug = app.add_subcommand("bug", "Run the wall-following baselines");

  // ---------------------------------------------------------------- probe
  auto* probe = app.add_subcommand("probe", "Memory-transplant probe suite");

  // ------------------------------------------------------------- decoders
  auto* dcol = app.add_subcommand("decode-collision",
                                  "Collision probe on hidden datasets");
  std::string dcol_train, dcol_test;
  double dcol_l1 = 0.0;
  dcol->add_option("--train", dcol_train, "Training dataset file")
      ->required();
  dcol->add_option("--test", dcol_test, "Held-out dataset file")->required();
  dcol->add_option("--l1", dcol_l1, "L1 penalty");

  auto* dmap = app.add_subcommand("decode-map",
                                  "Occupancy-map decoder on hidden datasets");
  std::string dmap_train, dmap_val, dmap_test;
  dmap->add_option("--train", dmap_train)->required();
  dmap->add_option("--val", dmap_val)->required();
  dmap->add_option("--test", dmap_test)->required();

  auto* dpos = app.add_subcommand(
      "decode-pos", "Past/future position decoder on hidden datasets");
  std::string dpos_train, dpos_val, dpos_test;
  int dpos_k = -10;
  dpos->add_option("--train", dpos_train)->required();
  dpos->add_option("--val", dpos_val)->required();
  dpos->add_option("--test", dpos_test)->required();
  dpos->add_option("--k", dpos_k, "Offset horizon (signed steps)");

  // --------------------------------------------------------------- memlen
  auto* memlen = app.add_subcommand("memlen",
                                    "Success vs memory-budget curve");
  std::string memlen_ckpt;
  std::vector<int> memlen_budgets{1, 8, 32, 128, 0};
  memlen->add_option("--ckpt", memlen_ckpt)->required();
  memlen->add_option("--budgets", memlen_budgets,
                     "Budgets in steps (0 = unrestricted)");

  // ----------------------------------------------------------------- tsne
  auto* tsne = app.add_subcommand("tsne", "Embed a hidden-state dataset");
  std::string tsne_input;
  double tsne_perp = 30.0;
  int tsne_iters_opt = 500;
  tsne->add_option("--input", tsne_input, "Hidden dataset file")->required();
  tsne->add_option("--perplexity", tsne_perp);
  tsne->add_option("--iters", tsne_iters_opt);

  // --------------------------------------------------------------- render
  auto* render = app.add_subcommand("render", "Render a trajectory log");
  std::string render_map, render_traj;
  render->add_option("--map", render_map, "Grid file")->required();
  render->add_option("--traj", render_traj, "JSON-lines trajectory log");

  // --------------------------------------------------------------- recipe
  auto* recipe = app.add_subcommand("recipe", "Run a figure recipe");
  std::string recipe_name;
  recipe
      ->add_option("--name", recipe_name,
                   "fig1_bug_comparison|fig2_memlen|fig3_probe|fig4_maps|"
                   "fig5_excursions|tableA_mdp_control")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = load_effective_config(g);
    const fs::path out(g.out_dir);
    fs::create_directories(out);

    if (gen->parsed()) {
      ExperimentConfig c = cfg;
      c.train_maps = gen_count;
      const auto maps = make_train_maps(c);
      for (std::size_t i = 0; i < maps.size(); ++i)
        write_file(out / ("map_" + std::to_string(i) + ".grid"),
                   save_grid(maps[i]));
      std::cout << "wrote " << maps.size() << " maps to " << out.string()
                << "\n";
    } else if (train->parsed()) {
      const auto ckpt = ensure_agent(cfg, out.string());
      std::cout << "checkpoint: " << (out / "agent.ckpt").string()
                << " env_steps=" << ckpt.env_steps << "\n";
    } else if (eval_cmd->parsed()) {
      const auto ckpt = load_checkpoint(eval_ckpt);
      const auto maps = make_test_maps(cfg);
      const auto eps = episodes_on(maps, cfg.eval_episodes,
                                   cfg.eval_max_steps, cfg.seed + 53);
      EvalOptions opts;
      opts.record_hidden = eval_dump_hidden;
      std::string csv = "episode,success,spl,steps\n";
      char buf[96];
      double succ = 0, spl_sum = 0;
      std::vector<Trajectory> trajs;
      for (std::size_t i = 0; i < eps.size(); ++i) {
        auto res = run_policy_episode(ckpt.config, ckpt.params, eps[i], opts);
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%d\n", i,
                      res.success ? 1 : 0, res.spl, res.steps);
        csv += buf;
        succ += res.success;
        spl_sum += res.spl;
        trajs.push_back(std::move(res.trajectory));
      }
      write_file(out / "eval.csv", csv);
      if (eval_dump_hidden) {
        std::vector<const OccupancyGrid*> grids;
        for (const auto& s : eps) grids.push_back(s.grid);
        HiddenStateDataset col;
        col.dim = ckpt.config.flat_hidden_dim();
        for (std::size_t e = 0; e < trajs.size(); ++e)
          for (std::size_t t = 1; t < trajs[e].hidden.size(); ++t) {
            col.x.push_back(trajs[e].hidden[t]);
            col.label_flag.push_back(trajs[e].steps[t].collided ? 1 : 0);
            col.episode_id.push_back(static_cast<int>(e));
            col.t.push_back(static_cast<int>(t));
          }
        save_hidden_dataset((out / "collision.ds").string(), col,
                            "collision", "eval");
        save_hidden_dataset((out / "position.ds").string(),
                            position_dataset_from_trajectories(trajs, -10),
                            "position", "eval");
      }
      std::cout << "success=" << succ / eps.size()
                << " spl=" << spl_sum / eps.size() << "\n";
    } else if (bug->parsed()) {
      const auto res = run_recipe("fig1_bug_comparison", cfg, out.string());
      std::cout << "artifacts in " << res.dir << "\n";
    } else if (probe->parsed()) {
      const auto res = run_recipe("fig3_probe", cfg, out.string());
      std::cout << "artifacts in " << res.dir << "\n";
    } else if (dcol->parsed()) {
      auto train_ds = load_hidden_dataset(dcol_train);
      auto test_ds = load_hidden_dataset(dcol_test);
      zscore_fit(train_ds);
      zscore_apply(test_ds, train_ds.mean, train_ds.stdev);
      const auto fit = train_collision_probe(train_ds, dcol_l1);
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "l1,train_accuracy,test_accuracy,test_balanced\n%.6g,%.6f,"
                    "%.6f,%.6f\n",
                    dcol_l1, fit.train_accuracy,
                    probe_accuracy(fit.probe, test_ds),
                    probe_balanced_accuracy(fit.probe, test_ds));
      write_file(out / "collision_probe.csv", buf);
      std::cout << buf;
    } else if (dmap->parsed()) {
      auto train_ds = load_hidden_dataset(dmap_train);
      auto val_ds = load_hidden_dataset(dmap_val);
      auto test_ds = load_hidden_dataset(dmap_test);
      zscore_fit(train_ds);
      zscore_apply(val_ds, train_ds.mean, train_ds.stdev);
      zscore_apply(test_ds, train_ds.mean, train_ds.stdev);
      MapDecoderConfig mdc;
      mdc.seed = cfg.seed;
      const auto dec = train_map_decoder(train_ds, val_ds, mdc);
      const auto res = eval_map_decoder(dec, test_ds);
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "mean_iou,mean_balanced_accuracy\n%.6f,%.6f\n",
                    res.mean_iou, res.mean_balanced_accuracy);
      write_file(out / "map_decoder.csv", buf);
      if (!test_ds.x.empty())
        write_file(out / "map_decoder.svg",
                   render_map_pair(decode_map(dec, test_ds.x[0]),
                                   test_ds.label_grid[0],
                                   test_ds.label_mask[0], dec.grid_extent));
      std::cout << buf;
    } else if (dpos->parsed()) {
      auto train_ds = load_hidden_dataset(dpos_train);
      auto val_ds = load_hidden_dataset(dpos_val);
      auto test_ds = load_hidden_dataset(dpos_test);
      zscore_fit(train_ds);
      zscore_apply(val_ds, train_ds.mean, train_ds.stdev);
      zscore_apply(test_ds, train_ds.mean, train_ds.stdev);
      PositionDecoderConfig pdc;
      pdc.seed = cfg.seed;
      const auto dec = train_position_decoder(train_ds, val_ds, dpos_k, pdc);
      const auto res = eval_position_decoder(dec, test_ds);
      const auto chance = eval_position_decoder(
          dec, shuffle_hidden_across_episodes(test_ds, cfg.seed + 1));
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "k,records,abs_error,rel_error,chance_rel_error\n%d,%d,"
                    "%.6f,%.6f,%.6f\n",
                    dpos_k, res.records, res.abs_error, res.rel_error,
                    chance.rel_error);
      write_file(out / "position_decoder.csv", buf);
      std::cout << buf;
    } else if (memlen->parsed()) {
      const auto ckpt = load_checkpoint(memlen_ckpt);
      const auto maps = make_test_maps(cfg);
      const auto eps = episodes_on(maps, cfg.eval_episodes,
                                   cfg.eval_max_steps, cfg.seed + 53);
      const auto curve = memlen_eval(ckpt.config, ckpt.params, eps,
                                     memlen_budgets, cfg.seed);
      write_file(out / "memlen.csv", memlen_csv(curve));
      std::cout << memlen_csv(curve);
    } else if (tsne->parsed()) {
      const auto ds = load_hidden_dataset(tsne_input);
      TsneConfig tc;
      tc.perplexity = tsne_perp;
      tc.iters = tsne_iters_opt;
      tc.seed = cfg.seed;
      const auto res = tsne_embed(ds.x, tc);
      std::vector<int> labels;
      for (auto f : ds.label_flag) labels.push_back(f);
      const auto* lp = labels.size() == res.embedding.size() ? &labels
                                                             : nullptr;
      write_file(out / "tsne.csv", tsne_csv(res, lp));
      write_file(out / "tsne.svg", render_scatter(res.embedding, lp));
      std::cout << "kl " << res.initial_kl << " -> " << res.final_kl << "\n";
    } else if (render->parsed()) {
      const auto grid = load_grid(read_file(render_map));
      std::vector<RenderPath> paths;
      RenderSpec spec;
      if (!render_traj.empty()) {
        const auto traj = trajectory_from_jsonl(read_file(render_traj));
        paths.push_back({{}, "#1f77b4", 2.0, {}});
        for (const auto& st : traj.steps)
          paths.back().points.push_back({st.x, st.y});
        spec = RenderSpec{};
        spec.has_markers = true;
        spec.start_x = traj.episode.start.x;
        spec.start_y = traj.episode.start.y;
        spec.goal_x = traj.episode.goal_x;
        spec.goal_y = traj.episode.goal_y;
      }
      write_file(out / "render.svg", render_trajectory(grid, paths, spec));
    } else if (recipe->parsed()) {
      const auto res = run_recipe(recipe_name, cfg, out.string());
      std::cout << (res.resumed ? "resumed " : "wrote ") << res.dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
