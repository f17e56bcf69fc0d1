#pragma once
// Experiment configuration and figure-reproduction recipes: each recipe
// trains or loads the checkpoints it needs, runs one benchmark, and writes
// CSV/SVG artifacts plus a manifest into its own directory.

#include <string>
#include <vector>

#include "json.hpp"
#include "navlab/analysis.hpp"
#include "navlab/ppo.hpp"

namespace navlab {

struct RecipeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // worldgen
  int train_maps = 200, test_maps = 50;
  int map_width = 32, map_height = 32;
  double maze_density = 0.3;
  // policy
  PolicyConfig policy{16, 1, 128};
  // train
  TrainConfig train;
  int train_max_steps = 500;  // per-episode cap while training
  int eval_max_steps = 2000;
  int bug_max_steps = 4000;
  int eval_episodes = 50;
  // held-out evaluation episode constraints (desk-scale goal distances)
  double eval_min_geo = 1.2, eval_max_geo = 3.5, eval_min_ratio = 1.0;
  // geodesic-range curriculum for agent training; gate <= 0 disables it
  double curriculum_min_geo = 0.5;
  double curriculum_start_geo = 1.5;
  double curriculum_gate = 0.7;    // success rate that unlocks harder goals
  double curriculum_growth = 1.25; // max-geodesic multiplier on promotion
  // probe
  int probe_pairs = 3;
  int probe_pool_size = 48;
  int probe_updates = 200;
  double probe_min_geo = 1.2, probe_max_geo = 3.5, probe_min_ratio = 1.0;
  // analysis
  MapDatasetOptions map_dataset;
  std::vector<int> position_ks{-10, -1, 1, 10};
  std::vector<int> memlen_budgets{1, 8, 32, 128, 0};  // 0 = unrestricted
  int dataset_episodes = 100;
  double tsne_perplexity = 30.0;
  int tsne_iters = 500;
  // seeds
  std::uint64_t seed = 1;
};

// Strict parse: unknown keys anywhere are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
// FNV-1a hash of the canonical JSON dump, recorded in every artifact.
std::string config_hash(const ExperimentConfig& cfg);

struct RecipeResult {
  std::string dir;
  std::vector<std::string> artifacts;  // file names inside dir
  bool resumed = false;                // all artifacts already present
};

// Names: fig1_bug_comparison, fig2_memlen, fig3_probe, fig4_maps,
// fig5_excursions, tableA_mdp_control. A completed recipe (manifest plus all
// artifacts on disk) is not recomputed.
RecipeResult run_recipe(const std::string& name, const ExperimentConfig& cfg,
                        const std::string& out_dir);

// Maze sets derived from the config seed; test maps disjoint by seed offset.
std::vector<OccupancyGrid> make_train_maps(const ExperimentConfig& cfg);
std::vector<OccupancyGrid> make_test_maps(const ExperimentConfig& cfg);

// Loads <dir>/agent.ckpt or trains one with the config budget and saves it.
Checkpoint ensure_agent(const ExperimentConfig& cfg, const std::string& dir);

}  // namespace navlab
