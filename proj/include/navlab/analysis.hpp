#pragma once
// Decoders and statistics over recurrent hidden states: collision linear
// probe with sparse dimension selection, occupancy-map decoding, past/future
// position decoding with excursion-calibrated analysis, and memory-length
// evaluation. All decoders are read-only over the agent.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navlab/ppo.hpp"

namespace navlab {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- datasets

struct HiddenStateDataset {
  int dim = 0;
  std::vector<std::vector<float>> x;  // hidden (h,c) vectors, one per record
  std::vector<std::uint8_t> label_flag;               // collision task
  std::vector<std::array<double, 3>> label_offset;    // position task
  std::vector<std::vector<std::uint8_t>> label_grid;  // map task, G*G cells
  std::vector<std::vector<std::uint8_t>> label_mask;  // map task, G*G cells
  std::vector<int> episode_id;
  std::vector<int> t;
  // z-scoring statistics, computed on the training split only
  std::vector<double> mean, stdev;

  std::size_t size() const { return x.size(); }
};

// Computes mean/std from this dataset and stores them.
void zscore_fit(HiddenStateDataset& ds);
// Normalizes records in-place with the given statistics.
void zscore_apply(HiddenStateDataset& ds, const std::vector<double>& mean,
                  const std::vector<double>& stdev);

// Dataset file: one-line JSON header (dims, record counts, task, split,
// normalization vectors) followed by little-endian float32 hidden records and
// fixed-width label blocks.
void save_hidden_dataset(const std::string& path,
                         const HiddenStateDataset& ds,
                         const std::string& task, const std::string& split);
HiddenStateDataset load_hidden_dataset(const std::string& path,
                                       std::string* task = nullptr,
                                       std::string* split = nullptr);

struct MapDatasetOptions {
  int grid_extent = 48;       // G cells per side
  double grid_res = 0.25;     // meters per cell
  double mask_radius = 2.5;   // meters around visited points
  int samples_per_episode = 30;
};

// Rolls the agent over the episodes (recording hidden states) and builds the
// task datasets. Trajectories are returned through *trajectories when given.
HiddenStateDataset build_collision_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    std::vector<Trajectory>* trajectories = nullptr);

HiddenStateDataset build_map_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    const MapDatasetOptions& map_options = {},
    std::vector<Trajectory>* trajectories = nullptr);

// Signed horizon k: feature at t, label s_{t+k} - s_t in the episode frame.
HiddenStateDataset build_position_dataset(
    const PolicyConfig& cfg, const std::vector<float>& params,
    const std::vector<EpisodeSample>& episodes, const EvalOptions& options,
    int k, std::vector<Trajectory>* trajectories = nullptr);

// Map dataset over already-recorded trajectories; grids[i] hosts
// trajectories[i].
HiddenStateDataset map_dataset_from_trajectories(
    const std::vector<Trajectory>& trajectories,
    const std::vector<const OccupancyGrid*>& grids,
    const MapDatasetOptions& map_options = {});

// Teacher-forces the recorded actions through a (typically untrained)
// network and returns its hidden states under the same alignment as the
// recorded ones: hidden[t] is the state after the observation at step t.
std::vector<std::vector<float>> replay_hidden(const PolicyConfig& cfg,
                                              const std::vector<float>& params,
                                              const OccupancyGrid& grid,
                                              const Trajectory& trajectory);

// Position dataset built from recorded trajectories (hidden states present).
HiddenStateDataset position_dataset_from_trajectories(
    const std::vector<Trajectory>& trajectories, int k);

// Chance baseline: replaces every record's hidden state with one drawn from
// a different episode (labels unchanged).
HiddenStateDataset shuffle_hidden_across_episodes(
    const HiddenStateDataset& ds, std::uint64_t seed);

// ---------------------------------------------------- collision linear probe

struct LinearProbe {
  std::vector<double> weight;
  double bias = 0.0;
  double l1_penalty = 0.0;
};

struct ProbeFit {
  LinearProbe probe;
  double train_accuracy = 0.0;
};

ProbeFit train_collision_probe(const HiddenStateDataset& train,
                               double l1_penalty, int epochs = 200,
                               double lr = 0.1);

double probe_accuracy(const LinearProbe& probe, const HiddenStateDataset& ds);
double probe_balanced_accuracy(const LinearProbe& probe,
                               const HiddenStateDataset& ds);

// Accuracy of the probe restricted to its top-n |weight| dimensions
// (remaining weights zeroed), refit bias excluded: direct truncation.
double truncated_probe_accuracy(const LinearProbe& probe,
                                const HiddenStateDataset& ds, int top_n);

struct TopDimSelection {
  std::vector<int> dims;       // kept dimensions, by descending |weight|
  double penalty = 0.0;        // chosen L1 penalty
  double full_accuracy = 0.0;  // penalty-0 probe on held-out data
  double reduced_accuracy = 0.0;
};

// Sweeps L1 penalties, keeps per-penalty the smallest |weight|-prefix
// retaining >= retain_frac of the full accuracy, then picks the penalty
// minimizing the kept-dimension count.
TopDimSelection select_top_dims(const HiddenStateDataset& train,
                                const HiddenStateDataset& heldout,
                                const std::vector<double>& penalties,
                                double retain_frac = 0.99, int epochs = 200);

// -------------------------------------------------------------- MLP decoders

struct Mlp {
  std::vector<int> dims;               // layer widths, input..output
  std::vector<std::vector<float>> w;   // row-major [out x in] per layer
  std::vector<std::vector<float>> b;

  static Mlp make(const std::vector<int>& dims, std::uint64_t seed);
  // ReLU between layers, linear output.
  std::vector<float> forward(const std::vector<float>& in) const;
  std::size_t param_count() const;
};

// Focal loss term for one binary cell: -alpha * (1-p)^gamma * log(p) where p
// is the predicted probability of the true class and alpha the class weight.
double focal_loss(double p_true, double alpha, double gamma);

struct MapDecoderConfig {
  int hidden1 = 256, hidden2 = 256;
  double gamma = 2.0;
  double alpha_not_navigable = 0.75;
  double alpha_navigable = 0.25;
  double lr = 1e-3;
  int max_epochs = 60;
  int patience = 5;  // early-stopping patience, in evaluations
  std::uint64_t seed = 0;
};

struct MapDecoder {
  Mlp net;  // input -> G*G*2 logits (class 0 = blocked, 1 = navigable)
  int grid_extent = 48;
};

MapDecoder train_map_decoder(const HiddenStateDataset& train,
                             const HiddenStateDataset& validation,
                             const MapDecoderConfig& config = {});

// Predicted navigable raster for one record.
std::vector<std::uint8_t> decode_map(const MapDecoder& decoder,
                                     const std::vector<float>& hidden);

struct MapEvalResult {
  std::vector<double> iou;  // per record
  double mean_iou = 0.0;
  double mean_balanced_accuracy = 0.0;
};

MapEvalResult eval_map_decoder(const MapDecoder& decoder,
                               const HiddenStateDataset& ds);

struct PositionDecoderConfig {
  int hidden1 = 256, hidden2 = 128;
  double lr = 1e-3;
  int max_epochs = 80;
  int patience = 5;
  double huber_delta = 1.0;
  std::uint64_t seed = 0;
};

struct PositionDecoder {
  Mlp net;  // input -> 3 (offset estimate)
  int k = 0;
  // z-scoring statistics copied from the training split; applied when the
  // decoder is run on raw hidden vectors (excursion_calibrated_eval).
  std::vector<double> mean, stdev;
};

PositionDecoder train_position_decoder(const HiddenStateDataset& train,
                                       const HiddenStateDataset& validation,
                                       int k,
                                       const PositionDecoderConfig& cfg = {});

struct PositionEvalResult {
  double abs_error = 0.0;  // mean L2 error, meters
  double rel_error = 0.0;  // mean ||pred - true|| / ||true||
  int records = 0;
  std::vector<double> rel_errors;  // per record, for resampling
};

PositionEvalResult eval_position_decoder(const PositionDecoder& decoder,
                                         const HiddenStateDataset& ds);

// ----------------------------------------------------------------- excursions

struct ExcursionConfig {
  double closure_dist = 0.5;  // meters between interval endpoints
  double min_loop_len = 2.5;  // meters of path inside the interval
  int min_steps = 20;
};

struct ExcursionInterval {
  int a = 0, b = 0;        // inclusive step range
  int exit_start = 0;      // final 10% of the interval is the Exit
};

std::vector<ExcursionInterval> detect_excursions(
    const Trajectory& traj, const ExcursionConfig& config = {});

enum class ExcursionClass { NonExcursion = 0, Excursion = 1, Exit = 2 };

const char* to_string(ExcursionClass c);

// Class of step t given the detected intervals.
ExcursionClass classify_step(const std::vector<ExcursionInterval>& intervals,
                             int t);

struct ExcursionErrorRow {
  int k = 0;
  ExcursionClass cls{};
  int pairs = 0;
  double rel_error = 0.0;
};

// Pairing rules: a NonExcursion anchor requires t+k outside every excursion
// and no excursion anywhere in [t, t+k]; Excursion/Exit anchors are binned
// by the anchor's class. Empty categories are omitted.
std::vector<ExcursionErrorRow> excursion_calibrated_eval(
    const std::vector<PositionDecoder>& decoders,
    const std::vector<Trajectory>& trajectories,
    const ExcursionConfig& config = {});

// ----------------------------------------------------------------- memlen

struct MemlenPoint {
  int budget = 0;
  double success = 0.0;
  double spl = 0.0;
  double success_lo = 0.0, success_hi = 0.0;
};

std::vector<MemlenPoint> memlen_eval(const PolicyConfig& cfg,
                                     const std::vector<float>& params,
                                     const std::vector<EpisodeSample>& episodes,
                                     const std::vector<int>& budgets,
                                     std::uint64_t seed = 0);

std::string memlen_csv(const std::vector<MemlenPoint>& curve);

}  // namespace navlab
