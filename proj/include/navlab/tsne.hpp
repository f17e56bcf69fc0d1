#pragma once
// Exact O(N^2) t-SNE for hidden-state visualization: per-point Gaussian
// bandwidth found by binary search on the row entropy, symmetrized joint P,
// Student-t low-dimensional affinities, momentum gradient descent with early
// exaggeration, and PCA initialization.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace navlab {

struct TsneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TsneConfig {
  double perplexity = 30.0;
  int iters = 1000;
  int exaggeration_iters = 250;
  double exaggeration = 12.0;
  double lr = 200.0;
  double momentum_early = 0.5;  // while exaggerated
  double momentum_late = 0.8;
  std::uint64_t seed = 0;
};

struct TsneResult {
  std::vector<std::array<double, 2>> embedding;
  std::vector<double> beta;         // per-point Gaussian precisions
  std::vector<double> row_entropy;  // bits, after the bandwidth search
  double initial_kl = 0.0;          // KL(P||Q) at initialization
  double final_kl = 0.0;
  bool jittered = false;  // duplicate points displaced by epsilon noise
};

// points: N rows of equal dimension. Requires N >= 4 and perplexity < N.
TsneResult tsne_embed(const std::vector<std::vector<float>>& points,
                      const TsneConfig& config = {});

// x,y[,label] rows; labels optional, one per point.
std::string tsne_csv(const TsneResult& result,
                     const std::vector<int>* labels = nullptr);

}  // namespace navlab
