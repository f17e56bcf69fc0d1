#include "navlab/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "navlab/kernels.hpp"

namespace navlab {

namespace {

// Row entropy (bits) and conditional probabilities for one precision value.
double row_entropy_bits(const std::vector<double>& d2, std::size_t i,
                        double beta, std::vector<double>* p) {
  const std::size_t n = p->size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    (*p)[j] = j == i ? 0.0 : std::exp(-beta * d2[j]);
    sum += (*p)[j];
  }
  if (sum <= 0.0) return 0.0;
  double h = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    (*p)[j] /= sum;
    if ((*p)[j] > 0.0) h -= (*p)[j] * std::log2((*p)[j]);
  }
  return h;
}

// Top-2 principal directions by power iteration with deflation.
std::vector<std::vector<double>> pca_directions(
    const std::vector<std::vector<double>>& xc, std::size_t dim,
    std::mt19937_64& rng) {
  std::vector<std::vector<double>> dirs;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(dim);
    for (auto& e : v) e = gauss(rng);
    for (int it = 0; it < 200; ++it) {
      std::vector<double> w(dim, 0.0);
      for (const auto& row : xc) {
        double t = 0.0;
        for (std::size_t d = 0; d < dim; ++d) t += row[d] * v[d];
        for (std::size_t d = 0; d < dim; ++d) w[d] += t * row[d];
      }
      for (const auto& prev : dirs) {
        double t = 0.0;
        for (std::size_t d = 0; d < dim; ++d) t += w[d] * prev[d];
        for (std::size_t d = 0; d < dim; ++d) w[d] -= t * prev[d];
      }
      double norm = 0.0;
      for (double e : w) norm += e * e;
      norm = std::sqrt(norm);
      if (norm < 1e-30) break;
      for (std::size_t d = 0; d < dim; ++d) v[d] = w[d] / norm;
    }
    // sign convention: the largest-magnitude coordinate is positive
    std::size_t arg = 0;
    for (std::size_t d = 1; d < dim; ++d)
      if (std::abs(v[d]) > std::abs(v[arg])) arg = d;
    if (v[arg] < 0.0)
      for (auto& e : v) e = -e;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

double kl_divergence(const std::vector<double>& P,
                     const std::vector<std::array<double, 2>>& Y) {
  const std::size_t n = Y.size();
  double qsum = 0.0;
  std::vector<double> W(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = Y[i][0] - Y[j][0], dy = Y[i][1] - Y[j][1];
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      W[i * n + j] = W[j * n + i] = w;
      qsum += 2.0 * w;
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double p = P[i * n + j];
      if (p <= 0.0) continue;
      const double q = std::max(W[i * n + j] / qsum, 1e-12);
      kl += p * std::log(p / q);
    }
  return kl;
}

}  // namespace

TsneResult tsne_embed(const std::vector<std::vector<float>>& points,
                      const TsneConfig& config) {
  const std::size_t n = points.size();
  if (n < 4) throw TsneError("tsne_embed: need at least 4 points");
  if (config.perplexity >= static_cast<double>(n))
    throw TsneError("tsne_embed: perplexity must be < N");
  if (config.perplexity <= 1.0)
    throw TsneError("tsne_embed: perplexity must be > 1");
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw TsneError("tsne_embed: ragged input");

  TsneResult res;
  std::mt19937_64 rng(config.seed);
  std::vector<std::vector<float>> x = points;

  // squared distances; duplicates get an epsilon jitter and one recompute
  std::vector<double> d2(n * n, 0.0);
  for (int attempt = 0; attempt < 2; ++attempt) {
    bool dup = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = kern::sq_dist(x[i].data(), x[j].data(), dim);
        d2[i * n + j] = d2[j * n + i] = d;
        dup |= d == 0.0;
      }
    if (!dup || attempt == 1) break;
    res.jittered = true;
    std::normal_distribution<double> eps(0.0, 1e-8);
    for (auto& row : x)
      for (auto& v : row) v += static_cast<float>(eps(rng));
  }

  // per-point bandwidth by binary search on the entropy
  const double target_h = std::log2(config.perplexity);
  std::vector<double> P(n * n, 0.0);
  res.beta.resize(n);
  res.row_entropy.resize(n);
  std::vector<double> row(n), prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = d2[i * n + j];
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = 0.0;
    for (int it = 0; it < 200; ++it) {
      h = row_entropy_bits(row, i, beta, &prob);
      if (std::abs(h - target_h) < 1e-5) break;
      if (h > target_h) {  // too flat: increase precision
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    res.beta[i] = beta;
    res.row_entropy[i] = h;
    for (std::size_t j = 0; j < n; ++j) P[i * n + j] = prob[j];
  }

  // symmetrize into a joint distribution
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = (P[i * n + j] + P[j * n + i]) / (2.0 * n);
      P[i * n + j] = P[j * n + i] = p;
    }
  for (std::size_t i = 0; i < n; ++i) P[i * n + i] = 0.0;

  // PCA initialization, first component scaled to std 1e-4
  std::vector<double> mean(dim, 0.0);
  for (const auto& p : x)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += p[d];
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> xc(n, std::vector<double>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) xc[i][d] = x[i][d] - mean[d];
  const auto dirs = pca_directions(xc, dim, rng);
  std::vector<std::array<double, 2>> Y(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) {
      double t = 0.0;
      for (std::size_t d = 0; d < dim; ++d) t += xc[i][d] * dirs[c][d];
      Y[i][c] = t;
    }
  double var0 = 0.0;
  for (const auto& y : Y) var0 += y[0] * y[0];
  const double scale = var0 > 0.0 ? 1e-4 / std::sqrt(var0 / n) : 1.0;
  for (auto& y : Y)
    for (auto& c : y) c *= scale;

  res.initial_kl = kl_divergence(P, Y);

  // momentum gradient descent on KL(P || Q) with early exaggeration
  std::vector<std::array<double, 2>> vel(n, {0.0, 0.0});
  std::vector<std::array<double, 2>> gain(n, {1.0, 1.0});
  std::vector<double> W(n * n, 0.0);
  for (int iter = 0; iter < config.iters; ++iter) {
    const bool exag = iter < config.exaggeration_iters;
    const double pf = exag ? config.exaggeration : 1.0;
    const double mom = exag ? config.momentum_early : config.momentum_late;
    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = Y[i][0] - Y[j][0], dy = Y[i][1] - Y[j][1];
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        W[i * n + j] = W[j * n + i] = w;
        qsum += 2.0 * w;
      }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = W[i * n + j];
        const double coef = (pf * P[i * n + j] - w / qsum) * w;
        gx += coef * (Y[i][0] - Y[j][0]);
        gy += coef * (Y[i][1] - Y[j][1]);
      }
      const double g[2] = {4.0 * gx, 4.0 * gy};
      for (int c = 0; c < 2; ++c) {
        // adaptive per-coordinate gains stabilize the fixed learning rate
        gain[i][c] = (g[c] > 0.0) != (vel[i][c] > 0.0)
                         ? gain[i][c] + 0.2
                         : std::max(0.01, gain[i][c] * 0.8);
        vel[i][c] = mom * vel[i][c] - config.lr * gain[i][c] * g[c];
      }
    }
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Y[i][0] += vel[i][0];
      Y[i][1] += vel[i][1];
      cx += Y[i][0];
      cy += Y[i][1];
    }
    cx /= n;
    cy /= n;
    for (auto& y : Y) {
      y[0] -= cx;
      y[1] -= cy;
    }
  }

  res.final_kl = kl_divergence(P, Y);
  res.embedding = std::move(Y);
  return res;
}

std::string tsne_csv(const TsneResult& result,
                     const std::vector<int>* labels) {
  std::string out = labels ? "x,y,label\n" : "x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < result.embedding.size(); ++i) {
    if (labels)
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d\n",
                    result.embedding[i][0], result.embedding[i][1],
                    (*labels)[i]);
    else
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", result.embedding[i][0],
                    result.embedding[i][1]);
    out += buf;
  }
  return out;
}

}  // namespace navlab
