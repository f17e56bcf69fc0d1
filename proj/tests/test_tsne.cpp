#include <cmath>
#include <random>

#include "doctest.h"
#include "navlab/tsne.hpp"

using namespace navlab;

namespace {

std::vector<std::vector<float>> gaussian_blobs(int per_blob, int blobs,
                                               int dim, double sep,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<float>> pts;
  for (int b = 0; b < blobs; ++b)
    for (int i = 0; i < per_blob; ++i) {
      std::vector<float> p(dim);
      for (int d = 0; d < dim; ++d)
        p[d] = static_cast<float>(noise(rng) + (d == b % dim ? sep * b : 0.0));
      pts.push_back(std::move(p));
    }
  return pts;
}

}  // namespace

TEST_CASE("bandwidth search hits the target perplexity on every row") {
  const auto pts = gaussian_blobs(40, 3, 5, 8.0, 1);
  TsneConfig cfg;
  cfg.perplexity = 20.0;
  cfg.iters = 50;
  const auto res = tsne_embed(pts, cfg);
  REQUIRE(res.row_entropy.size() == pts.size());
  const double target = std::log2(cfg.perplexity);
  for (double h : res.row_entropy) CHECK(std::abs(h - target) < 1e-3);
  for (double b : res.beta) CHECK(b > 0.0);
  CHECK(!res.jittered);
}

TEST_CASE("joint P recomputed from the returned precisions is a symmetric "
          "distribution") {
  const auto pts = gaussian_blobs(20, 2, 4, 6.0, 2);
  const std::size_t n = pts.size();
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.iters = 10;
  const auto res = tsne_embed(pts, cfg);

  // independent reconstruction of the conditional matrix from beta
  std::vector<double> P(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t d = 0; d < pts[i].size(); ++d) {
        const double diff = pts[i][d] - pts[j][d];
        d2 += diff * diff;
      }
      P[i * n + j] = std::exp(-res.beta[i] * d2);
      sum += P[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) P[i * n + j] /= sum;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double joint = (P[i * n + j] + P[j * n + i]) / (2.0 * n);
      const double joint_t = (P[j * n + i] + P[i * n + j]) / (2.0 * n);
      CHECK(joint == doctest::Approx(joint_t).epsilon(1e-12));
      total += joint;
    }
  CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("optimization reduces KL on random Gaussian data") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<float>> pts;
  for (int i = 0; i < 80; ++i) {
    std::vector<float> p(10);
    for (auto& v : p) v = static_cast<float>(noise(rng));
    pts.push_back(std::move(p));
  }
  TsneConfig cfg;
  cfg.perplexity = 15.0;
  cfg.iters = 300;
  cfg.exaggeration_iters = 100;
  const auto res = tsne_embed(pts, cfg);
  CHECK(res.final_kl < res.initial_kl);
  CHECK(std::isfinite(res.final_kl));
}

TEST_CASE("separated blobs stay separated in the embedding") {
  const int per = 30;
  const auto pts = gaussian_blobs(per, 3, 6, 12.0, 4);
  TsneConfig cfg;
  cfg.perplexity = 12.0;
  cfg.iters = 400;
  cfg.exaggeration_iters = 120;
  const auto res = tsne_embed(pts, cfg);

  // centroid distances dwarf within-blob spread
  double cx[3] = {0, 0, 0}, cy[3] = {0, 0, 0};
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per; ++i) {
      cx[b] += res.embedding[b * per + i][0] / per;
      cy[b] += res.embedding[b * per + i][1] / per;
    }
  double intra = 0.0;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < per; ++i)
      intra += std::hypot(res.embedding[b * per + i][0] - cx[b],
                          res.embedding[b * per + i][1] - cy[b]);
  intra /= 3 * per;
  double inter = 1e30;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      inter = std::min(inter, std::hypot(cx[a] - cx[b], cy[a] - cy[b]));
  CHECK(inter > 2.0 * intra);
}

TEST_CASE("fixed seed is deterministic; duplicates trigger jitter") {
  const auto pts = gaussian_blobs(15, 2, 4, 5.0, 7);
  TsneConfig cfg;
  cfg.perplexity = 8.0;
  cfg.iters = 60;
  cfg.seed = 42;
  const auto a = tsne_embed(pts, cfg);
  const auto b = tsne_embed(pts, cfg);
  REQUIRE(a.embedding.size() == b.embedding.size());
  for (std::size_t i = 0; i < a.embedding.size(); ++i) {
    CHECK(a.embedding[i][0] == b.embedding[i][0]);
    CHECK(a.embedding[i][1] == b.embedding[i][1]);
  }

  auto dup = pts;
  dup.push_back(dup[0]);  // exact duplicate point
  const auto c = tsne_embed(dup, cfg);
  CHECK(c.jittered);
  for (const auto& y : c.embedding) {
    CHECK(std::isfinite(y[0]));
    CHECK(std::isfinite(y[1]));
  }
}

TEST_CASE("input validation") {
  const auto pts = gaussian_blobs(10, 1, 3, 0.0, 9);
  TsneConfig cfg;
  cfg.perplexity = 10.0;  // == N
  CHECK_THROWS_AS(tsne_embed(pts, cfg), TsneError);
  cfg.perplexity = 5.0;
  CHECK_THROWS_AS(tsne_embed({pts[0], pts[1], pts[2]}, cfg), TsneError);

  const auto ok = tsne_embed(pts, cfg);
  const auto csv = tsne_csv(ok);
  CHECK(csv.rfind("x,y\n", 0) == 0);
  std::vector<int> labels(pts.size(), 2);
  const auto csv2 = tsne_csv(ok, &labels);
  CHECK(csv2.find(",2\n") != std::string::npos);
}
