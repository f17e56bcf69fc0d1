#include <cmath>
#include <random>

#include "doctest.h"
#include "navlab/analysis.hpp"
#include "navlab/metrics.hpp"

using namespace navlab;

namespace {

OccupancyGrid open_grid(int w, int h) {
  OccupancyGrid g;
  g.width = w;
  g.height = h;
  g.cell_size = 0.125;
  g.nav.assign(g.cell_count(), 0);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) g.nav[g.idx(x, y)] = 1;
  return g;
}

Episode episode_between(const OccupancyGrid& g, double sx, double sy,
                        double gx, double gy, double theta = 0.0) {
  Episode ep;
  ep.start = Pose{sx, sy, 0.0, theta};
  ep.goal_x = gx;
  ep.goal_y = gy;
  ep.geodesic_dist = geodesic_distance(g, sx, sy, gx, gy);
  return ep;
}

std::vector<float> stop_params(const PolicyConfig& cfg) {
  const ParamLayout layout = ParamLayout::make(cfg);
  std::vector<float> p(layout.total, 0.0f);
  p[layout.head_b() + static_cast<int>(Action::Stop)] = 5.0f;
  return p;
}

const PolicyConfig kTiny{8, 1, 32};

// Gaussian blobs around +mu / -mu along the first `informative` dimensions.
HiddenStateDataset blob_dataset(int n0, int n1, int dim, double mu,
                                int informative, std::uint64_t seed) {
  HiddenStateDataset ds;
  ds.dim = dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < n0 + n1; ++i) {
    const int y = i < n0 ? 0 : 1;
    std::vector<float> x(dim);
    for (int j = 0; j < dim; ++j) {
      double v = noise(rng);
      if (j < informative) v += (y ? mu : -mu);
      x[j] = static_cast<float>(v);
    }
    ds.x.push_back(std::move(x));
    ds.label_flag.push_back(static_cast<std::uint8_t>(y));
    ds.episode_id.push_back(i);
    ds.t.push_back(0);
  }
  return ds;
}

Trajectory straight_line(int n_actions, double step = 0.25, int hidden_dim = 4,
                         float fill = 0.5f) {
  Trajectory traj;
  traj.episode.start = Pose{1.0, 1.0, 0.0, 0.0};
  for (int t = 0; t <= n_actions; ++t) {
    traj.steps.push_back({t, 1.0 + step * t, 1.0, 0.0,
                          static_cast<int>(t == 0 ? Action::Start
                                                  : Action::MoveForward),
                          false, 0.0, 0.0});
    traj.hidden.emplace_back(hidden_dim, fill);
  }
  return traj;
}

}  // namespace

TEST_CASE("z-scoring: fitted train split has unit statistics") {
  auto ds = blob_dataset(40, 40, 6, 1.5, 2, 3);
  auto val = blob_dataset(10, 10, 6, 1.5, 2, 4);
  zscore_fit(ds);
  for (int j = 0; j < 6; ++j) {
    double m = 0.0, s = 0.0;
    for (const auto& row : ds.x) m += row[j];
    m /= ds.x.size();
    for (const auto& row : ds.x) s += (row[j] - m) * (row[j] - m);
    s = std::sqrt(s / ds.x.size());
    CHECK(std::abs(m) < 1e-5);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-4));
  }
  // validation is normalized with the training statistics, not its own
  const auto before = val.x[0][0];
  zscore_apply(val, ds.mean, ds.stdev);
  CHECK(val.x[0][0] ==
        doctest::Approx((before - ds.mean[0]) / ds.stdev[0]));
  CHECK(val.mean == ds.mean);
}

TEST_CASE("collision dataset aligns hidden states with collision flags") {
  const auto g = open_grid(32, 32);
  EpisodeSample s;
  s.grid = &g;
  s.episode = episode_between(g, 3.0, 2.0, 1.0, 3.5);  // goal behind
  s.episode.max_steps = 12;
  const ParamLayout layout = ParamLayout::make(kTiny);
  const std::vector<float> zeros(layout.total, 0.0f);  // argmax: forward only

  std::vector<Trajectory> trajs;
  const auto ds =
      build_collision_dataset(kTiny, zeros, {s}, EvalOptions{}, &trajs);
  REQUIRE(trajs.size() == 1);
  const auto& traj = trajs[0];
  REQUIRE(traj.hidden.size() == traj.steps.size());
  REQUIRE(ds.size() == traj.steps.size() - 1);

  bool any_collision = false;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int t = ds.t[i];
    CHECK(t == static_cast<int>(i) + 1);
    CHECK(ds.x[i] == traj.hidden[t]);
    CHECK((ds.label_flag[i] != 0) == traj.steps[t].collided);
    any_collision |= traj.steps[t].collided;
  }
  CHECK(any_collision);  // the wall ahead guarantees positives
  CHECK(ds.dim == kTiny.flat_hidden_dim());
}

TEST_CASE("logistic probe separates blobs and degrades under huge L1") {
  auto train = blob_dataset(140, 60, 4, 2.5, 4, 11);
  auto test = blob_dataset(35, 15, 4, 2.5, 4, 12);
  zscore_fit(train);
  zscore_apply(test, train.mean, train.stdev);

  const auto fit = train_collision_probe(train, 0.0);
  CHECK(fit.train_accuracy == doctest::Approx(1.0));
  CHECK(probe_accuracy(fit.probe, test) == doctest::Approx(1.0));
  CHECK(probe_balanced_accuracy(fit.probe, test) == doctest::Approx(1.0));
  // truncating to every dimension changes nothing
  CHECK(truncated_probe_accuracy(fit.probe, test, 4) ==
        probe_accuracy(fit.probe, test));

  // the L1 penalty shrinks the weight vector
  const auto sparse = train_collision_probe(train, 0.1);
  double l1_full = 0.0, l1_sparse = 0.0;
  for (double w : fit.probe.weight) l1_full += std::abs(w);
  for (double w : sparse.probe.weight) l1_sparse += std::abs(w);
  CHECK(l1_sparse < 0.5 * l1_full);

  HiddenStateDataset single = train;
  std::fill(single.label_flag.begin(), single.label_flag.end(), 1);
  CHECK_THROWS_AS(train_collision_probe(single, 0.0), AnalysisError);
}

TEST_CASE("top-dimension selection finds the single informative dimension") {
  // label depends only on dimension 5 of 16
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto make = [&](int n) {
    HiddenStateDataset ds;
    ds.dim = 16;
    for (int i = 0; i < n; ++i) {
      std::vector<float> x(16);
      for (auto& v : x) v = static_cast<float>(noise(rng));
      const int y = x[5] > 0 ? 1 : 0;
      x[5] += (y ? 2.0f : -2.0f);
      ds.x.push_back(std::move(x));
      ds.label_flag.push_back(static_cast<std::uint8_t>(y));
      ds.episode_id.push_back(i);
      ds.t.push_back(0);
    }
    return ds;
  };
  auto train = make(300);
  auto heldout = make(120);
  zscore_fit(train);
  zscore_apply(heldout, train.mean, train.stdev);

  const auto sel =
      select_top_dims(train, heldout, {0.001, 0.003, 0.01, 0.03}, 0.99);
  CHECK(sel.full_accuracy > 0.95);
  CHECK(sel.reduced_accuracy >= 0.99 * sel.full_accuracy);
  REQUIRE(!sel.dims.empty());
  CHECK(sel.dims.front() == 5);
  CHECK(sel.dims.size() <= 3);
}

TEST_CASE("focal loss matches the closed form and reduces to weighted CE") {
  const double p = 0.7, alpha = 0.75, gamma = 2.0;
  CHECK(focal_loss(p, alpha, gamma) ==
        doctest::Approx(-alpha * std::pow(1.0 - p, gamma) * std::log(p))
            .epsilon(1e-12));
  for (double q : {0.1, 0.5, 0.9})
    CHECK(std::abs(focal_loss(q, 0.25, 0.0) - (-0.25 * std::log(q))) <
          1e-10);
}

TEST_CASE("mlp forward computes affine-relu-affine with known weights") {
  Mlp m;
  m.dims = {2, 2, 1};
  m.w = {{1.0f, -1.0f, 0.0f, 2.0f}, {3.0f, -1.0f}};
  m.b = {{0.0f, -1.0f}, {0.5f}};
  // x = (1, 2): layer1 pre = (-1, 3) -> relu (0, 3); out = 0*3 - 3 + 0.5
  const auto y = m.forward({1.0f, 2.0f});
  REQUIRE(y.size() == 1);
  CHECK(y[0] == doctest::Approx(-2.5));
  CHECK(m.param_count() == 9);
  const auto init = Mlp::make({4, 8, 2}, 5);
  CHECK(init.param_count() == 4 * 8 + 8 + 8 * 2 + 2);
  const auto init2 = Mlp::make({4, 8, 2}, 5);
  CHECK(init.w[0] == init2.w[0]);  // seed-deterministic
}

TEST_CASE("map decoder oracle: handcrafted net reproduces metric scores") {
  // single linear layer emitting fixed logits: navigable iff cell < half
  const int G = 4;
  MapDecoder dec;
  dec.grid_extent = G;
  dec.net.dims = {3, 2 * G * G};
  dec.net.w.push_back(std::vector<float>(3 * 2 * G * G, 0.0f));
  std::vector<float> bias(2 * G * G, 0.0f);
  for (int c = 0; c < G * G; ++c) bias[2 * c + (c < G * G / 2 ? 1 : 0)] = 1.0f;
  dec.net.b.push_back(bias);

  HiddenStateDataset ds;
  ds.dim = 3;
  ds.x.push_back({0.0f, 0.0f, 0.0f});
  std::vector<std::uint8_t> truth(G * G, 0), mask(G * G, 1);
  for (int c = 0; c < G * G; ++c) truth[c] = c < G * G / 2 + 2 ? 1 : 0;
  ds.label_grid.push_back(truth);
  ds.label_mask.push_back(mask);
  ds.episode_id.push_back(0);
  ds.t.push_back(0);

  const auto pred = decode_map(dec, ds.x[0]);
  const auto res = eval_map_decoder(dec, ds);
  REQUIRE(res.iou.size() == 1);
  CHECK(res.mean_iou == doctest::Approx(iou(pred, truth, mask)));
  CHECK(res.mean_iou == doctest::Approx(8.0 / 10.0));  // 8 hits, 2 missed
  CHECK(res.mean_balanced_accuracy ==
        doctest::Approx(balanced_accuracy(pred, truth, mask)));

  // masked-out cells do not contribute: blind the mismatching cells
  HiddenStateDataset ds2 = ds;
  for (int c = G * G / 2; c < G * G / 2 + 2; ++c) ds2.label_mask[0][c] = 0;
  CHECK(eval_map_decoder(dec, ds2).mean_iou == doctest::Approx(1.0));
}

TEST_CASE("map decoder training learns an input-dependent raster") {
  const int G = 4;
  std::vector<std::uint8_t> left(G * G, 0), right(G * G, 0),
      mask(G * G, 1);
  for (int j = 0; j < G; ++j)
    for (int i = 0; i < G; ++i)
      ((i < G / 2) ? left : right)[j * G + i] = 1;

  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.05);
  auto make = [&](int n, std::uint64_t) {
    HiddenStateDataset ds;
    ds.dim = 4;
    for (int i = 0; i < n; ++i) {
      const int y = i % 2;
      std::vector<float> x(4, 0.0f);
      x[y] = 1.0f;
      for (auto& v : x) v += static_cast<float>(noise(rng));
      ds.x.push_back(std::move(x));
      ds.label_grid.push_back(y ? right : left);
      ds.label_mask.push_back(mask);
      ds.episode_id.push_back(i);
      ds.t.push_back(0);
    }
    return ds;
  };
  const auto train = make(60, 1);
  const auto val = make(20, 2);

  MapDecoderConfig cfg;
  cfg.hidden1 = 16;
  cfg.hidden2 = 16;
  cfg.lr = 1e-2;
  cfg.max_epochs = 120;
  cfg.patience = 20;
  const auto dec = train_map_decoder(train, val, cfg);
  const auto res = eval_map_decoder(dec, val);
  CHECK(res.mean_iou > 0.95);
  CHECK(res.mean_balanced_accuracy > 0.95);
}

TEST_CASE("position dataset rotates offsets into the episode frame") {
  Trajectory traj;
  const double theta0 = M_PI / 2.0;  // facing +y
  traj.episode.start = Pose{2.0, 2.0, 0.0, theta0};
  // hand-built path: +y, +y, +x in world coordinates
  const double xs[] = {2.0, 2.0, 2.0, 2.25};
  const double ys[] = {2.0, 2.25, 2.5, 2.5};
  for (int t = 0; t < 4; ++t) {
    traj.steps.push_back({t, xs[t], ys[t], 0.0, 0, false, 0.0, 0.0});
    traj.hidden.push_back({static_cast<float>(t), 0.0f});
  }

  const auto fwd = position_dataset_from_trajectories({traj}, 2);
  REQUIRE(fwd.size() == 2);  // anchors t=0,1
  // world offset (0, 0.5) rotated by -90deg -> episode frame (0.5, 0)
  CHECK(fwd.label_offset[0][0] == doctest::Approx(0.5));
  CHECK(fwd.label_offset[0][1] == doctest::Approx(0.0).epsilon(1e-9));
  // world offset (0.25, 0.25) -> (0.25, -0.25)
  CHECK(fwd.label_offset[1][0] == doctest::Approx(0.25));
  CHECK(fwd.label_offset[1][1] == doctest::Approx(-0.25));
  CHECK(fwd.x[0] == traj.hidden[0]);

  const auto back = position_dataset_from_trajectories({traj}, -2);
  REQUIRE(back.size() == 2);  // anchors t=2,3
  CHECK(back.t[0] == 2);
  CHECK(back.x[1] == traj.hidden[3]);
  CHECK(back.label_offset[0][0] == doctest::Approx(-0.5));
}

TEST_CASE("cross-episode shuffle keeps labels but swaps sources") {
  std::vector<Trajectory> trajs;
  for (int e = 0; e < 3; ++e) {
    auto t = straight_line(6, 0.25, 2, static_cast<float>(e));
    trajs.push_back(std::move(t));
  }
  const auto ds = position_dataset_from_trajectories(trajs, 1);
  const auto sh = shuffle_hidden_across_episodes(ds, 99);
  REQUIRE(sh.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(sh.label_offset[i] == ds.label_offset[i]);
    CHECK(sh.episode_id[i] == ds.episode_id[i]);
    // every record's hidden now comes from a different episode
    CHECK(sh.x[i][0] != static_cast<float>(ds.episode_id[i]));
  }
}

TEST_CASE("position decoder learns a linear target") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto make = [&](int n) {
    HiddenStateDataset ds;
    ds.dim = 8;
    for (int i = 0; i < n; ++i) {
      std::vector<float> x(8);
      for (auto& v : x) v = static_cast<float>(u(rng));
      ds.label_offset.push_back({x[0], x[1], 0.0});
      ds.x.push_back(std::move(x));
      ds.episode_id.push_back(i);
      ds.t.push_back(0);
    }
    return ds;
  };
  auto train = make(400);
  auto val = make(100);
  zscore_fit(train);
  zscore_apply(val, train.mean, train.stdev);

  PositionDecoderConfig cfg;
  cfg.hidden1 = 32;
  cfg.hidden2 = 16;
  cfg.lr = 1e-2;
  cfg.max_epochs = 150;
  cfg.patience = 25;
  const auto dec = train_position_decoder(train, val, 1, cfg);
  CHECK(dec.mean == train.mean);  // stats travel with the decoder
  const auto res = eval_position_decoder(dec, val);
  CHECK(res.records == 100);
  CHECK(res.abs_error < 0.15);
  CHECK(res.rel_error < 0.5);

  // zero-offset labels are excluded from the relative-error average
  HiddenStateDataset degenerate = val;
  for (auto& off : degenerate.label_offset) off = {0.0, 0.0, 0.0};
  CHECK(eval_position_decoder(dec, degenerate).records == 0);
}

TEST_CASE("excursion detection: loops close, straight lines do not") {
  // 2m x 2m square: 8 forward steps per side, ending exactly at the start
  Trajectory loop;
  loop.episode.start = Pose{2.0, 2.0, 0.0, 0.0};
  double x = 2.0, y = 2.0;
  loop.steps.push_back({0, x, y, 0.0, 0, false, 0.0, 0.0});
  const double dirs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  int t = 0;
  for (const auto& d : dirs)
    for (int i = 0; i < 8; ++i) {
      x += 0.25 * d[0];
      y += 0.25 * d[1];
      loop.steps.push_back({++t, x, y, 0.0, 0, false, 0.0, 0.0});
    }
  const auto intervals = detect_excursions(loop);
  REQUIRE(intervals.size() == 1);
  CHECK(intervals[0].a == 0);
  CHECK(intervals[0].b == 32);
  // final 10% of 33 steps -> ceil(3.3) = 4 exit steps
  CHECK(intervals[0].exit_start == 29);
  CHECK(classify_step(intervals, 10) == ExcursionClass::Excursion);
  CHECK(classify_step(intervals, 29) == ExcursionClass::Exit);
  CHECK(classify_step(intervals, 32) == ExcursionClass::Exit);
  CHECK(classify_step(intervals, 33) == ExcursionClass::NonExcursion);
  CHECK(std::string(to_string(ExcursionClass::Exit)) == "exit");

  CHECK(detect_excursions(straight_line(40)).empty());
  // too short a loop (1.6 m perimeter) is ignored even if it closes
  Trajectory small = loop;
  small.steps.clear();
  x = 2.0;
  y = 2.0;
  t = 0;
  small.steps.push_back({0, x, y, 0.0, 0, false, 0.0, 0.0});
  for (const auto& d : dirs)
    for (int i = 0; i < 8; ++i) {
      x += 0.05 * d[0];
      y += 0.05 * d[1];
      small.steps.push_back({++t, x, y, 0.0, 0, false, 0.0, 0.0});
    }
  CHECK(detect_excursions(small).empty());
}

TEST_CASE("excursion-calibrated eval: zero decoder has unit relative error") {
  PositionDecoder dec;
  dec.k = 5;
  dec.net.dims = {4, 3};
  dec.net.w.push_back(std::vector<float>(12, 0.0f));
  dec.net.b.push_back(std::vector<float>(3, 0.0f));

  const auto traj = straight_line(40);
  const auto rows = excursion_calibrated_eval({dec}, {traj});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].k == 5);
  CHECK(rows[0].cls == ExcursionClass::NonExcursion);
  CHECK(rows[0].pairs == 36);  // anchors t = 0..35
  CHECK(rows[0].rel_error == doctest::Approx(1.0));
}

TEST_CASE("memory-length evaluation is flat for a reflexive agent") {
  const auto g = open_grid(32, 32);
  std::vector<EpisodeSample> eps;
  for (int i = 0; i < 3; ++i) {
    EpisodeSample s;
    s.grid = &g;
    s.episode = episode_between(g, 1.5 + 0.3 * i, 1.5, 1.65 + 0.3 * i, 1.5);
    s.episode.max_steps = 40;
    eps.push_back(s);
  }
  const auto curve =
      memlen_eval(kTiny, stop_params(kTiny), eps, {1, 4, 0}, 17);
  REQUIRE(curve.size() == 3);
  for (const auto& pt : curve) {
    CHECK(pt.success == doctest::Approx(1.0));
    CHECK(pt.spl == doctest::Approx(1.0));
    CHECK(pt.success_lo <= pt.success);
    CHECK(pt.success_hi >= pt.success);
  }
  const auto csv = memlen_csv(curve);
  CHECK(csv.rfind("budget,success,spl,success_lo,success_hi\n", 0) == 0);
  CHECK(csv.find("\n1,1.000000") != std::string::npos);
}

TEST_CASE("map dataset geometry: allocentric raster around the start") {
  const auto g = open_grid(32, 32);  // interior navigable on (0.125, 3.875)
  EpisodeSample s;
  s.grid = &g;
  s.episode = episode_between(g, 0.4, 2.0, 0.55, 2.0);
  MapDatasetOptions mo;
  mo.grid_extent = 6;
  mo.grid_res = 0.25;  // raster spans start +/- 0.75 m
  mo.samples_per_episode = 30;

  std::vector<Trajectory> trajs;
  const auto ds = build_map_dataset(kTiny, stop_params(kTiny), {s},
                                    EvalOptions{}, mo, &trajs);
  REQUIRE(!ds.label_grid.empty());
  const auto& truth = ds.label_grid[0];
  const auto& mask = ds.label_mask[0];
  REQUIRE(truth.size() == 36);
  // everything within 2.5 m of the stationary agent is unmasked
  for (auto m : mask) CHECK(m == 1);
  // cells with world x < 0.125 fall outside the navigable interior
  int blocked = 0;
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 6; ++i) {
      const double wx = 0.4 + (i + 0.5 - 3.0) * 0.25;
      const bool nav = truth[j * 6 + i] != 0;
      if (!nav) ++blocked;
      CHECK(nav == (wx > 0.125));
    }
  CHECK(blocked == 12);  // the two leftmost columns sit in the boundary wall
  // immediate stop: two hidden states -> two samples, final step included
  CHECK(ds.size() == trajs[0].hidden.size());
  CHECK(ds.t.back() ==
        static_cast<int>(trajs[0].hidden.size()) - 1);
}
