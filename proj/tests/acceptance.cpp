// Acceptance gate: one pass/fail line per criterion, exit status 0 only if
// all seven hold. Tolerances are pinned here, next to each check.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>
#include <thread>

#include "crossmodal/evalkit.hpp"
#include "crossmodal/gradcheck.hpp"
#include "crossmodal/trainer.hpp"

using namespace crossmodal;

namespace {

using D = double;
using Clock = std::chrono::steady_clock;

struct Gate {
  bool all_ok = true;

  bool sub(bool ok, const std::string& what) {
    std::printf("    %-6s %s\n", ok ? "ok" : "FAIL", what.c_str());
    std::fflush(stdout);
    return ok;
  }
  void criterion(int n, bool ok, const std::string& what, double seconds) {
    std::printf("[%s] criterion %d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", n,
                what.c_str(), seconds);
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<D> random_values(int64_t count, std::mt19937& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<D> out(static_cast<size_t>(count));
  for (auto& v : out) v = d(rng);
  return out;
}

Tensor<D> random_param(Shape shape, std::mt19937& rng, double lo = -1.0,
                       double hi = 1.0) {
  return Tensor<D>::param(shape, random_values(numel(shape), rng, lo, hi));
}

// Small 64-bit encoder stack for composed-network gradient checks.
EncoderConfig mini_config() {
  EncoderConfig c;
  c.image_channels = {4, 4, 4, 8};
  c.point_widths = {2, 2, 2, 2};
  c.embed_dim = 8;
  c.k = 2;
  c.fusion_hidden = 4;
  c.stem_stride = 1;
  c.seg_hidden = {4};
  c.num_parts = 2;
  return c;
}

std::vector<Tensor<D>> collect(Encoders<D>& enc, const std::string& prefix) {
  std::vector<Tensor<D>> out;
  for (const auto& name : enc.store.trainable_names(prefix))
    out.push_back(enc.store.get(name));
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient checks
// ---------------------------------------------------------------------------

bool criterion1(Gate& g) {
  const D eps = 1e-5;
  const double tol = 1e-4;
  bool ok = true;
  for (uint32_t seed : {11u, 22u, 33u}) {
    std::mt19937 rng(seed);
    double worst = 0;
    auto track = [&](double e) { worst = std::max(worst, e); };

    // Primitives.
    {
      auto x = random_param({3, 5}, rng);
      auto w = random_param({4, 5}, rng);
      auto b = random_param({4}, rng);
      track(grad_check<D>([&]() { return mean_all(linear(x, w, b)); },
                          {x, w, b}, eps, 30, rng));
    }
    for (int64_t stride : {int64_t(1), int64_t(2)}) {
      auto x = random_param({2, 2, 5, 5}, rng);
      auto w = random_param({3, 2, 3, 3}, rng);
      auto b = random_param({3}, rng);
      track(grad_check<D>(
          [&]() {
            return mean_all(mul(conv2d(x, w, b, stride), conv2d(x, w, b, stride)));
          },
          {x, w, b}, eps, 30, rng));
    }
    {
      auto x = random_param({4, 6}, rng);
      for (auto& v : x.values()) v += (v >= 0 ? 0.2 : -0.2);  // off the kink
      track(grad_check<D>([&]() { return mean_all(mul(relu(x), relu(x))); },
                          {x}, eps, 24, rng));
      track(grad_check<D>(
          [&]() {
            return mean_all(mul(leaky_relu(x, D(0.2)), leaky_relu(x, D(0.2))));
          },
          {x}, eps, 24, rng));
    }
    {
      auto x = random_param({3, 4}, rng, 0.3, 0.9);
      track(grad_check<D>(
          [&]() { return mean_all(log_op(clamp(x, D(1e-7), D(1) - D(1e-7)))); },
          {x}, eps, 12, rng));
    }
    {
      auto x = random_param({2, 3, 6, 6}, rng);
      track(grad_check<D>(
          [&]() { return mean_all(mul(max_pool2d(x), max_pool2d(x))); }, {x},
          eps, 30, rng));
      track(grad_check<D>(
          [&]() {
            return mean_all(mul(global_avg_pool(x), global_avg_pool(x)));
          },
          {x}, eps, 30, rng));
    }
    {
      auto x = random_param({2, 6, 3}, rng);
      track(grad_check<D>(
          [&]() {
            return mean_all(mul(reduce_max_axis(x, 1), reduce_max_axis(x, 1)));
          },
          {x}, eps, 30, rng));
      auto idx = knn_indices(x.data(), 2, 6, 3, 2);
      track(grad_check<D>(
          [&]() {
            auto gp = gather_points(x, idx, 2);
            auto c = insert_repeat(x, 2, 2);
            auto e = concat_lastdim<D>({c, sub(gp, c)});
            return mean_all(mul(e, e));
          },
          {x}, eps, 30, rng));
      auto y = random_param({4, 5}, rng);
      track(grad_check<D>(
          [&]() {
            auto s = softmax_lastdim(y);
            return mean_all(mul(select_lastdim(s, 1), select_lastdim(s, 1)));
          },
          {y}, eps, 20, rng));
    }
    {
      // Batchnorm with generic affine values and frozen running statistics;
      // the train-mode probe is a fixed linear functional (mean(y^2) is nearly
      // constant in x under batch normalization).
      auto x = random_param({3, 2, 4, 4}, rng);
      auto gamma = Tensor<D>::param({2}, {1.3, 0.7});
      auto beta = Tensor<D>::param({2}, {0.1, -0.2});
      Tensor<D> rmean({2}, std::vector<D>{0.05, -0.1});
      Tensor<D> rvar({2}, std::vector<D>{1.2, 0.8});
      track(grad_check<D>(
          [&]() {
            auto y = batch_norm2d(x, gamma, beta, rmean, rvar, Mode::Eval);
            return mean_all(mul(y, y));
          },
          {x, gamma, beta}, eps, 30, rng));
      auto w = random_param({3, 2, 4, 4}, rng);
      track(grad_check<D>(
          [&]() {
            auto y = batch_norm2d(x, gamma, beta, rmean, rvar, Mode::Train,
                                  D(0.1), D(1e-5), false);
            return mean_all(mul(y, w));
          },
          {x, gamma, beta}, eps, 30, rng));
    }
    {
      auto logits = random_param({5, 3}, rng);
      std::vector<int> labels{0, 2, 1, -1, 2};
      track(grad_check<D>(
          [&]() { return softmax_cross_entropy(logits, labels); }, {logits},
          eps, 15, rng));
    }

    // Composed networks (eval mode keeps batchnorm statistics frozen).
    Encoders<D> enc(mini_config(), seed);
    auto images = Tensor<D>({2, 1, 16, 16}, random_values(512, rng, 0.0, 1.0));
    auto clouds = Tensor<D>({2, 6, 3}, random_values(36, rng));
    {
      auto w = random_param({2, 8}, rng);
      track(grad_check<D>(
          [&]() { return mean_all(mul(enc.forward_image(images, Mode::Eval), w)); },
          collect(enc, "img."), eps, 2, rng));
    }
    {
      auto w = random_param({2, 8}, rng);
      track(grad_check<D>(
          [&]() {
            return mean_all(
                mul(enc.forward_point(clouds, Mode::Eval).global_feat, w));
          },
          collect(enc, "pnt."), eps, 2, rng));
    }
    {
      auto fi = random_param({2, 8}, rng);
      auto fp = random_param({2, 8}, rng);
      track(grad_check<D>(
          [&]() {
            auto prob = enc.forward_fusion(fi, fp);
            return mean_all(mul(prob, prob));
          },
          collect(enc, "fus."), eps, 6, rng));
    }
    {
      std::vector<int> labels{0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 1, 0};
      track(grad_check<D>(
          [&]() {
            return softmax_cross_entropy(
                enc.forward_segmentation(clouds, Mode::Eval), labels);
          },
          collect(enc, "seg."), eps, 4, rng));
    }
    {
      // Both losses through the full joint forward; margin chosen so the
      // hinge is active but away from its kink at this parameter point.
      auto im1 = Tensor<D>({2, 1, 16, 16}, random_values(512, rng, 0.0, 1.0));
      auto im2 = Tensor<D>({2, 1, 16, 16}, random_values(512, rng, 0.0, 1.0));
      auto im3 = Tensor<D>({2, 1, 16, 16}, random_values(512, rng, 0.0, 1.0));
      std::vector<Tensor<D>> params{
          enc.store.get("img.stem.conv.w"), enc.store.get("img.block3.conv2.conv.w"),
          enc.store.get("pnt.block0.l1.w"), enc.store.get("pnt.fc.w"),
          enc.store.get("fus.l1.w"),        enc.store.get("fus.l2.b")};
      auto loss = [&]() {
        auto f1 = enc.forward_image(im1, Mode::Eval);
        auto f2 = enc.forward_image(im2, Mode::Eval);
        auto f3 = enc.forward_image(im3, Mode::Eval);
        auto fp = enc.forward_point(clouds, Mode::Eval).global_feat;
        std::array<Tensor<D>, 3> preds{enc.forward_fusion(f1, fp),
                                       enc.forward_fusion(f2, fp),
                                       enc.forward_fusion(f3, fp)};
        auto lt = triplet_loss(f1, f2, f3, D(1));
        auto lc = cross_modality_loss<D>(preds, {1, 1, 0});
        return combined_loss(lt, lc, D(1));
      };
      track(grad_check<D>(loss, params, eps, 3, rng));
    }

    ok = g.sub(worst < tol, "seed " + std::to_string(seed) +
                                ": max relative error " + std::to_string(worst)) &&
         ok;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 2: geometry oracles
// ---------------------------------------------------------------------------

std::vector<int> fps_oracle(const PointCloud& cloud, int n, int start) {
  std::vector<int> chosen{start};
  std::vector<double> min_d(cloud.size(),
                            std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < n) {
    for (size_t i = 0; i < cloud.size(); ++i)
      min_d[i] = std::min(
          min_d[i],
          (cloud.points[i] - cloud.points[static_cast<size_t>(chosen.back())])
              .norm());
    int best = -1;
    double best_d = -1;
    for (size_t i = 0; i < cloud.size(); ++i)
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = static_cast<int>(i);
      }
    chosen.push_back(best);
  }
  return chosen;
}

bool criterion2(Gate& g) {
  bool ok = true;
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);

  // FPS vs the brute-force greedy oracle, 200 instances with <= 64 candidates.
  bool fps_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> count_d(4, 64);
    int count = count_d(rng);
    PointCloud cloud;
    for (int i = 0; i < count; ++i) {
      cloud.points.push_back({coord(rng), coord(rng), coord(rng)});
      cloud.source_faces.push_back(i);
    }
    std::uniform_int_distribution<int> n_d(2, count), s_d(0, count - 1);
    int n = n_d(rng), start = s_d(rng);
    auto got = farthest_point_sample(cloud, n, start);
    auto want = fps_oracle(cloud, n, start);
    for (int i = 0; i < n; ++i)
      fps_ok = fps_ok && got.source_faces[static_cast<size_t>(i)] ==
                             want[static_cast<size_t>(i)];
  }
  ok = g.sub(fps_ok, "farthest_point_sample == greedy oracle, 200 instances") && ok;

  // KNN vs the all-pairs sort oracle, 200 instances.
  bool knn_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> n_d(4, 40);
    int64_t n = n_d(rng);
    std::uniform_int_distribution<int> k_d(1, static_cast<int>(n) - 1);
    int64_t k = k_d(rng);
    std::vector<double> pts(static_cast<size_t>(n * 3));
    for (auto& v : pts) v = coord(rng);
    auto idx = knn_indices(pts.data(), 1, n, 3, k);
    for (int64_t i = 0; i < n && knn_ok; ++i) {
      std::vector<std::pair<double, int64_t>> all;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double d2 = 0;
        for (int64_t c = 0; c < 3; ++c) {
          double diff = pts[static_cast<size_t>(i * 3 + c)] -
                        pts[static_cast<size_t>(j * 3 + c)];
          d2 += diff * diff;
        }
        all.emplace_back(d2, j);
      }
      std::sort(all.begin(), all.end());
      for (int64_t j = 0; j < k; ++j)
        knn_ok = knn_ok && idx[static_cast<size_t>(i * k + j)] ==
                               all[static_cast<size_t>(j)].second;
    }
  }
  ok = g.sub(knn_ok, "knn_indices == all-pairs oracle, 200 instances") && ok;

  // Area-weighted centroid vs Monte-Carlo surface sampling.
  TriangleMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0},
                   {2, 1, 0}, {1, 2, 0}};
  mesh.faces = {{0, 1, 2}, {3, 4, 5}};
  Vec3 c = mesh_centroid(mesh);
  Vec3 mc{0, 0, 0};
  const int samples = 200000;
  auto sampled = surface_oversample(mesh, samples, rng);
  for (const auto& p : sampled.points) mc = mc + p;
  mc = mc * (1.0 / samples);
  double err = (c - mc).norm();
  ok = g.sub(err < 1e-2, "mesh_centroid vs Monte-Carlo oracle, error " +
                             std::to_string(err)) &&
       ok;
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 3: renderer analytics
// ---------------------------------------------------------------------------

bool criterion3(Gate& g) {
  bool ok = true;
  RenderConfig cfg;
  cfg.width = 64;
  cfg.height = 64;
  cfg.ambient_coeff = 0;
  cfg.diffuse_coeff = 1;
  cfg.specular_coeff = 0;
  cfg.lights[0] = PointLight{{0, 0, -1e6}, 1.0, 1.0};
  cfg.lights[1] = PointLight{{0, 0, 0}, 0.0, 0.0};
  Camera cam;
  cam.azimuth_deg = 90;
  cam.polar_deg = 90;
  cam.radius = 2.5;

  auto tilted = [](double t) {
    TriangleMesh m;
    double c = std::cos(t), s = std::sin(t);
    for (Vec3 v : {Vec3{-0.2, -0.2, 0}, Vec3{0.2, -0.2, 0}, Vec3{0, 0.2, 0}})
      m.vertices.emplace_back(v.x, v.y * c, v.y * s);
    m.faces = {{0, 1, 2}};
    return m;
  };
  double flat = render_view(tilted(0.0), cam, cfg).at(32, 32);
  ok = g.sub(std::abs(flat - 1.0) < 1e-3,
             "perpendicular intensity " + std::to_string(flat)) && ok;
  double angled = render_view(tilted(M_PI / 4), cam, cfg).at(32, 32);
  ok = g.sub(std::abs(angled - std::sqrt(0.5)) < 1e-3,
             "45-degree intensity " + std::to_string(angled)) && ok;

  std::mt19937 rng(77);
  auto mesh = fit_to_view(make_toy_mesh("sphere", rng).mesh);
  RenderConfig std_cfg;
  std_cfg.width = 32;
  std_cfg.height = 32;
  double ambient = std_cfg.ambient_coeff * std_cfg.ambient_intensity;
  auto cams = sample_viewpoints(50, std_cfg, rng);
  bool lit = true;
  for (const auto& c : cams) {
    auto img = render_view(mesh, c, std_cfg);
    double sum = 0;
    int fg = 0;
    for (float p : img.pixels)
      if (p > 0) {
        sum += p;
        ++fg;
      }
    lit = lit && fg > 0 && sum / fg > ambient;
  }
  ok = g.sub(lit, "50 random cameras: mean foreground intensity > ambient") && ok;
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 4: loss identities
// ---------------------------------------------------------------------------

bool criterion4(Gate& g, const DataStore& store) {
  bool ok = true;
  using F = double;
  Tensor<F> a({1, 2}, std::vector<F>{1, 2});
  Tensor<F> n({1, 2}, std::vector<F>{2, 4});
  ok = g.sub(triplet_loss(a, a, n, F(1)).item() == 0.0,
             "triplet loss zero when the margin is satisfied") && ok;

  auto pred = [](F v) { return Tensor<F>({1}, std::vector<F>{v}); };
  std::array<Tensor<F>, 3> uniform{pred(0.5), pred(0.5), pred(0.5)};
  double u = cross_modality_loss<F>(uniform, {1, 1, 0}).item();
  ok = g.sub(std::abs(u - 3 * std::log(2.0)) < 1e-9,
             "uniform-prediction cross-modality loss = 3 ln 2") && ok;

  auto scalar = [](F v) { return Tensor<F>({1}, std::vector<F>{v}); };
  double once = combined_loss(scalar(1.5), scalar(0.7), F(2)).item() - 1.5;
  double twice = combined_loss(scalar(1.5), scalar(0.7), F(4)).item() - 1.5;
  ok = g.sub(std::abs(twice - 2 * once) < 1e-12, "combined loss linear in beta") && ok;

  Encoders<float> enc(EncoderConfig::toy(), 41);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.total_iterations = 50;
  cfg.beta = 0.0;
  cfg.seed = 41;
  cfg.checkpoint_every = 0;
  auto trace = pretrain(enc, store, cfg);
  bool equal = trace.size() == 50;
  for (const auto& row : trace) equal = equal && row.l_self == row.l_triplet;
  ok = g.sub(equal, "beta=0: L_self == L_triplet across a 50-iteration run") && ok;
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 5: toy training study
// ---------------------------------------------------------------------------

struct SeedResult {
  double cm_accuracy = 0;
  PairStats pair_stats;
  double probe_3d = 0;
  double probe_2d_v1 = 0, probe_2d_v8 = 0;
  std::map<int, double> retrieval;
  double miou_unfrozen = 0, miou_frozen = 0, miou_random_frozen = 0;
  double miou_scratch = 0, miou_unfrozen_10 = 0, miou_scratch_10 = 0;
  double first100_mean = 0, last100_mean = 0;
};

SeedResult run_seed(const DataStore& store, uint64_t seed,
                    const std::string& work_dir) {
  SeedResult r;
  EncoderConfig cfg = EncoderConfig::toy();
  cfg.num_parts = store.catalog.total_parts;
  Encoders<float> enc(cfg, seed);

  TrainConfig train;
  train.batch_size = 16;
  train.total_iterations = 2000;
  train.lr0 = 0.004;  // tuned for the 2000-iteration toy budget
  train.seed = seed;
  train.checkpoint_every = 0;
  auto trace = pretrain(enc, store, train);
  for (size_t i = 0; i < 100; ++i) {
    r.first100_mean += trace[i].l_self / 100.0;
    r.last100_mean += trace[trace.size() - 100 + i].l_self / 100.0;
  }

  std::mt19937 rng(static_cast<uint32_t>(seed) + 1000);
  auto pairs_3d = build_eval_pairs(store, "2d3d", rng);
  r.cm_accuracy = cross_modality_accuracy(enc, store, pairs_3d);
  auto pairs_2d = build_eval_pairs(store, "2d2d", rng);
  r.pair_stats = pair_distance_stats(enc, store, pairs_2d);

  r.probe_3d = recognition_probe(enc, store, "3d", 1);
  r.probe_2d_v1 = recognition_probe(enc, store, "2d", 1);
  r.probe_2d_v8 = recognition_probe(enc, store, "2d", 8);

  std::vector<float> feats;
  std::vector<int> labels;
  for (int obj : store.test_indices) {
    auto f = point_feature(enc, store, obj);
    feats.insert(feats.end(), f.begin(), f.end());
    labels.push_back(store.objects[static_cast<size_t>(obj)].cls_id);
  }
  r.retrieval = retrieval_topk(feats, labels, static_cast<int>(cfg.embed_dim),
                               {1, 5, 10, 20, 50});

  // Segmentation transfer regimes. Fine-tuning starts from a saved copy of
  // the pretrained weights, or from a fresh initialization.
  std::string ckpt = work_dir + "/seed_" + std::to_string(seed) + ".ckpt";
  enc.store.save(ckpt);
  auto seg_run = [&](bool pretrained, bool freeze, double fraction) {
    Encoders<float> e(cfg, pretrained ? seed : seed + 500);
    if (pretrained) e.store.load(ckpt);
    SegTrainConfig sc;
    sc.epochs = 20;
    sc.freeze_base = freeze;
    sc.train_fraction = fraction;
    sc.seed = seed;
    finetune_segmentation(e, store, sc);
    return evaluate_segmentation(e, store).instance_miou;
  };
  r.miou_unfrozen = seg_run(true, false, 1.0);
  r.miou_frozen = seg_run(true, true, 1.0);
  r.miou_random_frozen = seg_run(false, true, 1.0);
  r.miou_scratch = seg_run(false, false, 1.0);
  r.miou_unfrozen_10 = seg_run(true, false, 0.1);
  r.miou_scratch_10 = seg_run(false, false, 0.1);
  return r;
}

bool criterion5(Gate& g, const DataStore& store, const std::string& work_dir) {
  const std::vector<uint64_t> seeds{1, 2, 3};
  std::vector<SeedResult> res(seeds.size());
  std::vector<std::thread> pool;
  for (size_t i = 0; i < seeds.size(); ++i)
    pool.emplace_back(
        [&, i]() { res[i] = run_seed(store, seeds[i], work_dir); });
  for (auto& t : pool) t.join();

  bool ok = true;
  auto mean_of = [&](auto f) {
    double m = 0;
    for (const auto& r : res) m += f(r) / static_cast<double>(res.size());
    return m;
  };
  char buf[256];

  bool halved = true;
  for (const auto& r : res)
    halved = halved && r.last100_mean < 0.5 * r.first100_mean;
  std::snprintf(buf, sizeof(buf),
                "loss halves: first/last 100-iteration means %.3f -> %.3f (seed 1)",
                res[0].first100_mean, res[0].last100_mean);
  ok = g.sub(halved, buf) && ok;

  bool a = true;
  for (const auto& r : res) a = a && r.cm_accuracy >= 0.85;
  std::snprintf(buf, sizeof(buf),
                "5a cross-modality accuracy >= 0.85 each seed: %.3f %.3f %.3f",
                res[0].cm_accuracy, res[1].cm_accuracy, res[2].cm_accuracy);
  ok = g.sub(a, buf) && ok;

  bool b = true;
  for (const auto& r : res)
    b = b && r.pair_stats.positive_mpd + r.pair_stats.positive_std <
                 r.pair_stats.negative_mpd;
  std::snprintf(buf, sizeof(buf),
                "5b pos_mpd + pos_std < neg_mpd each seed: %.3f+%.3f vs %.3f (seed 1)",
                res[0].pair_stats.positive_mpd, res[0].pair_stats.positive_std,
                res[0].pair_stats.negative_mpd);
  ok = g.sub(b, buf) && ok;

  bool c = true;
  for (const auto& r : res) c = c && r.probe_3d >= 0.90;
  std::snprintf(buf, sizeof(buf),
                "5c 3D probe accuracy >= 0.90 each seed: %.3f %.3f %.3f",
                res[0].probe_3d, res[1].probe_3d, res[2].probe_3d);
  ok = g.sub(c, buf) && ok;

  bool d = true;
  for (const auto& r : res) d = d && r.probe_2d_v8 >= r.probe_2d_v1 - 0.02;
  double v1m = mean_of([](const SeedResult& r) { return r.probe_2d_v1; });
  double v8m = mean_of([](const SeedResult& r) { return r.probe_2d_v8; });
  d = d && v8m > v1m;
  std::snprintf(buf, sizeof(buf),
                "5d multi-view 2D probe gain: seed-mean v=1 %.3f, v=8 %.3f",
                v1m, v8m);
  ok = g.sub(d, buf) && ok;

  bool e = true;
  for (const auto& r : res) {
    e = e && r.retrieval.at(1) >= 0.80;
    double prev = 0;
    for (const auto& [k, v] : r.retrieval) {
      e = e && v >= prev;
      prev = v;
    }
  }
  std::snprintf(buf, sizeof(buf),
                "5e retrieval top-1 >= 0.80 and top-k nondecreasing: %.3f %.3f %.3f",
                res[0].retrieval.at(1), res[1].retrieval.at(1),
                res[2].retrieval.at(1));
  ok = g.sub(e, buf) && ok;

  double unf = mean_of([](const SeedResult& r) { return r.miou_unfrozen; });
  double fro = mean_of([](const SeedResult& r) { return r.miou_frozen; });
  double rnd = mean_of([](const SeedResult& r) { return r.miou_random_frozen; });
  double scr = mean_of([](const SeedResult& r) { return r.miou_scratch; });
  double unf10 = mean_of([](const SeedResult& r) { return r.miou_unfrozen_10; });
  double scr10 = mean_of([](const SeedResult& r) { return r.miou_scratch_10; });
  bool f = unf >= fro && fro >= rnd && unf >= 0.75 &&
           (unf10 - scr10) >= (unf - scr) - 0.02;
  std::snprintf(buf, sizeof(buf),
                "5f seed-mean mIoU unfrozen %.3f >= frozen %.3f >= random-frozen "
                "%.3f; low-data gap %.3f vs full gap %.3f",
                unf, fro, rnd, unf10 - scr10, unf - scr);
  ok = g.sub(f, buf) && ok;
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 6: determinism
// ---------------------------------------------------------------------------

bool criterion6(Gate& g, const DataStore& store) {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.total_iterations = 10;
  cfg.seed = 123;
  cfg.deterministic = true;
  cfg.checkpoint_every = 0;
  Encoders<float> a(EncoderConfig::toy(), 9);
  Encoders<float> b(EncoderConfig::toy(), 9);
  auto ta = pretrain(a, store, cfg);
  auto tb = pretrain(b, store, cfg);
  bool equal = ta.size() == tb.size();
  for (size_t i = 0; equal && i < ta.size(); ++i)
    equal = ta[i].l_triplet == tb[i].l_triplet &&
            ta[i].l_cross == tb[i].l_cross && ta[i].l_self == tb[i].l_self;
  return g.sub(equal, "two 10-iteration runs produce bitwise-identical traces");
}

// ---------------------------------------------------------------------------
// Criterion 7: joint-optimization structure
// ---------------------------------------------------------------------------

bool criterion7(Gate& g, const DataStore& store) {
  Encoders<float> enc(EncoderConfig::toy(), 55);
  std::mt19937 rng(55);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 4; ++i)
    samples.push_back(assemble_sample(store, store.train_indices[i], rng));

  auto run = [&](float beta) {
    auto batch = detail::pack_batch<float>(samples);
    auto f1 = enc.forward_image(batch.images[0], Mode::Train);
    auto f2 = enc.forward_image(batch.images[1], Mode::Train);
    auto f3 = enc.forward_image(batch.images[2], Mode::Train);
    auto fp = enc.forward_point(batch.clouds, Mode::Train).global_feat;
    std::array<Tensor<float>, 3> preds{enc.forward_fusion(f1, fp),
                                       enc.forward_fusion(f2, fp),
                                       enc.forward_fusion(f3, fp)};
    auto l = combined_loss(triplet_loss(f1, f2, f3, 1.f),
                           cross_modality_loss<float>(preds, {1, 1, 0}), beta);
    enc.store.zero_grad();
    backward(l);
  };
  auto grad_norm = [&](const std::string& prefix) {
    double norm = 0;
    for (const auto& name : enc.store.trainable_names(prefix)) {
      auto& p = enc.store.get(name);
      if (!p.has_grad()) continue;
      for (float v : p.grad()) norm += static_cast<double>(v) * v;
    }
    return norm;
  };

  run(1.f);
  bool generic = grad_norm("img.") > 0 && grad_norm("pnt.") > 0 &&
                 grad_norm("fus.") > 0;
  bool ok = g.sub(generic, "beta=1: nonzero gradients in F_img, F_p, F_f");

  run(0.f);
  bool decoupled = grad_norm("img.") > 0 && grad_norm("pnt.") == 0 &&
                   grad_norm("fus.") == 0;
  ok = g.sub(decoupled,
             "beta=0: F_p and F_f gradients exactly zero, F_img nonzero") && ok;
  return ok;
}

}  // namespace

int main() {
  namespace fs = std::filesystem;
  Gate gate;

  // Shared toy-study dataset: 3 classes x 100 objects, 8 views at 32x32,
  // 256-point clouds. Generation is resumable, so reruns are fast.
  std::string data_root =
      (fs::temp_directory_path() / "crossmodal_acceptance_data").string();
  std::string work_dir =
      (fs::temp_directory_path() / "crossmodal_acceptance_work").string();
  fs::create_directories(work_dir);
  {
    std::vector<std::string> classes{"sphere", "box", "cylinder"};
    std::mt19937 rng(7);
    auto meshes = generate_toy_dataset(classes, 100, rng);
    auto splits = assign_splits(meshes.size(), 0.2, rng);
    GenConfig gen;
    gen.views = 8;
    gen.width = 32;
    gen.height = 32;
    gen.cloud_points = 256;
    gen.seed = 7;
    int failed = generate_dataset(meshes, splits, classes, data_root, gen,
                                  RenderConfig{});
    CM_CHECK(failed == 0, failed << " dataset objects failed to generate");
  }
  DataStore store = DataStore::open(data_root);
  store.load_payloads();

  auto timed = [&](int n, const std::string& what, auto fn) {
    auto t0 = Clock::now();
    bool ok = fn();
    gate.criterion(n, ok, what, seconds_since(t0));
  };
  timed(1, "gradient checks, primitives and composed networks",
        [&]() { return criterion1(gate); });
  timed(2, "geometry oracles", [&]() { return criterion2(gate); });
  timed(3, "renderer analytics", [&]() { return criterion3(gate); });
  timed(4, "loss identities", [&]() { return criterion4(gate, store); });
  timed(5, "toy training study",
        [&]() { return criterion5(gate, store, work_dir); });
  timed(6, "determinism", [&]() { return criterion6(gate, store); });
  timed(7, "joint-optimization structure",
        [&]() { return criterion7(gate, store); });

  std::printf("%s\n", gate.all_ok ? "ALL CRITERIA PASSED"
                                  : "SOME CRITERIA FAILED");
  return gate.all_ok ? 0 : 1;
}
