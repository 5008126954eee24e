#include <doctest.h>

#include <filesystem>
#include <random>

#include "crossmodal/encoders.hpp"

using namespace crossmodal;

namespace {

Tensor<float> random_cloud_batch(int64_t b, int64_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> coord(-1.f, 1.f);
  Tensor<float> t({b, n, 3});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = coord(rng);
  return t;
}

Tensor<float> random_image_batch(int64_t b, int64_t hw, std::mt19937& rng) {
  std::uniform_real_distribution<float> val(0.f, 1.f);
  Tensor<float> t({b, 1, hw, hw});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = val(rng);
  return t;
}

}  // namespace

TEST_CASE("forward_image shape, determinism, numeric sanity") {
  Encoders<float> enc(EncoderConfig::toy(), 42);
  std::mt19937 rng(1);
  auto imgs = random_image_batch(2, 32, rng);
  auto f = enc.forward_image(imgs, Mode::Eval);
  REQUIRE(f.shape() == Shape{2, enc.config.embed_dim});

  // Duplicated rows give identical features; repeated eval calls are pure.
  Tensor<float> dup({2, 1, 32, 32});
  for (int64_t i = 0; i < 1024; ++i) {
    dup.data()[i] = imgs.data()[i];
    dup.data()[1024 + i] = imgs.data()[i];
  }
  auto fd = enc.forward_image(dup, Mode::Eval);
  for (int64_t d = 0; d < enc.config.embed_dim; ++d)
    CHECK(fd.data()[d] == fd.data()[enc.config.embed_dim + d]);
  auto f2 = enc.forward_image(imgs, Mode::Eval);
  CHECK(f.values() == f2.values());

  Tensor<float> zeros({1, 1, 32, 32}, 0.f);
  auto fz = enc.forward_image(zeros, Mode::Eval);
  for (int64_t i = 0; i < fz.size(); ++i)
    CHECK(std::isfinite(fz.data()[i]));
}

TEST_CASE("knn_graph wrapper enforces k < n") {
  Encoders<float> enc(EncoderConfig::toy(), 42);
  std::mt19937 rng(2);
  auto cloud = random_cloud_batch(1, 8, rng);
  CHECK_THROWS_AS(knn_graph(cloud, 8), std::runtime_error);
  auto idx = knn_graph(cloud, 7);
  CHECK(idx.size() == 8 * 7);
}

TEST_CASE("forward_point shapes and exact permutation invariance") {
  Encoders<float> enc(EncoderConfig::toy(), 7);
  std::mt19937 rng(3);
  int64_t n = 64;
  auto cloud = random_cloud_batch(2, n, rng);
  auto out = enc.forward_point(cloud, Mode::Eval);
  CHECK(out.per_point.shape() == Shape{2, n, enc.config.embed_dim});
  CHECK(out.global_feat.shape() == Shape{2, enc.config.embed_dim});
  REQUIRE(out.block_outputs.size() == 4);
  for (size_t i = 0; i < 4; ++i)
    CHECK(out.block_outputs[i].shape() ==
          Shape{2, n, enc.config.point_widths[i]});

  // Shuffle the points of each batch row; global feature must be bitwise equal.
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<float> shuffled({2, n, 3});
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 3; ++c)
        shuffled.data()[(b * n + i) * 3 + c] =
            cloud.data()[(b * n + perm[static_cast<size_t>(i)]) * 3 + c];
  auto out_p = enc.forward_point(shuffled, Mode::Eval);
  CHECK(out_p.global_feat.values() == out.global_feat.values());
  // Per-point features follow the permutation (equivariance).
  int64_t e = enc.config.embed_dim;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t d = 0; d < e; ++d)
      CHECK(out_p.per_point.data()[i * e + d] ==
            out.per_point.data()[perm[static_cast<size_t>(i)] * e + d]);

  CHECK_THROWS_AS(enc.forward_point(random_cloud_batch(1, 8, rng), Mode::Eval),
                  std::runtime_error);  // n < k+1
}

TEST_CASE("forward_fusion softmax arithmetic") {
  EncoderConfig cfg = EncoderConfig::toy();
  Encoders<float> enc(cfg, 11);
  std::mt19937 rng(4);
  std::uniform_real_distribution<float> val(-1.f, 1.f);
  Tensor<float> fi({3, cfg.embed_dim}), fp({3, cfg.embed_dim});
  for (int64_t i = 0; i < fi.size(); ++i) {
    fi.data()[i] = val(rng);
    fp.data()[i] = val(rng);
  }
  auto prob = enc.forward_fusion(fi, fp);
  REQUIRE(prob.shape() == Shape{3});
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(prob.data()[i] > 0.f);
    CHECK(prob.data()[i] < 1.f);
  }

  // Zero weights -> symmetric logits -> probability exactly 0.5.
  for (const char* name : {"fus.l1.w", "fus.l1.b", "fus.l2.w", "fus.l2.b"})
    std::fill(enc.store.get(name).values().begin(),
              enc.store.get(name).values().end(), 0.f);
  auto half = enc.forward_fusion(fi, fp);
  for (int64_t i = 0; i < 3; ++i) CHECK(half.data()[i] == 0.5f);

  // Hand-set logits (2, 0): bias-only network.
  enc.store.get("fus.l2.b").values() = {2.f, 0.f};
  auto skew = enc.forward_fusion(fi, fp);
  for (int64_t i = 0; i < 3; ++i)
    CHECK(skew.data()[i] ==
          doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-6));
}

TEST_CASE("forward_segmentation shape, equivariance, freeze contract") {
  EncoderConfig cfg = EncoderConfig::toy();
  Encoders<float> no_head(cfg, 5);
  std::mt19937 rng(5);
  auto cloud = random_cloud_batch(1, 32, rng);
  CHECK_THROWS_AS(no_head.forward_segmentation(cloud, Mode::Eval),
                  std::runtime_error);

  cfg.num_parts = 5;
  Encoders<float> enc(cfg, 5);
  auto logits = enc.forward_segmentation(cloud, Mode::Eval);
  CHECK(logits.shape() == Shape{1, 32, 5});

  // Frozen base: after backward, base parameters have zero gradient.
  enc.store.set_trainable("img.", false);
  enc.store.set_trainable("fus.", false);
  enc.store.set_trainable("pnt.", false);
  enc.store.zero_grad();
  auto logits2 = enc.forward_segmentation(cloud, Mode::Eval);
  std::vector<int> labels(32, 2);
  auto loss = softmax_cross_entropy(logits2, labels);
  backward(loss);
  for (const auto& name : enc.store.names()) {
    if (name.rfind("pnt.", 0) != 0) continue;
    auto& p = enc.store.get(name);
    if (!p.has_grad()) continue;
    for (float g : p.grad()) CHECK(g == 0.f);
  }
  bool seg_nonzero = false;
  for (float g : enc.store.get("seg.out.w").grad())
    if (g != 0.f) seg_nonzero = true;
  CHECK(seg_nonzero);
  enc.store.set_trainable("pnt.", true);
}

TEST_CASE("checkpoint save/load round trip and mismatch diagnostics") {
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "cm_ckpt_test.ckpt").string();
  Encoders<float> a(EncoderConfig::toy(), 21);
  a.store.set_scalar("meta.iteration", 123.f);
  a.store.save(path);

  Encoders<float> b(EncoderConfig::toy(), 99);
  b.store.load(path);
  for (const auto& name : a.store.names())
    CHECK(b.store.get(name).values() == a.store.get(name).values());
  CHECK(b.store.scalar("meta.iteration") == 123.f);

  // Width mismatch names the offending tensor.
  Encoders<float> wide(EncoderConfig::full(), 1);
  CHECK_THROWS_WITH_AS(wide.store.load(path), doctest::Contains("img.stem"),
                       std::runtime_error);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg = EncoderConfig::toy();
  cfg.embed_dim = 32;  // != last image width
  CHECK_THROWS_AS(Encoders<float>(cfg, 0), std::runtime_error);
}
