#pragma once

#include "crossmodal/ops.hpp"
#include "crossmodal/params.hpp"

namespace crossmodal {

struct EncoderConfig {
  std::vector<int64_t> image_channels{64, 128, 256, 512};
  std::vector<int64_t> point_widths{64, 64, 64, 128};
  int64_t embed_dim = 512;
  int64_t k = 20;
  int64_t fusion_hidden = 256;
  int64_t input_channels = 1;
  int64_t stem_stride = 2;  // 1 at toy resolution to preserve spatial extent
  double leaky_slope = 0.2;
  std::vector<int64_t> seg_hidden{256, 256, 128};
  int64_t num_parts = 0;  // 0 = no segmentation head

  static EncoderConfig full() { return {}; }

  // Minute-scale profile: conv trunks divided by 8, 64-d embedding; the
  // point trunk, k, and the fusion hidden width are kept larger because the
  // cross-modality head is capacity-bound at toy scale.
  static EncoderConfig toy() {
    EncoderConfig c;
    c.image_channels = {8, 16, 32, 64};
    c.point_widths = {16, 16, 32, 64};
    c.embed_dim = 64;
    c.k = 12;
    c.fusion_hidden = 256;
    c.stem_stride = 1;
    c.seg_hidden = {32, 32, 16};
    return c;
  }

  void validate() const {
    CM_CHECK(image_channels.size() == 4 && point_widths.size() == 4,
             "encoder config needs 4 image blocks and 4 point blocks");
    for (int64_t w : image_channels) CM_CHECK(w >= 1, "non-positive width");
    for (int64_t w : point_widths) CM_CHECK(w >= 1, "non-positive width");
    CM_CHECK(k >= 1, "k must be >= 1");
    CM_CHECK(embed_dim == image_channels.back(),
             "embed_dim must equal the last image block width ("
                 << image_channels.back() << "), got " << embed_dim);
  }

  int64_t point_concat_width() const {
    int64_t s = 0;
    for (int64_t w : point_widths) s += w;
    return s;
  }
};

// KNN neighbor indices in the given feature space, self excluded, lowest
// index wins ties. features: [B,n,D].
template <class T>
std::vector<int64_t> knn_graph(const Tensor<T>& features, int64_t k) {
  CM_CHECK(features.rank() == 3, "knn_graph expects [B,n,D]");
  CM_CHECK(k < features.dim(1), "knn_graph requires k < n (k=" << k << ", n="
                                                               << features.dim(1) << ")");
  return knn_indices(features.data(), features.dim(0), features.dim(1),
                     features.dim(2), k);
}

template <class T>
struct PointForward {
  Tensor<T> per_point;                  // [B,n,embed]
  Tensor<T> global_feat;                // [B,embed]
  std::vector<Tensor<T>> block_outputs; // 4 x [B,n,w_i]
};

// The three networks plus the optional segmentation head, all over one
// parameter store. Names are stable across save/load:
//   img.* / pnt.* / fus.* / seg.*
template <class T>
class Encoders {
 public:
  EncoderConfig config;
  ParamStore<T> store;

  Encoders(EncoderConfig cfg, uint64_t seed) : config(std::move(cfg)) {
    config.validate();
    std::mt19937 rng(static_cast<uint32_t>(seed));
    init_image(rng);
    init_point(rng);
    init_fusion(rng);
    if (config.num_parts > 0) init_segmentation(rng);
    store.set_scalar("meta.iteration", T(0));
    store.set_scalar("meta.seed", static_cast<T>(seed));
  }

  // --- F_img: ResNet18-style stem + three residual two-conv blocks + GAP ---
  Tensor<T> forward_image(const Tensor<T>& images, Mode mode) {
    CM_CHECK(images.rank() == 4, "forward_image expects [B,1,H,W]");
    CM_CHECK(images.dim(1) == config.input_channels,
             "forward_image channel mismatch");
    CM_CHECK(images.dim(2) >= 16 && images.dim(3) >= 16,
             "forward_image needs H,W >= 16");
    auto y = conv_bn_relu("img.stem", images, config.stem_stride, mode);
    y = max_pool2d(y);
    for (int i = 1; i <= 3; ++i) {
      std::string p = "img.block" + std::to_string(i);
      auto main = conv_bn_relu(p + ".conv1", y, 2, mode);
      main = conv_bn(p + ".conv2", main, 1, mode);
      auto skip = conv_bn(p + ".proj", y, 2, mode);
      y = relu(add(main, skip));
    }
    return global_avg_pool(y);  // [B, embed]
  }

  // --- F_p: four EdgeConv blocks with dynamically rebuilt KNN graphs ---
  PointForward<T> forward_point(const Tensor<T>& clouds, Mode mode) {
    CM_CHECK(clouds.rank() == 3 && clouds.dim(2) == 3,
             "forward_point expects [B,n,3]");
    CM_CHECK(clouds.dim(1) >= config.k + 1,
             "forward_point needs n >= k+1 points (n=" << clouds.dim(1)
                                                       << ", k=" << config.k << ")");
    PointForward<T> out;
    Tensor<T> feat = clouds;
    for (int i = 0; i < 4; ++i) {
      auto idx = knn_graph(feat, config.k);
      feat = edge_conv("pnt.block" + std::to_string(i), feat, idx, mode);
      out.block_outputs.push_back(feat);
    }
    auto cat = concat_lastdim(out.block_outputs);  // [B,n,sum(w)]
    auto pp = linear(cat, store.get("pnt.fc.w"), store.get("pnt.fc.b"));
    pp = batch_norm_lastdim(pp, store.get("pnt.fc.bn.gamma"),
                            store.get("pnt.fc.bn.beta"),
                            store.get("pnt.fc.bn.rmean"),
                            store.get("pnt.fc.bn.rvar"), mode);
    pp = leaky_relu(pp, T(config.leaky_slope));
    out.per_point = pp;                 // [B,n,embed]
    out.global_feat = max_over_set(pp); // [B,embed]
    return out;
  }

  // Shared two-layer edge MLP over (x_i, x_j - x_i), max over the k edges.
  Tensor<T> edge_conv(const std::string& prefix, const Tensor<T>& features,
                      const std::vector<int64_t>& neighbors, Mode mode) {
    int64_t k = config.k;
    auto gathered = gather_points(features, neighbors, k);  // [B,n,k,D]
    auto center = insert_repeat(features, 2, k);            // [B,n,k,D]
    auto edge = concat_lastdim<T>({center, sub(gathered, center)});
    auto h = lin_bn_lrelu(prefix + ".l1", edge, mode);
    h = lin_bn_lrelu(prefix + ".l2", h, mode);
    return reduce_max_axis(h, 2);  // [B,n,w]
  }

  // --- F_f: concat -> hidden relu -> 2 logits -> softmax, P(same object) ---
  Tensor<T> forward_fusion(const Tensor<T>& image_feat,
                           const Tensor<T>& point_feat) {
    CM_CHECK(image_feat.shape() == point_feat.shape() &&
                 image_feat.dim(-1) == config.embed_dim,
             "forward_fusion feature shape mismatch");
    auto x = concat_lastdim<T>({image_feat, point_feat});
    x = relu(linear(x, store.get("fus.l1.w"), store.get("fus.l1.b")));
    auto logits = linear(x, store.get("fus.l2.w"), store.get("fus.l2.b"));
    return select_lastdim(softmax_lastdim(logits), 1);  // [B]
  }

  // --- Part segmentation head over block outputs + broadcast global feature ---
  Tensor<T> forward_segmentation(const Tensor<T>& clouds, Mode mode) {
    CM_CHECK(config.num_parts > 0,
             "segmentation head not configured (num_parts == 0)");
    auto pf = forward_point(clouds, mode);
    int64_t n = clouds.dim(1);
    auto inputs = pf.block_outputs;
    inputs.push_back(insert_repeat(pf.global_feat, 1, n));  // [B,n,embed]
    auto x = concat_lastdim(inputs);
    for (size_t i = 0; i < config.seg_hidden.size(); ++i) {
      std::string p = "seg.l" + std::to_string(i);
      x = relu(linear(x, store.get(p + ".w"), store.get(p + ".b")));
    }
    return linear(x, store.get("seg.out.w"), store.get("seg.out.b"));
  }

 private:
  void create_conv(const std::string& prefix, int64_t cout, int64_t cin,
                   int64_t ksize, std::mt19937& rng) {
    int64_t fan_in = cin * ksize * ksize;
    store.create(prefix + ".w", {cout, cin, ksize, ksize},
                 uniform_init<T>(cout * fan_in, fan_in, rng));
    store.create(prefix + ".b", {cout}, uniform_init<T>(cout, fan_in, rng));
  }
  void create_bn(const std::string& prefix, int64_t ch) {
    store.create(prefix + ".gamma", {ch}, std::vector<T>(static_cast<size_t>(ch), T(1)),
                 true, /*decay=*/false);
    store.create(prefix + ".beta", {ch}, std::vector<T>(static_cast<size_t>(ch), T(0)),
                 true, /*decay=*/false);
    store.create(prefix + ".rmean", {ch}, std::vector<T>(static_cast<size_t>(ch), T(0)),
                 /*trainable=*/false, false);
    store.create(prefix + ".rvar", {ch}, std::vector<T>(static_cast<size_t>(ch), T(1)),
                 /*trainable=*/false, false);
  }
  void create_linear(const std::string& prefix, int64_t out, int64_t in,
                     std::mt19937& rng) {
    store.create(prefix + ".w", {out, in}, uniform_init<T>(out * in, in, rng));
    store.create(prefix + ".b", {out}, uniform_init<T>(out, in, rng));
  }

  void init_image(std::mt19937& rng) {
    const auto& ch = config.image_channels;
    create_conv("img.stem.conv", ch[0], config.input_channels, 3, rng);
    create_bn("img.stem.bn", ch[0]);
    for (int i = 1; i <= 3; ++i) {
      std::string p = "img.block" + std::to_string(i);
      create_conv(p + ".conv1.conv", ch[static_cast<size_t>(i)],
                  ch[static_cast<size_t>(i - 1)], 3, rng);
      create_bn(p + ".conv1.bn", ch[static_cast<size_t>(i)]);
      create_conv(p + ".conv2.conv", ch[static_cast<size_t>(i)],
                  ch[static_cast<size_t>(i)], 3, rng);
      create_bn(p + ".conv2.bn", ch[static_cast<size_t>(i)]);
      create_conv(p + ".proj.conv", ch[static_cast<size_t>(i)],
                  ch[static_cast<size_t>(i - 1)], 1, rng);
      create_bn(p + ".proj.bn", ch[static_cast<size_t>(i)]);
    }
  }

  void init_point(std::mt19937& rng) {
    int64_t in = 3;
    for (int i = 0; i < 4; ++i) {
      std::string p = "pnt.block" + std::to_string(i);
      int64_t w = config.point_widths[static_cast<size_t>(i)];
      create_linear(p + ".l1", w, 2 * in, rng);
      create_bn(p + ".l1.bn", w);
      create_linear(p + ".l2", w, w, rng);
      create_bn(p + ".l2.bn", w);
      in = w;
    }
    create_linear("pnt.fc", config.embed_dim, config.point_concat_width(), rng);
    create_bn("pnt.fc.bn", config.embed_dim);
  }

  void init_fusion(std::mt19937& rng) {
    create_linear("fus.l1", config.fusion_hidden, 2 * config.embed_dim, rng);
    create_linear("fus.l2", 2, config.fusion_hidden, rng);
  }

  void init_segmentation(std::mt19937& rng) {
    int64_t in = config.point_concat_width() + config.embed_dim;
    for (size_t i = 0; i < config.seg_hidden.size(); ++i) {
      create_linear("seg.l" + std::to_string(i), config.seg_hidden[i], in, rng);
      in = config.seg_hidden[i];
    }
    create_linear("seg.out", config.num_parts, in, rng);
  }

  Tensor<T> conv_bn(const std::string& prefix, const Tensor<T>& x,
                    int64_t stride, Mode mode) {
    auto y = conv2d(x, store.get(prefix + ".conv.w"),
                    store.get(prefix + ".conv.b"), stride);
    return batch_norm2d(y, store.get(prefix + ".bn.gamma"),
                        store.get(prefix + ".bn.beta"),
                        store.get(prefix + ".bn.rmean"),
                        store.get(prefix + ".bn.rvar"), mode);
  }
  Tensor<T> conv_bn_relu(const std::string& prefix, const Tensor<T>& x,
                         int64_t stride, Mode mode) {
    return relu(conv_bn(prefix, x, stride, mode));
  }
  Tensor<T> lin_bn_lrelu(const std::string& prefix, const Tensor<T>& x,
                         Mode mode) {
    auto y = linear(x, store.get(prefix + ".w"), store.get(prefix + ".b"));
    y = batch_norm_lastdim(y, store.get(prefix + ".bn.gamma"),
                           store.get(prefix + ".bn.beta"),
                           store.get(prefix + ".bn.rmean"),
                           store.get(prefix + ".bn.rvar"), mode);
    return leaky_relu(y, T(config.leaky_slope));
  }
};

}  // namespace crossmodal
