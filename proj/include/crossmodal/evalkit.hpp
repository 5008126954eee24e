#pragma once

#include <map>

#include "crossmodal/datasets.hpp"
#include "crossmodal/encoders.hpp"
#include "crossmodal/trainer.hpp"

namespace crossmodal {

struct PairStats {
  double positive_mpd = 0, positive_std = 0;
  double negative_mpd = 0, negative_std = 0;
};

struct EvalConfig {
  int test_views = 1;
  std::vector<int> top_k{1, 5, 10, 20, 50};
  double decision_threshold = 0.5;
};

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

// Per-view image features for one object, eval mode, batched over views.
template <class T>
std::vector<std::vector<float>> image_features(Encoders<T>& enc,
                                               const DataStore& store,
                                               int obj, int max_views = -1) {
  const auto& imgs = store.views[static_cast<size_t>(obj)];
  int v = max_views < 0 ? static_cast<int>(imgs.size())
                        : std::min<int>(max_views, static_cast<int>(imgs.size()));
  int64_t h = imgs[0].height, w = imgs[0].width;
  Tensor<T> batch({v, 1, h, w});
  for (int i = 0; i < v; ++i)
    std::transform(imgs[static_cast<size_t>(i)].pixels.begin(),
                   imgs[static_cast<size_t>(i)].pixels.end(),
                   batch.data() + static_cast<int64_t>(i) * h * w,
                   [](float x) { return static_cast<T>(x); });
  auto feats = enc.forward_image(batch, Mode::Eval);
  int64_t d = feats.dim(1);
  std::vector<std::vector<float>> out(static_cast<size_t>(v));
  for (int i = 0; i < v; ++i) {
    out[static_cast<size_t>(i)].resize(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j)
      out[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          static_cast<float>(feats.data()[i * d + j]);
  }
  return out;
}

template <class T>
std::vector<float> point_feature(Encoders<T>& enc, const DataStore& store,
                                 int obj) {
  const auto& cl = store.clouds[static_cast<size_t>(obj)];
  int64_t n = static_cast<int64_t>(cl.size());
  Tensor<T> batch({1, n, 3});
  for (int64_t p = 0; p < n; ++p) {
    batch.data()[p * 3 + 0] = static_cast<T>(cl.points[static_cast<size_t>(p)].x);
    batch.data()[p * 3 + 1] = static_cast<T>(cl.points[static_cast<size_t>(p)].y);
    batch.data()[p * 3 + 2] = static_cast<T>(cl.points[static_cast<size_t>(p)].z);
  }
  auto g = enc.forward_point(batch, Mode::Eval).global_feat;
  std::vector<float> out(static_cast<size_t>(g.size()));
  for (int64_t i = 0; i < g.size(); ++i)
    out[static_cast<size_t>(i)] = static_cast<float>(g.data()[i]);
  return out;
}

// Elementwise max over per-view features; v=1 returns the single feature.
inline std::vector<float> multiview_feature(
    const std::vector<std::vector<float>>& view_features) {
  CM_CHECK(!view_features.empty(), "multiview_feature of zero views");
  std::vector<float> out = view_features[0];
  for (size_t v = 1; v < view_features.size(); ++v)
    for (size_t d = 0; d < out.size(); ++d)
      out[d] = std::max(out[d], view_features[v][d]);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-modality protocols (Table 1 analogs)
// ---------------------------------------------------------------------------

template <class T>
double cross_modality_accuracy(Encoders<T>& enc, const DataStore& store,
                               const EvalPairSet& pairs,
                               double threshold = 0.5) {
  CM_CHECK(pairs.kind == "2d3d", "cross_modality_accuracy expects 2D-3D pairs");
  CM_CHECK(!pairs.pairs.empty(), "empty pair set");
  std::map<int, std::vector<std::vector<float>>> img_cache;
  std::map<int, std::vector<float>> pnt_cache;
  int64_t correct = 0;
  int64_t d = enc.config.embed_dim;
  for (const auto& p : pairs.pairs) {
    if (!img_cache.count(p.obj_a))
      img_cache[p.obj_a] = image_features(enc, store, p.obj_a);
    if (!pnt_cache.count(p.obj_b))
      pnt_cache[p.obj_b] = point_feature(enc, store, p.obj_b);
    const auto& fa = img_cache[p.obj_a][static_cast<size_t>(p.view_a)];
    Tensor<T> fi({1, d}), fp({1, d});
    for (int64_t i = 0; i < d; ++i) {
      fi.data()[i] = static_cast<T>(fa[static_cast<size_t>(i)]);
      fp.data()[i] = static_cast<T>(pnt_cache[p.obj_b][static_cast<size_t>(i)]);
    }
    double prob = static_cast<double>(enc.forward_fusion(fi, fp).item());
    int pred = prob > threshold ? 1 : 0;
    if (pred == p.same) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.pairs.size());
}

template <class T>
PairStats pair_distance_stats(Encoders<T>& enc, const DataStore& store,
                              const EvalPairSet& pairs) {
  CM_CHECK(pairs.kind == "2d2d", "pair_distance_stats expects 2D-2D pairs");
  std::map<int, std::vector<std::vector<float>>> cache;
  auto feat = [&](int obj, int view) -> const std::vector<float>& {
    if (!cache.count(obj)) cache[obj] = image_features(enc, store, obj);
    return cache[obj][static_cast<size_t>(view)];
  };
  std::vector<double> pos, neg;
  for (const auto& p : pairs.pairs) {
    const auto& a = feat(p.obj_a, p.view_a);
    const auto& b = feat(p.obj_b, p.view_b);
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      double dd = static_cast<double>(a[i]) - b[i];
      acc += dd * dd;
    }
    (p.same ? pos : neg).push_back(std::sqrt(acc));
  }
  CM_CHECK(!pos.empty() && !neg.empty(), "a pair polarity class is empty");
  auto stats = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  PairStats out;
  std::tie(out.positive_mpd, out.positive_std) = stats(pos);
  std::tie(out.negative_mpd, out.negative_std) = stats(neg);
  return out;
}

// ---------------------------------------------------------------------------
// Recognition probe (Table 2 analog)
// ---------------------------------------------------------------------------

template <class T>
double recognition_probe(Encoders<T>& enc, const DataStore& store,
                         const std::string& modality, int v,
                         const ProbeConfig& probe_cfg = {}) {
  CM_CHECK(modality == "2d" || modality == "3d", "modality must be 2d or 3d");
  auto collect = [&](const std::vector<int>& indices, std::vector<float>& feats,
                     std::vector<int>& labels) {
    for (int obj : indices) {
      std::vector<float> f;
      if (modality == "3d") {
        f = point_feature(enc, store, obj);
      } else {
        f = multiview_feature(image_features(enc, store, obj, v));
      }
      feats.insert(feats.end(), f.begin(), f.end());
      labels.push_back(store.objects[static_cast<size_t>(obj)].cls_id);
    }
  };
  std::vector<float> train_f, test_f;
  std::vector<int> train_l, test_l;
  collect(store.train_indices, train_f, train_l);
  collect(store.test_indices, test_f, test_l);
  int num_classes = static_cast<int>(store.catalog.classes.size());
  int dim = static_cast<int>(enc.config.embed_dim);
  auto probe = train_linear_probe(train_f, train_l, num_classes, dim, probe_cfg);
  return probe_accuracy(probe, test_f, test_l);
}

// ---------------------------------------------------------------------------
// Retrieval (Table 3 analog)
// ---------------------------------------------------------------------------

// Leave-one-out top-k hit rates: for each query, rank the rest of the gallery
// by ascending Euclidean distance; hit@k iff any of the k nearest shares the
// query's class.
inline std::map<int, double> retrieval_topk(const std::vector<float>& features,
                                            const std::vector<int>& labels,
                                            int dim,
                                            const std::vector<int>& k_list) {
  int64_t count = static_cast<int64_t>(labels.size());
  CM_CHECK(count >= 2, "retrieval needs at least 2 items");
  int max_k = *std::max_element(k_list.begin(), k_list.end());
  CM_CHECK(max_k <= count - 1, "k exceeds gallery size");

  std::map<int, int64_t> hits;
  for (int k : k_list) hits[k] = 0;
  std::vector<std::pair<double, int64_t>> dist(static_cast<size_t>(count));
  for (int64_t q = 0; q < count; ++q) {
    const float* fq = features.data() + q * dim;
    for (int64_t g = 0; g < count; ++g) {
      double acc = 0;
      const float* fg = features.data() + g * dim;
      for (int d = 0; d < dim; ++d) {
        double dd = static_cast<double>(fq[d]) - fg[d];
        acc += dd * dd;
      }
      dist[static_cast<size_t>(g)] = {acc, g};
    }
    dist[static_cast<size_t>(q)].first = std::numeric_limits<double>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + max_k, dist.end());
    for (int k : k_list) {
      bool hit = false;
      for (int j = 0; j < k && !hit; ++j)
        hit = labels[static_cast<size_t>(dist[static_cast<size_t>(j)].second)] ==
              labels[static_cast<size_t>(q)];
      if (hit) ++hits[k];
    }
  }
  std::map<int, double> out;
  for (int k : k_list)
    out[k] = static_cast<double>(hits[k]) / static_cast<double>(count);
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation metrics (Table 4 analog)
// ---------------------------------------------------------------------------

struct SegmentationMetrics {
  double overall_accuracy = 0;
  double class_miou = 0;
  double instance_miou = 0;
};

// predictions/labels: per shape, per point, global part ids. shape_classes:
// category index per shape. Per-part IoU = TP/(TP+FP+FN), with IoU = 1 when a
// part is absent from both prediction and label.
inline SegmentationMetrics segmentation_metrics(
    const std::vector<std::vector<int>>& predictions,
    const std::vector<std::vector<int>>& labels,
    const std::vector<int>& shape_classes, const PartCatalog& catalog) {
  CM_CHECK(predictions.size() == labels.size() &&
               predictions.size() == shape_classes.size(),
           "segmentation metric input size mismatch");
  int64_t correct = 0, total = 0;
  std::vector<std::vector<double>> per_class_ious(catalog.classes.size());
  std::vector<double> shape_ious;

  for (size_t s = 0; s < predictions.size(); ++s) {
    const auto& pred = predictions[s];
    const auto& lab = labels[s];
    CM_CHECK(pred.size() == lab.size(), "per-shape prediction/label mismatch");
    int cls = shape_classes[s];
    auto parts = catalog.class_parts(cls);
    std::set<int> part_set(parts.begin(), parts.end());
    for (int l : lab)
      CM_CHECK(part_set.count(l), "label id " << l
                                              << " outside class part set");
    for (size_t p = 0; p < pred.size(); ++p) {
      if (pred[p] == lab[p]) ++correct;
      ++total;
    }
    double iou_sum = 0;
    for (int part : parts) {
      int64_t tp = 0, fp = 0, fn = 0;
      for (size_t p = 0; p < pred.size(); ++p) {
        bool in_pred = pred[p] == part, in_lab = lab[p] == part;
        if (in_pred && in_lab) ++tp;
        else if (in_pred) ++fp;
        else if (in_lab) ++fn;
      }
      iou_sum += (tp + fp + fn) == 0
                     ? 1.0
                     : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    }
    double shape_iou = iou_sum / static_cast<double>(parts.size());
    shape_ious.push_back(shape_iou);
    per_class_ious[static_cast<size_t>(cls)].push_back(shape_iou);
  }

  SegmentationMetrics m;
  m.overall_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (double v : shape_ious) m.instance_miou += v;
  m.instance_miou /= static_cast<double>(shape_ious.size());
  int populated = 0;
  for (const auto& cls : per_class_ious) {
    if (cls.empty()) continue;
    double mean = 0;
    for (double v : cls) mean += v;
    m.class_miou += mean / static_cast<double>(cls.size());
    ++populated;
  }
  m.class_miou /= static_cast<double>(populated);
  return m;
}

// Runs the segmentation head on the test split; argmax restricted to the
// shape's own category parts.
template <class T>
SegmentationMetrics evaluate_segmentation(Encoders<T>& enc,
                                          const DataStore& store) {
  std::vector<std::vector<int>> preds, labs;
  std::vector<int> classes;
  for (int obj : store.test_indices) {
    const auto& cl = store.clouds[static_cast<size_t>(obj)];
    int64_t n = static_cast<int64_t>(cl.size());
    Tensor<T> batch({1, n, 3});
    for (int64_t p = 0; p < n; ++p) {
      batch.data()[p * 3 + 0] = static_cast<T>(cl.points[static_cast<size_t>(p)].x);
      batch.data()[p * 3 + 1] = static_cast<T>(cl.points[static_cast<size_t>(p)].y);
      batch.data()[p * 3 + 2] = static_cast<T>(cl.points[static_cast<size_t>(p)].z);
    }
    auto logits = enc.forward_segmentation(batch, Mode::Eval);
    int cls = store.objects[static_cast<size_t>(obj)].cls_id;
    auto parts = store.catalog.class_parts(cls);
    std::vector<int> pred(static_cast<size_t>(n));
    int64_t c_total = logits.dim(-1);
    for (int64_t p = 0; p < n; ++p) {
      const T* row = logits.data() + p * c_total;
      int best = parts[0];
      for (int part : parts)
        if (row[part] > row[best]) best = part;
      pred[static_cast<size_t>(p)] = best;
    }
    preds.push_back(std::move(pred));
    labs.emplace_back(store.point_labels[static_cast<size_t>(obj)].begin(),
                      store.point_labels[static_cast<size_t>(obj)].end());
    classes.push_back(cls);
  }
  return segmentation_metrics(preds, labs, classes, store.catalog);
}

}  // namespace crossmodal
