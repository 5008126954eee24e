#pragma once

#include "crossmodal/datasets.hpp"
#include "crossmodal/encoders.hpp"
#include "crossmodal/objectives.hpp"

namespace crossmodal {

struct TrainConfig {
  int batch_size = 32;
  int total_iterations = 120000;
  double lr0 = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int lr_decay_every = 40000;
  double lr_decay_factor = 0.1;
  uint64_t seed = 0;
  bool deterministic = false;
  double margin = 1.0;       // triplet alpha
  double beta = 1.0;         // cross-modality weight
  bool augment = true;
  int checkpoint_every = 10000;
  std::string out_dir;       // empty = no trace/checkpoint files

  void validate() const {
    CM_CHECK(batch_size >= 2, "batch_size must be >= 2");
    CM_CHECK(lr0 > 0 && lr_decay_every > 0, "rates must be positive");
  }
};

inline double lr_at(int64_t iteration, const TrainConfig& cfg) {
  CM_CHECK(iteration >= 0, "negative iteration");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor,
                            static_cast<double>(iteration / cfg.lr_decay_every));
}

// SGD with momentum and decoupled-from-batchnorm weight decay:
//   v <- momentum*v + (grad + wd*param); param <- param - lr*v
template <class T>
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ParamStore<T>& store, double lr) {
    for (const auto& name : store.trainable_names()) {
      auto& p = store.get(name);
      if (!p.has_grad()) continue;
      auto& g = p.grad();
      auto& v = velocity_[name];
      if (v.empty()) v.assign(g.size(), T(0));
      T wd = store.decays(name) ? static_cast<T>(weight_decay_) : T(0);
      for (size_t i = 0; i < g.size(); ++i) {
        CM_CHECK(std::isfinite(static_cast<double>(g[i])),
                 "NaN gradient in parameter '" << name << "'");
        v[i] = static_cast<T>(momentum_) * v[i] + (g[i] + wd * p.data()[i]);
        p.data()[i] -= static_cast<T>(lr) * v[i];
      }
    }
  }

 private:
  double momentum_, weight_decay_;
  std::unordered_map<std::string, std::vector<T>> velocity_;
};

template <class T>
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<T>& store, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& name : store.trainable_names()) {
      auto& p = store.get(name);
      if (!p.has_grad()) continue;
      auto& g = p.grad();
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(g.size(), T(0));
        st.v.assign(g.size(), T(0));
      }
      for (size_t i = 0; i < g.size(); ++i) {
        CM_CHECK(std::isfinite(static_cast<double>(g[i])),
                 "NaN gradient in parameter '" << name << "'");
        st.m[i] = static_cast<T>(beta1_) * st.m[i] + static_cast<T>(1 - beta1_) * g[i];
        st.v[i] = static_cast<T>(beta2_) * st.v[i] +
                  static_cast<T>(1 - beta2_) * g[i] * g[i];
        double mh = static_cast<double>(st.m[i]) / bc1;
        double vh = static_cast<double>(st.v[i]) / bc2;
        p.data()[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

 private:
  struct State {
    std::vector<T> m, v;
  };
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

struct TraceRow {
  int64_t iteration;
  double l_triplet, l_cross, l_self, lr;
};

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iteration,l_triplet,l_cross,l_self,lr\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(r.iteration), r.l_triplet, r.l_cross,
                  r.l_self, r.lr);
    out << buf;
  }
  return out.str();
}

namespace detail {

// Packs B samples into the [B,n,3] cloud and [B,1,H,W] image batch tensors.
template <class T>
struct Batch {
  Tensor<T> clouds;
  std::array<Tensor<T>, 3> images;
};

template <class T>
Batch<T> pack_batch(const std::vector<TrainingSample>& samples) {
  int64_t b = static_cast<int64_t>(samples.size());
  int64_t n = static_cast<int64_t>(samples[0].cloud.size()) / 3;
  int64_t h = samples[0].images[0].height, w = samples[0].images[0].width;
  Batch<T> out;
  out.clouds = Tensor<T>({b, n, 3});
  for (int j = 0; j < 3; ++j) out.images[static_cast<size_t>(j)] = Tensor<T>({b, 1, h, w});
  for (int64_t i = 0; i < b; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    for (int64_t c = 0; c < n * 3; ++c)
      out.clouds.data()[i * n * 3 + c] = static_cast<T>(s.cloud[static_cast<size_t>(c)]);
    for (int j = 0; j < 3; ++j) {
      const auto& img = s.images[static_cast<size_t>(j)];
      std::transform(img.pixels.begin(), img.pixels.end(),
                     out.images[static_cast<size_t>(j)].data() + i * h * w,
                     [](float v) { return static_cast<T>(v); });
    }
  }
  return out;
}

}  // namespace detail

// The joint self-supervised loop: per iteration, three image forwards, one
// point forward, three fusion predictions, triplet + weighted cross-modality
// loss, one backward through all three networks, one SGD step.
template <class T>
std::vector<TraceRow> pretrain(Encoders<T>& enc, const DataStore& store,
                               const TrainConfig& cfg) {
  cfg.validate();
  CM_CHECK(!store.train_indices.empty(), "empty training split");
  std::mt19937 rng(static_cast<uint32_t>(cfg.seed));
  SgdOptimizer<T> opt(cfg.momentum, cfg.weight_decay);
  SampleOptions sample_opts;
  sample_opts.augment = cfg.augment;
  std::uniform_int_distribution<int> obj_d(
      0, static_cast<int>(store.train_indices.size()) - 1);

  std::vector<TraceRow> trace;
  trace.reserve(static_cast<size_t>(cfg.total_iterations));
  int64_t start_iter = static_cast<int64_t>(enc.store.scalar("meta.iteration"));

  for (int64_t iter = start_iter; iter < cfg.total_iterations; ++iter) {
    std::vector<TrainingSample> samples;
    samples.reserve(static_cast<size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i)
      samples.push_back(assemble_sample(
          store, store.train_indices[static_cast<size_t>(obj_d(rng))], rng,
          sample_opts));
    auto batch = detail::pack_batch<T>(samples);

    auto fi1 = enc.forward_image(batch.images[0], Mode::Train);
    auto fi2 = enc.forward_image(batch.images[1], Mode::Train);
    auto fi3 = enc.forward_image(batch.images[2], Mode::Train);
    auto fp = enc.forward_point(batch.clouds, Mode::Train).global_feat;
    std::array<Tensor<T>, 3> preds{enc.forward_fusion(fi1, fp),
                                   enc.forward_fusion(fi2, fp),
                                   enc.forward_fusion(fi3, fp)};

    auto l_tri = triplet_loss(fi1, fi2, fi3, static_cast<T>(cfg.margin));
    auto l_cross = cross_modality_loss<T>(preds, {1, 1, 0});
    auto l_self = combined_loss(l_tri, l_cross, static_cast<T>(cfg.beta));

    double lr = lr_at(iter, cfg);
    TraceRow row{iter, static_cast<double>(l_tri.item()),
                 static_cast<double>(l_cross.item()),
                 static_cast<double>(l_self.item()), lr};
    if (!std::isfinite(row.l_self)) {
      if (!cfg.out_dir.empty())
        write_text_file(cfg.out_dir + "/trace_abort.csv", trace_csv(trace));
      CM_CHECK(false, "non-finite loss at iteration " << iter
                                                      << "; trace dumped");
    }
    trace.push_back(row);

    enc.store.zero_grad();
    backward(l_self);
    opt.step(enc.store, lr);
    enc.store.set_scalar("meta.iteration", static_cast<T>(iter + 1));

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (iter + 1) % cfg.checkpoint_every == 0) {
      enc.store.save(cfg.out_dir + "/checkpoint_" + std::to_string(iter + 1) +
                     ".ckpt");
    }
  }
  if (!cfg.out_dir.empty()) {
    write_text_file(cfg.out_dir + "/trace.csv", trace_csv(trace));
    enc.store.save(cfg.out_dir + "/checkpoint_final.ckpt");
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Segmentation fine-tuning
// ---------------------------------------------------------------------------

struct SegTrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr0 = 0.003;
  int lr_decay_every_epochs = 20;
  double lr_decay_factor = 0.1;
  double train_fraction = 1.0;
  bool freeze_base = false;
  uint64_t seed = 0;
};

// Adam fine-tuning of the segmentation head (plus optionally the point
// encoder) with per-point softmax cross entropy over global part labels.
template <class T>
void finetune_segmentation(Encoders<T>& enc, const DataStore& store,
                           const SegTrainConfig& cfg) {
  CM_CHECK(enc.config.num_parts > 0, "segmentation head missing");
  CM_CHECK(!store.point_labels.empty() &&
               !store.point_labels[static_cast<size_t>(store.train_indices[0])].empty(),
           "store has no part labels");
  std::mt19937 rng(static_cast<uint32_t>(cfg.seed));

  std::vector<int> train = store.train_indices;
  std::shuffle(train.begin(), train.end(), rng);
  size_t keep = std::max<size_t>(
      static_cast<size_t>(cfg.batch_size),
      static_cast<size_t>(std::llround(cfg.train_fraction * train.size())));
  keep = std::min(keep, train.size());
  train.resize(keep);

  enc.store.set_trainable("img.", false);
  enc.store.set_trainable("fus.", false);
  enc.store.set_trainable("pnt.", !cfg.freeze_base);
  enc.store.set_trainable("seg.", true);

  AdamOptimizer<T> opt;
  // Frozen regime keeps the base bitwise intact, including batchnorm running
  // statistics, so the base runs in eval mode.
  Mode base_mode = cfg.freeze_base ? Mode::Eval : Mode::Train;
  int64_t n = static_cast<int64_t>(store.clouds[static_cast<size_t>(train[0])].size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr0 * std::pow(cfg.lr_decay_factor,
                                   epoch / cfg.lr_decay_every_epochs);
    std::shuffle(train.begin(), train.end(), rng);
    for (size_t start = 0; start < train.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(train.size(), start + static_cast<size_t>(cfg.batch_size));
      int64_t b = static_cast<int64_t>(end - start);
      Tensor<T> clouds({b, n, 3});
      std::vector<int> labels(static_cast<size_t>(b * n));
      for (int64_t i = 0; i < b; ++i) {
        int obj = train[start + static_cast<size_t>(i)];
        const auto& cl = store.clouds[static_cast<size_t>(obj)];
        const auto& lab = store.point_labels[static_cast<size_t>(obj)];
        for (int64_t p = 0; p < n; ++p) {
          clouds.data()[(i * n + p) * 3 + 0] = static_cast<T>(cl.points[static_cast<size_t>(p)].x);
          clouds.data()[(i * n + p) * 3 + 1] = static_cast<T>(cl.points[static_cast<size_t>(p)].y);
          clouds.data()[(i * n + p) * 3 + 2] = static_cast<T>(cl.points[static_cast<size_t>(p)].z);
          labels[static_cast<size_t>(i * n + p)] = lab[static_cast<size_t>(p)];
        }
      }
      auto logits = enc.forward_segmentation(clouds, base_mode);
      auto loss = softmax_cross_entropy(logits, labels);
      enc.store.zero_grad();
      backward(loss);
      opt.step(enc.store, lr);
    }
  }
  // Restore full trainability so later stages see a normal store.
  enc.store.set_trainable("img.", true);
  enc.store.set_trainable("fus.", true);
  enc.store.set_trainable("pnt.", true);
}

// ---------------------------------------------------------------------------
// Linear probe (one-vs-rest linear SVM by subgradient descent)
// ---------------------------------------------------------------------------

struct LinearProbe {
  int num_classes = 0;
  int dim = 0;
  std::vector<double> weights;  // [C, D]
  std::vector<double> biases;   // [C]

  int predict(const float* x) const {
    int best = 0;
    double best_s = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_classes; ++c) {
      double s = biases[static_cast<size_t>(c)];
      const double* w = weights.data() + static_cast<size_t>(c) * dim;
      for (int d = 0; d < dim; ++d) s += w[d] * x[d];
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    return best;
  }
};

struct ProbeConfig {
  double regularization_c = 10.0;
  int epochs = 500;
  uint64_t seed = 0;
};

// L2-regularized hinge loss, full-batch subgradient with the Pegasos step
// size eta_t = 1 / (lambda * t). features: [N, D] row-major.
inline LinearProbe train_linear_probe(const std::vector<float>& features,
                                      const std::vector<int>& labels,
                                      int num_classes, int dim,
                                      const ProbeConfig& cfg = {}) {
  int64_t count = static_cast<int64_t>(labels.size());
  CM_CHECK(count * dim == static_cast<int64_t>(features.size()),
           "probe feature buffer size mismatch");
  CM_CHECK(num_classes >= 2, "probe needs at least 2 classes");
  std::vector<int64_t> per_class(static_cast<size_t>(num_classes), 0);
  for (int lab : labels) {
    CM_CHECK(lab >= 0 && lab < num_classes, "probe label out of range");
    ++per_class[static_cast<size_t>(lab)];
  }
  for (int c = 0; c < num_classes; ++c)
    CM_CHECK(per_class[static_cast<size_t>(c)] > 0,
             "class " << c << " absent from probe training set");

  LinearProbe probe;
  probe.num_classes = num_classes;
  probe.dim = dim;
  probe.weights.assign(static_cast<size_t>(num_classes) * dim, 0.0);
  probe.biases.assign(static_cast<size_t>(num_classes), 0.0);
  double lambda = 1.0 / cfg.regularization_c;

  std::vector<double> gw(static_cast<size_t>(num_classes) * dim);
  std::vector<double> gb(static_cast<size_t>(num_classes));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = 1.0 / (lambda * (1.0 + epoch));
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int64_t i = 0; i < count; ++i) {
      const float* x = features.data() + i * dim;
      for (int c = 0; c < num_classes; ++c) {
        double y = labels[static_cast<size_t>(i)] == c ? 1.0 : -1.0;
        double s = probe.biases[static_cast<size_t>(c)];
        const double* w = probe.weights.data() + static_cast<size_t>(c) * dim;
        for (int d = 0; d < dim; ++d) s += w[d] * x[d];
        if (y * s < 1.0) {
          double* g = gw.data() + static_cast<size_t>(c) * dim;
          for (int d = 0; d < dim; ++d) g[d] -= y * x[d];
          gb[static_cast<size_t>(c)] -= y;
        }
      }
    }
    double inv_n = 1.0 / static_cast<double>(count);
    for (int c = 0; c < num_classes; ++c) {
      double* w = probe.weights.data() + static_cast<size_t>(c) * dim;
      const double* g = gw.data() + static_cast<size_t>(c) * dim;
      for (int d = 0; d < dim; ++d)
        w[d] -= lr * (lambda * w[d] + g[d] * inv_n);
      probe.biases[static_cast<size_t>(c)] -= lr * gb[static_cast<size_t>(c)] * inv_n;
    }
  }
  return probe;
}

inline double probe_accuracy(const LinearProbe& probe,
                             const std::vector<float>& features,
                             const std::vector<int>& labels) {
  int64_t count = static_cast<int64_t>(labels.size());
  CM_CHECK(count > 0, "empty probe evaluation set");
  int64_t correct = 0;
  for (int64_t i = 0; i < count; ++i)
    if (probe.predict(features.data() + i * probe.dim) ==
        labels[static_cast<size_t>(i)])
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(count);
}

}  // namespace crossmodal
