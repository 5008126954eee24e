#pragma once

#include "crossmodal/ops.hpp"

namespace crossmodal {

struct LossConfig {
  double margin = 1.0;        // triplet margin alpha
  double cross_weight = 1.0;  // beta
  double prob_clamp = 1e-7;

  void validate() const {
    CM_CHECK(margin >= 0 && cross_weight >= 0, "negative loss hyperparameter");
  }
};

// Batch mean of max(||a-p||^2 - ||a-n||^2 + alpha, 0); squared Euclidean
// distances on unnormalized features.
template <class T>
Tensor<T> triplet_loss(const Tensor<T>& anchor, const Tensor<T>& positive,
                       const Tensor<T>& negative, T margin) {
  CM_CHECK(anchor.shape() == positive.shape() &&
               anchor.shape() == negative.shape(),
           "triplet_loss shape mismatch");
  auto dp = sub(anchor, positive);
  auto dn = sub(anchor, negative);
  auto d_ap = sum_lastdim(mul(dp, dp));  // [B]
  auto d_an = sum_lastdim(mul(dn, dn));  // [B]
  Tensor<T> alpha(d_ap.shape(), margin);
  auto hinge = relu(add(sub(d_ap, d_an), alpha));
  return mean_all(hinge);
}

// Mean over the batch of the three-term binary cross entropy; predictions are
// probabilities clamped away from {0,1}, labels fixed (1,1,0) by sample
// construction.
template <class T>
Tensor<T> cross_modality_loss(const std::array<Tensor<T>, 3>& predictions,
                              const std::array<int, 3>& labels,
                              T prob_clamp = T(1e-7)) {
  for (int lab : labels)
    CM_CHECK(lab == 0 || lab == 1, "cross-modality label must be 0 or 1");
  Tensor<T> total;
  for (int j = 0; j < 3; ++j) {
    auto p = clamp(predictions[static_cast<size_t>(j)], prob_clamp,
                   T(1) - prob_clamp);
    Tensor<T> term;
    if (labels[static_cast<size_t>(j)] == 1) {
      term = scale(log_op(p), T(-1));
    } else {
      Tensor<T> one(p.shape(), T(1));
      term = scale(log_op(sub(one, p)), T(-1));
    }
    total = j == 0 ? term : add(total, term);
  }
  return mean_all(total);
}

// L_self = L_triplet + beta * L_cross.
template <class T>
Tensor<T> combined_loss(const Tensor<T>& l_triplet, const Tensor<T>& l_cross,
                        T beta) {
  CM_CHECK(std::isfinite(static_cast<double>(l_triplet.item())) &&
               std::isfinite(static_cast<double>(l_cross.item())),
           "non-finite loss input");
  return add(l_triplet, scale(l_cross, beta));
}

}  // namespace crossmodal
