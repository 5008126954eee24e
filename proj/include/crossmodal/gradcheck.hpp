#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "crossmodal/tensor.hpp"

namespace crossmodal {

// Central-difference gradient check. `fn` must rebuild the graph and return a
// scalar loss on every call, be deterministic, and be differentiable in the
// checked parameters (callers freeze batchnorm statistics and keep away from
// hinge/max kinks). Checks up to `coords_per_param` randomly sampled
// coordinates per parameter and returns the max relative error with
// denominator max(|analytic|, |numeric|, 1e-8). Intended for T = double.
template <class T>
double grad_check(const std::function<Tensor<T>()>& fn,
                  std::vector<Tensor<T>> params, T epsilon,
                  int coords_per_param, std::mt19937& rng) {
  CM_CHECK(!params.empty(), "grad_check needs at least one parameter");

  for (auto& p : params) p.zero_grad();
  Tensor<T> loss = fn();
  CM_CHECK(loss.size() == 1, "grad_check function must be scalar-valued");
  backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    int64_t n = p.size();
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (n > coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(coords_per_param));
    }
    for (int64_t c : coords) {
      T orig = p.data()[c];
      p.data()[c] = orig + epsilon;
      T plus = fn().item();
      p.data()[c] = orig - epsilon;
      T minus = fn().item();
      p.data()[c] = orig;
      double numeric = static_cast<double>(plus - minus) /
                       (2.0 * static_cast<double>(epsilon));
      double a = static_cast<double>(analytic[pi][static_cast<size_t>(c)]);
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace crossmodal
