#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "crossmodal/tensor.hpp"

namespace crossmodal {

namespace detail {

template <class T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C[MxN] (+)= op(A) * op(B), row-major buffers.
template <class T>
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 const T* a, const T* b, T* c, bool accumulate) {
  ConstMatMap<T> am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMatMap<T> bm(b, trans_b ? n : k, trans_b ? k : n);
  MatMap<T> cm(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) cm.noalias() += am * bm; else cm.noalias() = am * bm;
  } else if (trans_a && !trans_b) {
    if (accumulate) cm.noalias() += am.transpose() * bm; else cm.noalias() = am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    if (accumulate) cm.noalias() += am * bm.transpose(); else cm.noalias() = am * bm.transpose();
  } else {
    if (accumulate) cm.noalias() += am.transpose() * bm.transpose(); else cm.noalias() = am.transpose() * bm.transpose();
  }
}

// Splits a shape at `axis`: [outer, shape[axis], inner].
inline void split_axis(const Shape& s, int axis, int64_t& outer, int64_t& mid,
                       int64_t& inner) {
  int n = static_cast<int>(s.size());
  if (axis < 0) axis += n;
  CM_CHECK(axis >= 0 && axis < n, "axis " << axis << " out of range for "
                                          << shape_str(s));
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  mid = s[static_cast<size_t>(axis)];
  for (int i = axis + 1; i < n; ++i) inner *= s[static_cast<size_t>(i)];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  CM_CHECK(a.shape() == b.shape(), "add shape mismatch " << shape_str(a.shape())
                                                         << " vs "
                                                         << shape_str(b.shape()));
  auto out = Tensor<T>::make_op(a.shape(), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
    }
  });
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  CM_CHECK(a.shape() == b.shape(), "sub shape mismatch");
  auto out = Tensor<T>::make_op(a.shape(), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  CM_CHECK(a.shape() == b.shape(), "mul shape mismatch");
  auto out = Tensor<T>::make_op(a.shape(), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += self.grad[i] * pb.val[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] += self.grad[i] * pa.val[i];
    }
  });
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = Tensor<T>::make_op(a.shape(), {a}, [s](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += s * self.grad[i];
  });
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = s * a.data()[i];
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = Tensor<T>::make_op(a.shape(), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.val[i] > T(0)) p.grad[i] += self.grad[i];
  });
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  return out;
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  auto out = Tensor<T>::make_op(a.shape(), {a}, [slope](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * (p.val[i] > T(0) ? T(1) : slope);
  });
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : slope * a.data()[i];
  return out;
}

template <class T>
Tensor<T> log_op(const Tensor<T>& a) {
  auto out = Tensor<T>::make_op(a.shape(), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] / p.val[i];
  });
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = std::log(a.data()[i]);
  return out;
}

// Gradient passes through only where the value was not clipped.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  auto out = Tensor<T>::make_op(a.shape(), {a}, [lo, hi](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.val[i] > lo && p.val[i] < hi) p.grad[i] += self.grad[i];
  });
  for (int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = std::min(hi, std::max(lo, a.data()[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = Tensor<T>::make_op(Shape{1}, {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[0];
  });
  T acc = T(0);
  for (int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  out.data()[0] = acc;
  return out;
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

template <class T>
Tensor<T> sum_lastdim(const Tensor<T>& a) {
  CM_CHECK(a.rank() >= 1, "sum_lastdim on scalar");
  int64_t inner = a.dim(-1);
  int64_t outer = a.size() / inner;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto out = Tensor<T>::make_op(out_shape, {a}, [inner](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    int64_t outer = static_cast<int64_t>(self.grad.size());
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i)
        p.grad[static_cast<size_t>(o * inner + i)] += self.grad[static_cast<size_t>(o)];
  });
  for (int64_t o = 0; o < outer; ++o) {
    T acc = T(0);
    for (int64_t i = 0; i < inner; ++i) acc += a.data()[o * inner + i];
    out.data()[o] = acc;
  }
  return out;
}

// Max over one axis with argmax gradient routing; first index wins ties.
template <class T>
Tensor<T> reduce_max_axis(const Tensor<T>& a, int axis) {
  int64_t outer, mid, inner;
  detail::split_axis(a.shape(), axis, outer, mid, inner);
  CM_CHECK(mid >= 1, "reduce_max_axis over empty axis in " << shape_str(a.shape()));
  int real_axis = axis < 0 ? axis + a.rank() : axis;
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != real_axis) out_shape.push_back(a.shape()[static_cast<size_t>(i)]);
  if (out_shape.empty()) out_shape = {1};

  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(outer * inner));
  auto out = Tensor<T>::make_op(
      out_shape, {a}, [argmax, outer, mid, inner](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            int64_t oi = o * inner + i;
            int64_t m = (*argmax)[static_cast<size_t>(oi)];
            p.grad[static_cast<size_t>((o * mid + m) * inner + i)] +=
                self.grad[static_cast<size_t>(oi)];
          }
      });
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T best = a.data()[o * mid * inner + i];
      int64_t best_m = 0;
      for (int64_t m = 1; m < mid; ++m) {
        T v = a.data()[(o * mid + m) * inner + i];
        if (v > best) {
          best = v;
          best_m = m;
        }
      }
      out.data()[o * inner + i] = best;
      (*argmax)[static_cast<size_t>(o * inner + i)] = best_m;
    }
  return out;
}

// Per-feature maximum over the point/set axis of [B,n,D].
template <class T>
Tensor<T> max_over_set(const Tensor<T>& a) {
  CM_CHECK(a.rank() == 3, "max_over_set expects [B,n,D], got "
                              << shape_str(a.shape()));
  CM_CHECK(a.dim(1) >= 1, "max_over_set over empty set");
  return reduce_max_axis(a, 1);
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

// Inserts a repeated axis of extent `times` at position `pos`; backward sums.
template <class T>
Tensor<T> insert_repeat(const Tensor<T>& a, int pos, int64_t times) {
  CM_CHECK(pos >= 0 && pos <= a.rank(), "insert_repeat bad position");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < pos; ++i) outer *= a.shape()[static_cast<size_t>(i)];
  for (int i = pos; i < a.rank(); ++i) inner *= a.shape()[static_cast<size_t>(i)];
  Shape out_shape(a.shape());
  out_shape.insert(out_shape.begin() + pos, times);
  auto out = Tensor<T>::make_op(
      out_shape, {a}, [outer, inner, times](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t t = 0; t < times; ++t) {
            const T* g = self.grad.data() + (o * times + t) * inner;
            T* pg = p.grad.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) pg[i] += g[i];
          }
      });
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t t = 0; t < times; ++t)
      std::copy(a.data() + o * inner, a.data() + (o + 1) * inner,
                out.data() + (o * times + t) * inner);
  return out;
}

template <class T>
Tensor<T> concat_lastdim(const std::vector<Tensor<T>>& parts) {
  CM_CHECK(!parts.empty(), "concat of nothing");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int64_t outer = 1;
  for (int64_t e : lead) outer *= e;
  int64_t total = 0;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    CM_CHECK(pl == lead, "concat leading-dim mismatch");
    widths.push_back(p.dim(-1));
    total += p.dim(-1);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  auto out = Tensor<T>::make_op(
      out_shape, parts, [outer, total, widths](Node<T>& self) {
        int64_t off = 0;
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
          auto& p = *self.parents[pi];
          int64_t w = widths[pi];
          if (p.requires_grad) {
            p.ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const T* g = self.grad.data() + o * total + off;
              T* pg = p.grad.data() + o * w;
              for (int64_t i = 0; i < w; ++i) pg[i] += g[i];
            }
          }
          off += w;
        }
      });
  int64_t off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    int64_t w = widths[pi];
    for (int64_t o = 0; o < outer; ++o)
      std::copy(parts[pi].data() + o * w, parts[pi].data() + (o + 1) * w,
                out.data() + o * total + off);
    off += w;
  }
  return out;
}

// Picks one index of the last dim, dropping it.
template <class T>
Tensor<T> select_lastdim(const Tensor<T>& a, int64_t index) {
  int64_t inner = a.dim(-1);
  CM_CHECK(index >= 0 && index < inner, "select index out of range");
  int64_t outer = a.size() / inner;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto out = Tensor<T>::make_op(
      out_shape, {a}, [inner, index, outer](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          p.grad[static_cast<size_t>(o * inner + index)] +=
              self.grad[static_cast<size_t>(o)];
      });
  for (int64_t o = 0; o < outer; ++o) out.data()[o] = a.data()[o * inner + index];
  return out;
}

// Gathers neighbor feature rows: x [B,n,D], idx [B,n,k] -> [B,n,k,D].
// Backward scatter-adds into the gathered rows.
template <class T>
Tensor<T> gather_points(const Tensor<T>& x,
                        const std::vector<int64_t>& idx, int64_t k) {
  CM_CHECK(x.rank() == 3, "gather_points expects [B,n,D]");
  int64_t batch = x.dim(0), n = x.dim(1), d = x.dim(2);
  CM_CHECK(static_cast<int64_t>(idx.size()) == batch * n * k,
           "gather index count mismatch");
  auto indices = std::make_shared<std::vector<int64_t>>(idx);
  auto out = Tensor<T>::make_op(
      Shape{batch, n, k, d}, {x},
      [indices, batch, n, k, d](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j) {
              int64_t src = (*indices)[static_cast<size_t>((b * n + i) * k + j)];
              const T* g = self.grad.data() + ((b * n + i) * k + j) * d;
              T* pg = p.grad.data() + (b * n + src) * d;
              for (int64_t c = 0; c < d; ++c) pg[c] += g[c];
            }
      });
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j) {
        int64_t src = idx[static_cast<size_t>((b * n + i) * k + j)];
        CM_CHECK(src >= 0 && src < n, "gather index " << src << " out of range");
        std::copy(x.data() + (b * n + src) * d, x.data() + (b * n + src + 1) * d,
                  out.data() + ((b * n + i) * k + j) * d);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra layers
// ---------------------------------------------------------------------------

// y[...,O] = x[...,I] W^T + b, weight stored [O,I].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  CM_CHECK(weight.rank() == 2, "linear weight must be [O,I]");
  int64_t in = weight.dim(1), out_dim = weight.dim(0);
  CM_CHECK(x.dim(-1) == in, "linear input width " << x.dim(-1)
                                                  << " vs weight " << in);
  CM_CHECK(bias.size() == out_dim, "linear bias size mismatch");
  int64_t rows = x.size() / in;
  Shape out_shape(x.shape());
  out_shape.back() = out_dim;
  auto out = Tensor<T>::make_op(
      out_shape, {x, weight, bias}, [rows, in, out_dim](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pw.requires_grad) {
          pw.ensure_grad();
          // dW[O,I] += dY^T[O,rows] * X[rows,I]
          detail::gemm<T>(true, false, out_dim, in, rows, self.grad.data(),
                          px.val.data(), pw.grad.data(), true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int64_t r = 0; r < rows; ++r) {
            const T* g = self.grad.data() + r * out_dim;
            for (int64_t o = 0; o < out_dim; ++o) pb.grad[static_cast<size_t>(o)] += g[o];
          }
        }
        if (px.requires_grad) {
          px.ensure_grad();
          // dX[rows,I] += dY[rows,O] * W[O,I]
          detail::gemm<T>(false, false, rows, in, out_dim, self.grad.data(),
                          pw.val.data(), px.grad.data(), true);
        }
      });
  // Y[rows,O] = X[rows,I] * W^T
  detail::gemm<T>(false, true, rows, out_dim, in, x.data(), weight.data(),
                  out.data(), false);
  for (int64_t r = 0; r < rows; ++r) {
    T* y = out.data() + r * out_dim;
    for (int64_t o = 0; o < out_dim; ++o) y[o] += bias.data()[o];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution (same padding, square kernels, stride 1 or 2)
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
  int64_t batch, cin, h, w, cout, kh, kw, stride, ho, wo, pad_t, pad_l;
};

inline ConvDims conv_dims(const Shape& x, const Shape& wgt, int64_t stride) {
  CM_CHECK(x.size() == 4, "conv2d input must be [B,C,H,W], got " << shape_str(x));
  CM_CHECK(wgt.size() == 4, "conv2d weight must be [K,C,kh,kw]");
  CM_CHECK(x[1] == wgt[1], "conv2d channel mismatch: input " << x[1]
                                                             << " weight " << wgt[1]);
  CM_CHECK(stride == 1 || stride == 2, "conv2d stride must be 1 or 2");
  ConvDims d;
  d.batch = x[0]; d.cin = x[1]; d.h = x[2]; d.w = x[3];
  d.cout = wgt[0]; d.kh = wgt[2]; d.kw = wgt[3];
  d.stride = stride;
  d.ho = (d.h + stride - 1) / stride;
  d.wo = (d.w + stride - 1) / stride;
  int64_t pad_h = std::max<int64_t>((d.ho - 1) * stride + d.kh - d.h, 0);
  int64_t pad_w = std::max<int64_t>((d.wo - 1) * stride + d.kw - d.w, 0);
  d.pad_t = pad_h / 2;
  d.pad_l = pad_w / 2;
  return d;
}

template <class T>
void im2col(const T* img, const ConvDims& d, T* col) {
  // col layout: [Cin*kh*kw, Ho*Wo]
  for (int64_t c = 0; c < d.cin; ++c)
    for (int64_t ky = 0; ky < d.kh; ++ky)
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((c * d.kh + ky) * d.kw + kx) * d.ho * d.wo;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          int64_t iy = oy * d.stride + ky - d.pad_t;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            int64_t ix = ox * d.stride + kx - d.pad_l;
            row[oy * d.wo + ox] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? img[(c * d.h + iy) * d.w + ix]
                    : T(0);
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvDims& d, T* img) {
  for (int64_t c = 0; c < d.cin; ++c)
    for (int64_t ky = 0; ky < d.kh; ++ky)
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((c * d.kh + ky) * d.kw + kx) * d.ho * d.wo;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          int64_t iy = oy * d.stride + ky - d.pad_t;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            int64_t ix = ox * d.stride + kx - d.pad_l;
            if (ix < 0 || ix >= d.w) continue;
            img[(c * d.h + iy) * d.w + ix] += row[oy * d.wo + ox];
          }
        }
      }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias, int64_t stride) {
  auto d = detail::conv_dims(x.shape(), weight.shape(), stride);
  CM_CHECK(bias.size() == d.cout, "conv2d bias size mismatch");
  auto out = Tensor<T>::make_op(
      Shape{d.batch, d.cout, d.ho, d.wo}, {x, weight, bias},
      [d](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        int64_t patch = d.cin * d.kh * d.kw;
        int64_t spatial = d.ho * d.wo;
        std::vector<T> col(static_cast<size_t>(patch * spatial));
        std::vector<T> dcol;
        if (px.requires_grad) {
          px.ensure_grad();
          dcol.resize(static_cast<size_t>(patch * spatial));
        }
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int64_t b = 0; b < d.batch; ++b) {
          const T* g = self.grad.data() + b * d.cout * spatial;
          if (pw.requires_grad) {
            detail::im2col(px.val.data() + b * d.cin * d.h * d.w, d, col.data());
            // dW[K,patch] += dY[K,spatial] * col^T[spatial,patch]
            detail::gemm<T>(false, true, d.cout, patch, spatial, g, col.data(),
                            pw.grad.data(), true);
          }
          if (pb.requires_grad) {
            for (int64_t k = 0; k < d.cout; ++k) {
              T acc = T(0);
              const T* gk = g + k * spatial;
              for (int64_t s = 0; s < spatial; ++s) acc += gk[s];
              pb.grad[static_cast<size_t>(k)] += acc;
            }
          }
          if (px.requires_grad) {
            // dcol[patch,spatial] = W^T[patch,K] * dY[K,spatial]
            detail::gemm<T>(true, false, patch, spatial, d.cout,
                            pw.val.data(), g, dcol.data(), false);
            detail::col2im_add(dcol.data(), d,
                               px.grad.data() + b * d.cin * d.h * d.w);
          }
        }
      });
  int64_t patch = d.cin * d.kh * d.kw;
  int64_t spatial = d.ho * d.wo;
  std::vector<T> col(static_cast<size_t>(patch * spatial));
  for (int64_t b = 0; b < d.batch; ++b) {
    detail::im2col(x.data() + b * d.cin * d.h * d.w, d, col.data());
    T* y = out.data() + b * d.cout * spatial;
    // Y[K,spatial] = W[K,patch] * col[patch,spatial]
    detail::gemm<T>(false, false, d.cout, spatial, patch, weight.data(),
                    col.data(), y, false);
    for (int64_t k = 0; k < d.cout; ++k) {
      T bv = bias.data()[k];
      T* yk = y + k * spatial;
      for (int64_t s = 0; s < spatial; ++s) yk[s] += bv;
    }
  }
  return out;
}

// 2x2 stride-2 max pool; odd trailing rows/cols fall off (floor division),
// first index wins ties.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  CM_CHECK(x.rank() == 4, "max_pool2d expects [B,C,H,W]");
  int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t ho = h / 2, wo = w / 2;
  CM_CHECK(ho >= 1 && wo >= 1, "max_pool2d input too small");
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(batch * ch * ho * wo));
  auto out = Tensor<T>::make_op(
      Shape{batch, ch, ho, wo}, {x}, [argmax](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          p.grad[static_cast<size_t>((*argmax)[i])] += self.grad[i];
      });
  for (int64_t bc = 0; bc < batch * ch; ++bc) {
    const T* in = x.data() + bc * h * w;
    T* y = out.data() + bc * ho * wo;
    int64_t* am = argmax->data() + bc * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        int64_t base = (oy * 2) * w + ox * 2;
        int64_t cand[4] = {base, base + 1, base + w, base + w + 1};
        int64_t best = cand[0];
        for (int j = 1; j < 4; ++j)
          if (in[cand[j]] > in[best]) best = cand[j];
        y[oy * wo + ox] = in[best];
        am[oy * wo + ox] = bc * h * w + best;
      }
  }
  return out;
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  CM_CHECK(x.rank() == 4, "global_avg_pool expects [B,C,H,W]");
  int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  auto out = Tensor<T>::make_op(
      Shape{batch, ch}, {x}, [batch, ch, spatial](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T inv = T(1) / static_cast<T>(spatial);
        for (int64_t bc = 0; bc < batch * ch; ++bc) {
          T g = self.grad[static_cast<size_t>(bc)] * inv;
          T* pg = p.grad.data() + bc * spatial;
          for (int64_t s = 0; s < spatial; ++s) pg[s] += g;
        }
      });
  for (int64_t bc = 0; bc < batch * ch; ++bc) {
    const T* in = x.data() + bc * spatial;
    T acc = T(0);
    for (int64_t s = 0; s < spatial; ++s) acc += in[s];
    out.data()[bc] = acc / static_cast<T>(spatial);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

namespace detail {

// Shared batchnorm over a [rows, C]-strided view. `index(r, c)` maps to the
// flat buffer. Train mode normalizes by batch statistics and updates running
// buffers; eval mode applies the affine map from running statistics.
template <class T, class IndexFn>
Tensor<T> batchnorm_impl(const Tensor<T>& x, const Tensor<T>& gamma,
                         const Tensor<T>& beta, Tensor<T>& running_mean,
                         Tensor<T>& running_var, Mode mode, T momentum, T eps,
                         int64_t rows, int64_t channels, IndexFn index,
                         bool update_running) {
  CM_CHECK(gamma.size() == channels && beta.size() == channels &&
               running_mean.size() == channels && running_var.size() == channels,
           "batchnorm parameter size mismatch (channels=" << channels << ")");
  CM_CHECK(rows >= 1, "batchnorm over empty batch");

  if (mode == Mode::Eval) {
    // Pure affine map per channel.
    std::vector<T> sc(static_cast<size_t>(channels)), sh(static_cast<size_t>(channels));
    for (int64_t c = 0; c < channels; ++c) {
      T inv = T(1) / std::sqrt(running_var.data()[c] + eps);
      sc[static_cast<size_t>(c)] = inv;
      sh[static_cast<size_t>(c)] = -running_mean.data()[c] * inv;
    }
    auto out = Tensor<T>::make_op(
        x.shape(), {x, gamma, beta},
        [rows, channels, index, sc, sh](Node<T>& self) {
          auto& px = *self.parents[0];
          auto& pg = *self.parents[1];
          auto& pb = *self.parents[2];
          if (pg.requires_grad) pg.ensure_grad();
          if (pb.requires_grad) pb.ensure_grad();
          if (px.requires_grad) px.ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < channels; ++c) {
              int64_t i = index(r, c);
              T g = self.grad[static_cast<size_t>(i)];
              T xhat = px.val[static_cast<size_t>(i)] * sc[static_cast<size_t>(c)] +
                       sh[static_cast<size_t>(c)];
              if (pg.requires_grad) pg.grad[static_cast<size_t>(c)] += g * xhat;
              if (pb.requires_grad) pb.grad[static_cast<size_t>(c)] += g;
              if (px.requires_grad)
                px.grad[static_cast<size_t>(i)] +=
                    g * pg.val[static_cast<size_t>(c)] * sc[static_cast<size_t>(c)];
            }
        });
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < channels; ++c) {
        int64_t i = index(r, c);
        T xhat = x.data()[i] * sc[static_cast<size_t>(c)] + sh[static_cast<size_t>(c)];
        out.data()[i] = gamma.data()[c] * xhat + beta.data()[c];
      }
    return out;
  }

  // Train mode: batch statistics (biased variance for normalization).
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(channels), T(0));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(channels));
  auto xhat = std::make_shared<std::vector<T>>(x.values().size());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < channels; ++c)
      (*mean)[static_cast<size_t>(c)] += x.data()[index(r, c)];
  for (int64_t c = 0; c < channels; ++c)
    (*mean)[static_cast<size_t>(c)] /= static_cast<T>(rows);
  std::vector<T> var(static_cast<size_t>(channels), T(0));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < channels; ++c) {
      T d = x.data()[index(r, c)] - (*mean)[static_cast<size_t>(c)];
      var[static_cast<size_t>(c)] += d * d;
    }
  for (int64_t c = 0; c < channels; ++c) {
    var[static_cast<size_t>(c)] /= static_cast<T>(rows);
    (*inv_std)[static_cast<size_t>(c)] = T(1) / std::sqrt(var[static_cast<size_t>(c)] + eps);
  }
  if (update_running) {
    for (int64_t c = 0; c < channels; ++c) {
      running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] +
                               momentum * (*mean)[static_cast<size_t>(c)];
      running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] +
                              momentum * var[static_cast<size_t>(c)];
    }
  }

  auto out = Tensor<T>::make_op(
      x.shape(), {x, gamma, beta},
      [rows, channels, index, inv_std, xhat](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<T> sum_g(static_cast<size_t>(channels), T(0));
        std::vector<T> sum_gx(static_cast<size_t>(channels), T(0));
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < channels; ++c) {
            int64_t i = index(r, c);
            T g = self.grad[static_cast<size_t>(i)];
            sum_g[static_cast<size_t>(c)] += g;
            sum_gx[static_cast<size_t>(c)] += g * (*xhat)[static_cast<size_t>(i)];
          }
        if (pg.requires_grad) {
          pg.ensure_grad();
          for (int64_t c = 0; c < channels; ++c)
            pg.grad[static_cast<size_t>(c)] += sum_gx[static_cast<size_t>(c)];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int64_t c = 0; c < channels; ++c)
            pb.grad[static_cast<size_t>(c)] += sum_g[static_cast<size_t>(c)];
        }
        if (px.requires_grad) {
          px.ensure_grad();
          T inv_rows = T(1) / static_cast<T>(rows);
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < channels; ++c) {
              int64_t i = index(r, c);
              T g = self.grad[static_cast<size_t>(i)];
              T gm = pg.val[static_cast<size_t>(c)];
              px.grad[static_cast<size_t>(i)] +=
                  gm * (*inv_std)[static_cast<size_t>(c)] *
                  (g - inv_rows * (sum_g[static_cast<size_t>(c)] +
                                   (*xhat)[static_cast<size_t>(i)] *
                                       sum_gx[static_cast<size_t>(c)]));
            }
        }
      });
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < channels; ++c) {
      int64_t i = index(r, c);
      T xh = (x.data()[i] - (*mean)[static_cast<size_t>(c)]) *
             (*inv_std)[static_cast<size_t>(c)];
      (*xhat)[static_cast<size_t>(i)] = xh;
      out.data()[i] = gamma.data()[c] * xh + beta.data()[c];
    }
  return out;
}

}  // namespace detail

// Batchnorm over the channel axis of [B,C,H,W].
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, Mode mode,
                       T momentum = T(0.1), T eps = T(1e-5),
                       bool update_running = true) {
  CM_CHECK(x.rank() == 4, "batch_norm2d expects [B,C,H,W]");
  int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  auto index = [ch, spatial](int64_t r, int64_t c) {
    int64_t b = r / spatial, s = r % spatial;
    return (b * ch + c) * spatial + s;
  };
  return detail::batchnorm_impl(x, gamma, beta, running_mean, running_var,
                                mode, momentum, eps, batch * spatial, ch,
                                index, update_running);
}

// Batchnorm over the last dim, all leading dims pooled as the batch.
template <class T>
Tensor<T> batch_norm_lastdim(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& beta, Tensor<T>& running_mean,
                             Tensor<T>& running_var, Mode mode,
                             T momentum = T(0.1), T eps = T(1e-5),
                             bool update_running = true) {
  int64_t ch = x.dim(-1);
  int64_t rows = x.size() / ch;
  auto index = [ch](int64_t r, int64_t c) { return r * ch + c; };
  return detail::batchnorm_impl(x, gamma, beta, running_mean, running_var,
                                mode, momentum, eps, rows, ch, index,
                                update_running);
}

// ---------------------------------------------------------------------------
// Softmax and classification losses
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  int64_t ch = x.dim(-1);
  int64_t rows = x.size() / ch;
  auto out = Tensor<T>::make_op(x.shape(), {x}, [rows, ch](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = self.val.data() + r * ch;
      const T* g = self.grad.data() + r * ch;
      T dot = T(0);
      for (int64_t c = 0; c < ch; ++c) dot += g[c] * y[c];
      T* pg = p.grad.data() + r * ch;
      for (int64_t c = 0; c < ch; ++c) pg[c] += y[c] * (g[c] - dot);
    }
  });
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * ch;
    T* y = out.data() + r * ch;
    T mx = in[0];
    for (int64_t c = 1; c < ch; ++c) mx = std::max(mx, in[c]);
    T z = T(0);
    for (int64_t c = 0; c < ch; ++c) {
      y[c] = std::exp(in[c] - mx);
      z += y[c];
    }
    for (int64_t c = 0; c < ch; ++c) y[c] /= z;
  }
  return out;
}

// Mean softmax cross entropy over rows; labels index the last dim. Rows with
// label < 0 are ignored (contribute nothing and do not count).
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  int64_t ch = logits.dim(-1);
  int64_t rows = logits.size() / ch;
  CM_CHECK(static_cast<int64_t>(labels.size()) == rows,
           "label count " << labels.size() << " vs rows " << rows);
  int64_t counted = 0;
  for (int lab : labels) {
    CM_CHECK(lab < static_cast<int>(ch), "label " << lab << " out of range");
    if (lab >= 0) ++counted;
  }
  CM_CHECK(counted > 0, "softmax_cross_entropy with no labeled rows");
  auto probs = std::make_shared<std::vector<T>>(logits.values().size());
  auto labs = std::make_shared<std::vector<int>>(labels);
  auto out = Tensor<T>::make_op(
      Shape{1}, {logits}, [rows, ch, counted, probs, labs](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        T g = self.grad[0] / static_cast<T>(counted);
        for (int64_t r = 0; r < rows; ++r) {
          int lab = (*labs)[static_cast<size_t>(r)];
          if (lab < 0) continue;
          T* pg = p.grad.data() + r * ch;
          const T* pr = probs->data() + r * ch;
          for (int64_t c = 0; c < ch; ++c)
            pg[c] += g * (pr[c] - (c == lab ? T(1) : T(0)));
        }
      });
  T loss = T(0);
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * ch;
    T* pr = probs->data() + r * ch;
    T mx = in[0];
    for (int64_t c = 1; c < ch; ++c) mx = std::max(mx, in[c]);
    T z = T(0);
    for (int64_t c = 0; c < ch; ++c) {
      pr[c] = std::exp(in[c] - mx);
      z += pr[c];
    }
    for (int64_t c = 0; c < ch; ++c) pr[c] /= z;
    int lab = labels[static_cast<size_t>(r)];
    if (lab >= 0) loss -= std::log(std::max(pr[lab], std::numeric_limits<T>::min()));
  }
  out.data()[0] = loss / static_cast<T>(counted);
  return out;
}

// ---------------------------------------------------------------------------
// Non-differentiable geometry helpers
// ---------------------------------------------------------------------------

// KNN indices by Euclidean distance, self excluded, ties broken by lowest
// candidate index. points: [B,n,D] flat. Returns [B,n,k] flat indices.
template <class T>
std::vector<int64_t> knn_indices(const T* points, int64_t batch, int64_t n,
                                 int64_t d, int64_t k) {
  CM_CHECK(k >= 1 && k < n, "knn requires 1 <= k < n (k=" << k << ", n=" << n << ")");
  std::vector<int64_t> out(static_cast<size_t>(batch * n * k));
  std::vector<std::pair<T, int64_t>> dist(static_cast<size_t>(n));
  for (int64_t b = 0; b < batch; ++b) {
    const T* pts = points + b * n * d;
    for (int64_t i = 0; i < n; ++i) {
      const T* pi = pts + i * d;
      for (int64_t j = 0; j < n; ++j) {
        const T* pj = pts + j * d;
        T acc = T(0);
        for (int64_t c = 0; c < d; ++c) {
          T diff = pi[c] - pj[c];
          acc += diff * diff;
        }
        dist[static_cast<size_t>(j)] = {acc, j};
      }
      dist[static_cast<size_t>(i)].first = std::numeric_limits<T>::infinity();
      std::partial_sort(dist.begin(), dist.begin() + k, dist.end(),
                        [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first < b.first
                                                    : a.second < b.second;
                        });
      for (int64_t j = 0; j < k; ++j)
        out[static_cast<size_t>((b * n + i) * k + j)] = dist[static_cast<size_t>(j)].second;
    }
  }
  return out;
}

}  // namespace crossmodal
