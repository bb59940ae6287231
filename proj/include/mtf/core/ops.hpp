#pragma once

// Differentiable operators on Tape<T>. Every operator checks its shapes up
// front and throws ShapeError naming the mismatch. Backward closures only
// touch gradients of inputs that need them.

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtf/core/tape.hpp"

namespace mtf {

/// Deliberate operator corruption used as a negative control for the
/// gradient checker. Never set outside tests and `gradcheck --corrupt`.
enum class OpFault { None, ReluBackward, ConvWeightBackward };
inline std::atomic<OpFault> g_op_fault{OpFault::None};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

// Spatial layout of a rank-3 (C,H,W) or rank-4 (N,C,H,W) feature map.
struct MapDims {
  std::size_t n, c, h, w;
  bool batched;
};

inline MapDims map_dims(const Shape& s, const char* op) {
  if (s.rank() == 3) return {1, s[0], s[1], s[2], false};
  if (s.rank() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected CxHxW or NxCxHxW input, got " + s.str());
}

inline Shape map_shape(const MapDims& d, std::size_t c, std::size_t h, std::size_t w) {
  return d.batched ? Shape{d.n, c, h, w} : Shape{c, h, w};
}

template <class T>
void im2col(const T* in, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = in + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                std::size_t pad, std::size_t ho, std::size_t wo, T* out) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* dst = out + (ci * h + static_cast<std::size_t>(iy)) * w;
          const T* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation (no kernel flip) with zero padding and floor output
/// extents: H' = floor((H + 2 pad - k) / stride) + 1.
template <class T>
Var conv2d(Tape<T>& tape, Var x, Var weights, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor<T>& xin = tape.value(x);
  const Tensor<T>& wt = tape.value(weights);
  const Tensor<T>& bt = tape.value(bias);
  const auto d = detail::map_dims(xin.shape(), "conv2d");
  if (wt.shape().rank() != 4 || wt.shape()[2] != wt.shape()[3]) {
    throw ShapeError("conv2d: weights must be Cout x Cin x k x k, got " + wt.shape().str());
  }
  const std::size_t cout = wt.shape()[0], cin = wt.shape()[1], k = wt.shape()[2];
  if (cin != d.c) {
    throw ShapeError("conv2d: weights expect " + std::to_string(cin) + " input channels but input " +
                     xin.shape().str() + " has " + std::to_string(d.c));
  }
  if (bt.shape().rank() != 1 || bt.shape()[0] != cout) {
    throw ShapeError("conv2d: bias " + bt.shape().str() + " does not match " + std::to_string(cout) + " outputs");
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (d.h + 2 * pad < k || d.w + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + xin.shape().str());
  }
  const std::size_t ho = (d.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (d.w + 2 * pad - k) / stride + 1;
  const std::size_t kk = cin * k * k, p = ho * wo;

  Tensor<T> out(detail::map_shape(d, cout, ho, wo));
  const bool keep = tape.recording() && (tape.needs_grad(x) || tape.needs_grad(weights) || tape.needs_grad(bias));
  auto cols = std::make_shared<AlignedVector<T>>(keep ? d.n * kk * p : kk * p);
  detail::CMatMap<T> wm(wt.ptr(), cout, kk);
  for (std::size_t n = 0; n < d.n; ++n) {
    T* c = cols->data() + (keep ? n * kk * p : 0);
    detail::im2col(xin.ptr() + n * d.c * d.h * d.w, d.c, d.h, d.w, k, stride, pad, ho, wo, c);
    detail::MatMap<T> om(out.ptr() + n * cout * p, cout, p);
    om.noalias() = wm * detail::CMatMap<T>(c, kk, p);
    for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bt[o];
  }
  if (!keep) cols.reset();

  return tape.push(std::move(out), {x, weights, bias}, [=](Tape<T>& t, Var self) {
    const Tensor<T>& gy = t.grad(self);
    const Tensor<T>& wv = t.value(weights);
    detail::CMatMap<T> wmat(wv.ptr(), cout, kk);
    const bool gx = t.needs_grad(x), gw = t.needs_grad(weights), gb = t.needs_grad(bias);
    AlignedVector<T> dcols(gx ? kk * p : 0);
    for (std::size_t n = 0; n < d.n; ++n) {
      detail::CMatMap<T> dy(gy.ptr() + n * cout * p, cout, p);
      detail::CMatMap<T> c(cols->data() + n * kk * p, kk, p);
      if (gw) {
        detail::MatMap<T> dw(t.grad(weights).ptr(), cout, kk);
        if (g_op_fault.load() == OpFault::ConvWeightBackward) {
          dw.noalias() += T(1.1) * dy * c.transpose();
        } else {
          dw.noalias() += dy * c.transpose();
        }
      }
      if (gb) {
        T* db = t.grad(bias).ptr();
        for (std::size_t o = 0; o < cout; ++o) db[o] += dy.row(o).sum();
      }
      if (gx) {
        detail::MatMap<T> dc(dcols.data(), kk, p);
        dc.noalias() = wmat.transpose() * dy;
        detail::col2im_add(dcols.data(), d.c, d.h, d.w, k, stride, pad, ho, wo,
                           t.grad(x).ptr() + n * d.c * d.h * d.w);
      }
    }
  });
}

/// Max pooling result plus, for each output cell, the linear input index
/// that produced it.
template <class T>
struct PoolResult {
  Tensor<T> value;
  std::vector<std::size_t> argmax;
};

/// Window maximum with ties going to the lowest linear input index.
template <class T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& in, std::size_t k, std::size_t stride) {
  if (k < 1 || stride < 1) throw ShapeError("maxpool2d: kernel and stride must be >= 1");
  const auto d = detail::map_dims(in.shape(), "maxpool2d");
  if (k > d.h || k > d.w) throw ShapeError("maxpool2d: window " + std::to_string(k) + " exceeds input " + in.shape().str());
  const std::size_t ho = (d.h - k) / stride + 1, wo = (d.w - k) / stride + 1;
  PoolResult<T> r{Tensor<T>(detail::map_shape(d, d.c, ho, wo)), {}};
  r.argmax.resize(r.value.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::size_t base = plane * d.h * d.w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * stride * d.w + ox * stride;
        T bv = in[best];
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * d.w + ox * stride + kx;
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        }
        r.value[o] = bv;
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <class T>
Var maxpool2d(Tape<T>& tape, Var x, std::size_t k, std::size_t stride) {
  auto r = maxpool2d_forward(tape.value(x), k, stride);
  auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(r.argmax));
  return tape.push(std::move(r.value), {x}, [x, argmax](Tape<T>& t, Var self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
  });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <class T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  return tape.push(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& gy = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.grad(x);
    const T scale = g_op_fault.load() == OpFault::ReluBackward ? T(0.9) : T(1);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv[i] > T(0)) gx[i] += scale * gy[i];
    }
  });
}

/// y = W x + b for a vector x (n) or a batch X (N x n).
template <class T>
Var linear(Tape<T>& tape, Var x, Var weights, Var bias) {
  const Tensor<T>& xin = tape.value(x);
  const Tensor<T>& wt = tape.value(weights);
  const Tensor<T>& bt = tape.value(bias);
  if (wt.shape().rank() != 2) throw ShapeError("linear: weights must be m x n, got " + wt.shape().str());
  const std::size_t m = wt.shape()[0], n = wt.shape()[1];
  std::size_t batch = 0;
  bool batched = false;
  if (xin.shape().rank() == 1 && xin.shape()[0] == n) {
    batch = 1;
  } else if (xin.shape().rank() == 2 && xin.shape()[1] == n) {
    batch = xin.shape()[0];
    batched = true;
  } else {
    throw ShapeError("linear: input " + xin.shape().str() + " does not match weights " + wt.shape().str());
  }
  if (bt.shape().rank() != 1 || bt.shape()[0] != m) {
    throw ShapeError("linear: bias " + bt.shape().str() + " does not match " + std::to_string(m) + " outputs");
  }
  Tensor<T> out(batched ? Shape{batch, m} : Shape{m});
  detail::MatMap<T> ym(out.ptr(), batch, m);
  detail::CMatMap<T> xm(xin.ptr(), batch, n);
  detail::CMatMap<T> wm(wt.ptr(), m, n);
  ym.noalias() = xm * wm.transpose();
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < m; ++c) ym(r, c) += bt[c];
  }
  return tape.push(std::move(out), {x, weights, bias}, [=](Tape<T>& t, Var self) {
    detail::CMatMap<T> dy(t.grad(self).ptr(), batch, m);
    if (t.needs_grad(x)) {
      detail::MatMap<T> dx(t.grad(x).ptr(), batch, n);
      dx.noalias() += dy * detail::CMatMap<T>(t.value(weights).ptr(), m, n);
    }
    if (t.needs_grad(weights)) {
      detail::MatMap<T> dw(t.grad(weights).ptr(), m, n);
      dw.noalias() += dy.transpose() * detail::CMatMap<T>(t.value(x).ptr(), batch, n);
    }
    if (t.needs_grad(bias)) {
      T* db = t.grad(bias).ptr();
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t c = 0; c < m; ++c) db[c] += dy(r, c);
      }
    }
  });
}

/// Collapses all non-batch extents: CxHxW -> (CHW), NxCxHxW -> N x (CHW).
template <class T>
Var flatten(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  const Shape& s = in.shape();
  Shape to = s.rank() == 4 ? Shape{s[0], s[1] * s[2] * s[3]} : Shape{in.size()};
  return tape.push(in.reshaped(to), {x}, [x](Tape<T>& t, Var self) {
    detail::add_into(t.grad(x), t.grad(self).reshaped(t.value(x).shape()));
  });
}

/// Channel-axis concatenation of feature maps with equal spatial extents.
template <class T>
Var concat_channels(Tape<T>& tape, std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const auto d0 = detail::map_dims(tape.value(inputs[0]).shape(), "concat_channels");
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto di = detail::map_dims(tape.value(inputs[i]).shape(), "concat_channels");
    if (di.batched != d0.batched || di.n != d0.n || di.h != d0.h || di.w != d0.w) {
      throw ShapeError("concat_channels: input 0 " + tape.value(inputs[0]).shape().str() + " and input " +
                       std::to_string(i) + " " + tape.value(inputs[i]).shape().str() + " differ outside the channel axis");
    }
    channels.push_back(di.c);
    total += di.c;
  }
  const std::size_t plane = d0.h * d0.w;
  Tensor<T> out(detail::map_shape(d0, total, d0.h, d0.w));
  for (std::size_t n = 0; n < d0.n; ++n) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const T* src = tape.value(inputs[i]).ptr() + n * channels[i] * plane;
      std::copy(src, src + channels[i] * plane, out.ptr() + (n * total + off) * plane);
      off += channels[i];
    }
  }
  return tape.push(std::move(out), inputs, [ins = std::vector<Var>(inputs.begin(), inputs.end()), channels, n = d0.n,
                                              total, plane](Tape<T>& t, Var self) {
    const Tensor<T>& gy = t.grad(self);
    for (std::size_t b = 0; b < n; ++b) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (t.needs_grad(ins[i])) {
          const T* src = gy.ptr() + (b * total + off) * plane;
          T* dst = t.grad(ins[i]).ptr() + b * channels[i] * plane;
          for (std::size_t j = 0; j < channels[i] * plane; ++j) dst[j] += src[j];
        }
        off += channels[i];
      }
    }
  });
}

/// Channels [begin, begin + count) of a feature map.
template <class T>
Var slice_channels(Tape<T>& tape, Var x, std::size_t begin, std::size_t count) {
  const Tensor<T>& in = tape.value(x);
  const auto d = detail::map_dims(in.shape(), "slice_channels");
  if (count < 1 || begin + count > d.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + in.shape().str());
  }
  const std::size_t plane = d.h * d.w;
  Tensor<T> out(detail::map_shape(d, count, d.h, d.w));
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* src = in.ptr() + (n * d.c + begin) * plane;
    std::copy(src, src + count * plane, out.ptr() + n * count * plane);
  }
  return tape.push(std::move(out), {x}, [=](Tape<T>& t, Var self) {
    const Tensor<T>& gy = t.grad(self);
    T* gx = t.grad(x).ptr();
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t j = 0; j < count * plane; ++j) gx[(n * d.c + begin) * plane + j] += gy[n * count * plane + j];
    }
  });
}

namespace detail {

template <class T>
std::size_t pair_rows(const Tensor<T>& z, const char* op) {
  const Shape& s = z.shape();
  if (s.rank() == 1 && s[0] == 2) return 1;
  if (s.rank() == 2 && s[1] == 2) return s[0];
  throw ShapeError(std::string(op) + ": expected 2 or Nx2 logits, got " + s.str());
}

template <class T>
void check_finite(const Tensor<T>& z, const char* op) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw NumericError(std::string(op) + ": non-finite input at index " + std::to_string(i));
  }
}

}  // namespace detail

/// Two-way softmax over the last extent, computed with max subtraction.
template <class T>
Tensor<T> softmax2_values(const Tensor<T>& z) {
  const std::size_t rows = detail::pair_rows(z, "softmax2");
  detail::check_finite(z, "softmax2");
  Tensor<T> p(z.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T a = z[2 * r], b = z[2 * r + 1];
    const T m = std::max(a, b);
    const T ea = std::exp(a - m), eb = std::exp(b - m);
    const T s = ea + eb;
    p[2 * r] = ea / s;
    p[2 * r + 1] = eb / s;
  }
  return p;
}

template <class T>
Var softmax2(Tape<T>& tape, Var logits) {
  Tensor<T> p = softmax2_values(tape.value(logits));
  return tape.push(std::move(p), {logits}, [logits](Tape<T>& t, Var self) {
    const Tensor<T>& pv = t.value(self);
    const Tensor<T>& gp = t.grad(self);
    Tensor<T>& gz = t.grad(logits);
    for (std::size_t r = 0; r < pv.size() / 2; ++r) {
      const T dot = gp[2 * r] * pv[2 * r] + gp[2 * r + 1] * pv[2 * r + 1];
      gz[2 * r] += pv[2 * r] * (gp[2 * r] - dot);
      gz[2 * r + 1] += pv[2 * r + 1] * (gp[2 * r + 1] - dot);
    }
  });
}

/// sum_r w_r * -log p[r, label_r] over two-way probability rows.
template <class T>
Var log_loss(Tape<T>& tape, Var probs, std::vector<int> labels, std::vector<T> weights) {
  const Tensor<T>& p = tape.value(probs);
  const std::size_t rows = detail::pair_rows(p, "log_loss");
  if (labels.size() != rows || weights.size() != rows) throw ShapeError("log_loss: label/weight count mismatch");
  constexpr T tiny = std::numeric_limits<T>::min();
  T sum = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] != T(0)) sum += weights[r] * -std::log(std::max(p[2 * r + (labels[r] ? 1 : 0)], tiny));
  }
  Tensor<T> out(Shape{1}, {sum});
  return tape.push(std::move(out), {probs}, [=](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Tensor<T>& pv = t.value(probs);
    Tensor<T>& gp = t.grad(probs);
    for (std::size_t r = 0; r < rows; ++r) {
      if (weights[r] == T(0)) continue;
      const std::size_t i = 2 * r + (labels[r] ? 1 : 0);
      gp[i] -= g * weights[r] / std::max(pv[i], tiny);
    }
  });
}

/// Fused softmax + log loss from raw logits via log-sum-exp:
/// sum_r w_r * (logsumexp(z_r) - z_r[label_r]).
template <class T>
Var softmax_xent(Tape<T>& tape, Var logits, std::vector<int> labels, std::vector<T> weights) {
  const Tensor<T>& z = tape.value(logits);
  const std::size_t rows = detail::pair_rows(z, "softmax_xent");
  if (labels.size() != rows || weights.size() != rows) throw ShapeError("softmax_xent: label/weight count mismatch");
  detail::check_finite(z, "softmax_xent");
  T sum = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] == T(0)) continue;
    const T a = z[2 * r], b = z[2 * r + 1];
    const T m = std::max(a, b);
    const T lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    sum += weights[r] * (lse - (labels[r] ? b : a));
  }
  Tensor<T> out(Shape{1}, {sum});
  return tape.push(std::move(out), {logits}, [=](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Tensor<T> p = softmax2_values(t.value(logits));
    Tensor<T>& gz = t.grad(logits);
    for (std::size_t r = 0; r < rows; ++r) {
      if (weights[r] == T(0)) continue;
      const T c = g * weights[r];
      gz[2 * r] += c * (p[2 * r] - (labels[r] ? T(0) : T(1)));
      gz[2 * r + 1] += c * (p[2 * r + 1] - (labels[r] ? T(1) : T(0)));
    }
  });
}

/// sum_i w_i (pred_i - target_i)^2; entries with zero weight contribute
/// neither loss nor gradient.
template <class T>
Var weighted_sq_error(Tape<T>& tape, Var pred, Tensor<T> target, Tensor<T> weights) {
  const Tensor<T>& p = tape.value(pred);
  if (!(target.shape() == p.shape()) || !(weights.shape() == p.shape())) {
    throw ShapeError("weighted_sq_error: prediction " + p.shape().str() + ", target " + target.shape().str() +
                     " and weights " + weights.shape().str() + " must agree");
  }
  T sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (weights[i] != T(0)) {
      const T e = p[i] - target[i];
      sum += weights[i] * e * e;
    }
  }
  Tensor<T> out(Shape{1}, {sum});
  auto tw = std::make_shared<std::pair<Tensor<T>, Tensor<T>>>(std::move(target), std::move(weights));
  return tape.push(std::move(out), {pred}, [pred, tw](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Tensor<T>& pv = t.value(pred);
    Tensor<T>& gp = t.grad(pred);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (tw->second[i] != T(0)) gp[i] += g * T(2) * tw->second[i] * (pv[i] - tw->first[i]);
    }
  });
}

/// sum_i c_i s_i over scalar nodes.
template <class T>
Var weighted_sum(Tape<T>& tape, std::span<const Var> scalars, std::span<const T> coefs) {
  if (scalars.size() != coefs.size()) throw ShapeError("weighted_sum: term/coefficient count mismatch");
  T sum = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor<T>& v = tape.value(scalars[i]);
    if (v.size() != 1) throw ShapeError("weighted_sum: term " + std::to_string(i) + " is not a scalar");
    sum += coefs[i] * v[0];
  }
  Tensor<T> out(Shape{1}, {sum});
  return tape.push(std::move(out), scalars,
                   [ins = std::vector<Var>(scalars.begin(), scalars.end()),
                    cs = std::vector<T>(coefs.begin(), coefs.end())](Tape<T>& t, Var self) {
                     const T g = t.grad(self)[0];
                     for (std::size_t i = 0; i < ins.size(); ++i) {
                       if (t.needs_grad(ins[i])) t.grad(ins[i])[0] += cs[i] * g;
                     }
                   });
}

}  // namespace mtf
