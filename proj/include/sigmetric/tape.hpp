#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sigmetric/parallel.hpp"
#include "sigmetric/rng.hpp"
#include "sigmetric/tensor.hpp"

namespace sigmetric {

enum class Mode { train, eval };

// Named parameter with gradient and Adam moment buffers.  Running statistics
// (batch norm) are stored as non-trainable parameters so they are checkpointed
// but never touched by the optimizer.
template <class Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> adam_m;
  Tensor<Real> adam_v;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor<Real> v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape),
        adam_m(value.shape),
        adam_v(value.shape),
        trainable(train) {}
};

// Reverse-mode tape.  Each op appends a node holding its output value, a
// gradient buffer of the same shape, and a closure that pushes the node's
// accumulated gradient into its inputs.  Callers seed gradients directly on
// output nodes (loss gradients, metric-loss gradients on the embedding node)
// and then call run_backward(), which fires the closures in reverse creation
// order.  Gradients of parameter leaves are copied back to Param::grad.
template <class Real>
class Tape {
 public:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void()> backward;  // empty for leaves
  };

  Node* input(Tensor<Real> v) {
    return make_node(std::move(v), nullptr);
  }

  Node* leaf(Param<Real>& p) {
    Node* n = make_node(p.value, nullptr);
    param_leaves_.emplace_back(n, &p);
    return n;
  }

  // y[b,co,ot] = bias[co] + sum_{ci,k} x[b,ci,ot*stride+k-pad] * w[co,ci,k]
  // with pad = K/2 and output length (T + 2*pad - K)/stride + 1.
  Node* conv1d(Node* x, Node* w, Node* b, int stride) {
    if (x->value.rank() != 3)
      throw DimensionError("conv1d: input must be [B,C,T], got " +
                           x->value.shape_string());
    if (w->value.rank() != 3)
      throw DimensionError("conv1d: weight must be [Cout,Cin,K], got " +
                           w->value.shape_string());
    const int batch = x->value.dim(0);
    const int cin = x->value.dim(1);
    const int t_in = x->value.dim(2);
    const int cout = w->value.dim(0);
    const int k = w->value.dim(2);
    if (w->value.dim(1) != cin)
      throw DimensionError("conv1d: weight expects " +
                           std::to_string(w->value.dim(1)) +
                           " input channels, input has " + std::to_string(cin));
    if (b->value.shape != std::vector<int>{cout})
      throw DimensionError("conv1d: bias shape mismatch");
    if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
    const int pad = k / 2;
    const int t_out = (t_in + 2 * pad - k) / stride + 1;
    if (t_out < 1)
      throw DimensionError("conv1d: output length would be non-positive");

    Tensor<Real> out({batch, cout, t_out});
    const Real* xv = x->value.values.data();
    const Real* wv = w->value.values.data();
    const Real* bv = b->value.values.data();
    Real* ov = out.values.data();
    // Parallel over samples: each writes a disjoint [cout, t_out] slab.
    parallel_for(batch, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t bi = lo; bi < hi; ++bi) {
        const Real* xb = xv + bi * cin * t_in;
        Real* ob = ov + bi * cout * t_out;
        for (int co = 0; co < cout; ++co) {
          Real* orow = ob + static_cast<std::size_t>(co) * t_out;
          for (int ot = 0; ot < t_out; ++ot) orow[ot] = bv[co];
          const Real* wrow = wv + static_cast<std::size_t>(co) * cin * k;
          for (int ci = 0; ci < cin; ++ci) {
            const Real* xrow = xb + static_cast<std::size_t>(ci) * t_in;
            for (int kk = 0; kk < k; ++kk) {
              const Real wval = wrow[ci * k + kk];
              const int shift = kk - pad;
              // valid ot range: 0 <= ot*stride + shift < t_in
              int ot_lo = 0;
              if (shift < 0) ot_lo = (-shift + stride - 1) / stride;
              int ot_hi = (t_in - 1 - shift) / stride;
              if (ot_hi > t_out - 1) ot_hi = t_out - 1;
              const Real* src = xrow + shift;
              for (int ot = ot_lo; ot <= ot_hi; ++ot)
                orow[ot] += wval * src[static_cast<std::size_t>(ot) * stride];
            }
          }
        }
      }
    });

    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, w, b, y, batch, cin, t_in, cout, k, pad, stride,
                   t_out]() {
      const Real* gy = y->grad.values.data();
      const Real* xv2 = x->value.values.data();
      const Real* wv2 = w->value.values.data();
      // dX: parallel over samples (disjoint slabs).
      Real* gx = x->grad.values.data();
      parallel_for(batch, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t bi = lo; bi < hi; ++bi) {
          const Real* gb = gy + bi * cout * t_out;
          Real* gxb = gx + bi * cin * t_in;
          for (int co = 0; co < cout; ++co) {
            const Real* grow = gb + static_cast<std::size_t>(co) * t_out;
            const Real* wrow = wv2 + static_cast<std::size_t>(co) * cin * k;
            for (int ci = 0; ci < cin; ++ci) {
              Real* gxrow = gxb + static_cast<std::size_t>(ci) * t_in;
              for (int kk = 0; kk < k; ++kk) {
                const Real wval = wrow[ci * k + kk];
                const int shift = kk - pad;
                int ot_lo = 0;
                if (shift < 0) ot_lo = (-shift + stride - 1) / stride;
                int ot_hi = (t_in - 1 - shift) / stride;
                if (ot_hi > t_out - 1) ot_hi = t_out - 1;
                Real* dst = gxrow + shift;
                for (int ot = ot_lo; ot <= ot_hi; ++ot)
                  dst[static_cast<std::size_t>(ot) * stride] += wval * grow[ot];
              }
            }
          }
        }
      });
      // dW and db: parallel over output channels (disjoint rows).
      Real* gw = w->grad.values.data();
      Real* gbias = b->grad.values.data();
      parallel_for(cout, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t co = lo; co < hi; ++co) {
          Real* gwrow = gw + co * cin * k;
          Real bias_acc = 0;
          for (int bi = 0; bi < batch; ++bi) {
            const Real* grow =
                gy + (static_cast<std::size_t>(bi) * cout + co) * t_out;
            const Real* xb = xv2 + static_cast<std::size_t>(bi) * cin * t_in;
            for (int ot = 0; ot < t_out; ++ot) bias_acc += grow[ot];
            for (int ci = 0; ci < cin; ++ci) {
              const Real* xrow = xb + static_cast<std::size_t>(ci) * t_in;
              for (int kk = 0; kk < k; ++kk) {
                const int shift = kk - pad;
                int ot_lo = 0;
                if (shift < 0) ot_lo = (-shift + stride - 1) / stride;
                int ot_hi = (t_in - 1 - shift) / stride;
                if (ot_hi > t_out - 1) ot_hi = t_out - 1;
                const Real* src = xrow + shift;
                Real acc = 0;
                for (int ot = ot_lo; ot <= ot_hi; ++ot)
                  acc += grow[ot] * src[static_cast<std::size_t>(ot) * stride];
                gwrow[ci * k + kk] += acc;
              }
            }
          }
          gbias[co] += bias_acc;
        }
      });
    };
    return y;
  }

  // y[b,j] = bias[j] + sum_i x[b,i] * w[i,j]
  Node* affine(Node* x, Node* w, Node* b) {
    if (x->value.rank() != 2)
      throw DimensionError("affine: input must be [B,D], got " +
                           x->value.shape_string());
    const int batch = x->value.dim(0);
    const int din = x->value.dim(1);
    if (w->value.rank() != 2 || w->value.dim(0) != din)
      throw DimensionError("affine: weight shape " + w->value.shape_string() +
                           " does not match input " + x->value.shape_string());
    const int dout = w->value.dim(1);
    if (b->value.shape != std::vector<int>{dout})
      throw DimensionError("affine: bias shape mismatch");

    Tensor<Real> out({batch, dout});
    for (int bi = 0; bi < batch; ++bi) {
      const Real* xrow = x->value.values.data() + static_cast<std::size_t>(bi) * din;
      Real* orow = out.values.data() + static_cast<std::size_t>(bi) * dout;
      for (int j = 0; j < dout; ++j) orow[j] = b->value.values[j];
      for (int i = 0; i < din; ++i) {
        const Real xv = xrow[i];
        const Real* wrow = w->value.values.data() + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) orow[j] += xv * wrow[j];
      }
    }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, w, b, y, batch, din, dout]() {
      for (int bi = 0; bi < batch; ++bi) {
        const Real* grow = y->grad.values.data() + static_cast<std::size_t>(bi) * dout;
        const Real* xrow = x->value.values.data() + static_cast<std::size_t>(bi) * din;
        Real* gxrow = x->grad.values.data() + static_cast<std::size_t>(bi) * din;
        for (int i = 0; i < din; ++i) {
          const Real* wrow = w->value.values.data() + static_cast<std::size_t>(i) * dout;
          Real* gwrow = w->grad.values.data() + static_cast<std::size_t>(i) * dout;
          Real acc = 0;
          const Real xv = xrow[i];
          for (int j = 0; j < dout; ++j) {
            acc += grow[j] * wrow[j];
            gwrow[j] += grow[j] * xv;
          }
          gxrow[i] += acc;
        }
        Real* gb = b->grad.values.data();
        for (int j = 0; j < dout; ++j) gb[j] += grow[j];
      }
    };
    return y;
  }

  // Batch norm over [B,C,T] (per channel across B and T) or [B,C] (per
  // feature across B).  Train mode normalizes with batch statistics (biased
  // variance) and updates the running parameters in place; eval mode
  // normalizes with the running statistics.
  Node* batchnorm(Node* x, Node* gamma, Node* beta, Param<Real>& running_mean,
                  Param<Real>& running_var, Mode mode, Real momentum = Real(0.1),
                  Real eps = Real(1e-5)) {
    const int rank = x->value.rank();
    if (rank != 2 && rank != 3)
      throw DimensionError("batchnorm: input must be [B,C] or [B,C,T], got " +
                           x->value.shape_string());
    const int batch = x->value.dim(0);
    const int ch = x->value.dim(1);
    const int t = rank == 3 ? x->value.dim(2) : 1;
    if (gamma->value.shape != std::vector<int>{ch} ||
        beta->value.shape != std::vector<int>{ch} ||
        running_mean.value.shape != std::vector<int>{ch} ||
        running_var.value.shape != std::vector<int>{ch})
      throw DimensionError("batchnorm: parameter shapes must be [C]");
    const std::int64_t n = static_cast<std::int64_t>(batch) * t;
    if (mode == Mode::train && n < 2)
      throw TrainError("batchnorm: batch of size < 2 in train mode");

    auto mean_buf = std::make_shared<std::vector<Real>>(ch, Real(0));
    auto inv_std_buf = std::make_shared<std::vector<Real>>(ch, Real(0));
    const Real* xv = x->value.values.data();
    if (mode == Mode::train) {
      for (int c = 0; c < ch; ++c) {
        Real sum = 0;
        for (int bi = 0; bi < batch; ++bi) {
          const Real* row = xv + (static_cast<std::size_t>(bi) * ch + c) * t;
          for (int ti = 0; ti < t; ++ti) sum += row[ti];
        }
        const Real mu = sum / static_cast<Real>(n);
        Real var = 0;
        for (int bi = 0; bi < batch; ++bi) {
          const Real* row = xv + (static_cast<std::size_t>(bi) * ch + c) * t;
          for (int ti = 0; ti < t; ++ti) {
            const Real d = row[ti] - mu;
            var += d * d;
          }
        }
        var /= static_cast<Real>(n);
        (*mean_buf)[c] = mu;
        (*inv_std_buf)[c] = Real(1) / std::sqrt(var + eps);
        running_mean.value.values[c] =
            (Real(1) - momentum) * running_mean.value.values[c] + momentum * mu;
        running_var.value.values[c] =
            (Real(1) - momentum) * running_var.value.values[c] + momentum * var;
      }
    } else {
      for (int c = 0; c < ch; ++c) {
        (*mean_buf)[c] = running_mean.value.values[c];
        (*inv_std_buf)[c] =
            Real(1) / std::sqrt(running_var.value.values[c] + eps);
      }
    }

    Tensor<Real> out(x->value.shape);
    Real* ov = out.values.data();
    for (int bi = 0; bi < batch; ++bi) {
      for (int c = 0; c < ch; ++c) {
        const Real* row = xv + (static_cast<std::size_t>(bi) * ch + c) * t;
        Real* orow = ov + (static_cast<std::size_t>(bi) * ch + c) * t;
        const Real mu = (*mean_buf)[c];
        const Real is = (*inv_std_buf)[c];
        const Real g = gamma->value.values[c];
        const Real be = beta->value.values[c];
        for (int ti = 0; ti < t; ++ti) orow[ti] = (row[ti] - mu) * is * g + be;
      }
    }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, gamma, beta, y, mean_buf, inv_std_buf, mode, batch, ch, t,
                   n]() {
      const Real* gy = y->grad.values.data();
      const Real* xv2 = x->value.values.data();
      Real* gx = x->grad.values.data();
      for (int c = 0; c < ch; ++c) {
        const Real mu = (*mean_buf)[c];
        const Real is = (*inv_std_buf)[c];
        const Real g = gamma->value.values[c];
        Real sum_dy = 0;
        Real sum_dy_xhat = 0;
        for (int bi = 0; bi < batch; ++bi) {
          const Real* grow = gy + (static_cast<std::size_t>(bi) * ch + c) * t;
          const Real* xrow = xv2 + (static_cast<std::size_t>(bi) * ch + c) * t;
          for (int ti = 0; ti < t; ++ti) {
            sum_dy += grow[ti];
            sum_dy_xhat += grow[ti] * (xrow[ti] - mu) * is;
          }
        }
        gamma->grad.values[c] += sum_dy_xhat;
        beta->grad.values[c] += sum_dy;
        if (mode == Mode::train) {
          const Real inv_n = Real(1) / static_cast<Real>(n);
          for (int bi = 0; bi < batch; ++bi) {
            const Real* grow = gy + (static_cast<std::size_t>(bi) * ch + c) * t;
            const Real* xrow = xv2 + (static_cast<std::size_t>(bi) * ch + c) * t;
            Real* gxrow = gx + (static_cast<std::size_t>(bi) * ch + c) * t;
            for (int ti = 0; ti < t; ++ti) {
              const Real xhat = (xrow[ti] - mu) * is;
              gxrow[ti] += g * is *
                           (grow[ti] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
            }
          }
        } else {
          for (int bi = 0; bi < batch; ++bi) {
            const Real* grow = gy + (static_cast<std::size_t>(bi) * ch + c) * t;
            Real* gxrow = gx + (static_cast<std::size_t>(bi) * ch + c) * t;
            for (int ti = 0; ti < t; ++ti) gxrow[ti] += g * is * grow[ti];
          }
        }
      }
    };
    return y;
  }

  Node* relu(Node* x) {
    Tensor<Real> out(x->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.values[i] = x->value.values[i] > Real(0) ? x->value.values[i] : Real(0);
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y]() {
      for (std::size_t i = 0; i < y->grad.numel(); ++i)
        if (x->value.values[i] > Real(0)) x->grad.values[i] += y->grad.values[i];
    };
    return y;
  }

  Node* add(Node* a, Node* b) {
    if (!same_shape(a->value, b->value))
      throw DimensionError("add: shapes differ, " + a->value.shape_string() +
                           " vs " + b->value.shape_string());
    Tensor<Real> out(a->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.values[i] = a->value.values[i] + b->value.values[i];
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [a, b, y]() {
      for (std::size_t i = 0; i < y->grad.numel(); ++i) {
        a->grad.values[i] += y->grad.values[i];
        b->grad.values[i] += y->grad.values[i];
      }
    };
    return y;
  }

  // Strided average pooling over time with non-overlapping windows of size
  // `stride`; a short trailing window averages the remaining samples.  The
  // output length matches a same-padded strided conv, so this serves as the
  // parameter-free downsampling path of a residual shortcut.
  Node* avg_pool_stride(Node* x, int stride) {
    if (x->value.rank() != 3)
      throw DimensionError("avg_pool_stride: input must be [B,C,T], got " +
                           x->value.shape_string());
    if (stride < 1) throw ConfigError("avg_pool_stride: stride must be >= 1");
    const int batch = x->value.dim(0);
    const int ch = x->value.dim(1);
    const int t_in = x->value.dim(2);
    const int t_out = (t_in - 1) / stride + 1;
    Tensor<Real> out({batch, ch, t_out});
    for (int bi = 0; bi < batch; ++bi)
      for (int c = 0; c < ch; ++c) {
        const Real* row =
            x->value.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t_in;
        Real* orow =
            out.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t_out;
        for (int ot = 0; ot < t_out; ++ot) {
          const int lo = ot * stride;
          const int hi = std::min(lo + stride, t_in);
          Real s = 0;
          for (int ti = lo; ti < hi; ++ti) s += row[ti];
          orow[ot] = s / static_cast<Real>(hi - lo);
        }
      }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y, batch, ch, t_in, t_out, stride]() {
      for (int bi = 0; bi < batch; ++bi)
        for (int c = 0; c < ch; ++c) {
          const Real* grow = y->grad.values.data() +
                             (static_cast<std::size_t>(bi) * ch + c) * t_out;
          Real* gxrow = x->grad.values.data() +
                        (static_cast<std::size_t>(bi) * ch + c) * t_in;
          for (int ot = 0; ot < t_out; ++ot) {
            const int lo = ot * stride;
            const int hi = std::min(lo + stride, t_in);
            const Real g = grow[ot] / static_cast<Real>(hi - lo);
            for (int ti = lo; ti < hi; ++ti) gxrow[ti] += g;
          }
        }
    };
    return y;
  }

  // Appends zero-valued channels: [B,C,T] -> [B,new_ch,T], new_ch >= C.
  Node* channel_pad(Node* x, int new_ch) {
    if (x->value.rank() != 3)
      throw DimensionError("channel_pad: input must be [B,C,T], got " +
                           x->value.shape_string());
    const int batch = x->value.dim(0);
    const int ch = x->value.dim(1);
    const int t = x->value.dim(2);
    if (new_ch < ch)
      throw DimensionError("channel_pad: cannot shrink channels (" +
                           std::to_string(ch) + " -> " + std::to_string(new_ch) + ")");
    Tensor<Real> out({batch, new_ch, t});
    for (int bi = 0; bi < batch; ++bi)
      for (int c = 0; c < ch; ++c) {
        const Real* row =
            x->value.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t;
        Real* orow =
            out.values.data() + (static_cast<std::size_t>(bi) * new_ch + c) * t;
        std::copy(row, row + t, orow);
      }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y, batch, ch, t, new_ch]() {
      for (int bi = 0; bi < batch; ++bi)
        for (int c = 0; c < ch; ++c) {
          const Real* grow = y->grad.values.data() +
                             (static_cast<std::size_t>(bi) * new_ch + c) * t;
          Real* gxrow =
              x->grad.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t;
          for (int ti = 0; ti < t; ++ti) gxrow[ti] += grow[ti];
        }
    };
    return y;
  }

  // [B,C,T] -> [B,C], mean over time.
  Node* global_avg_pool(Node* x) {
    if (x->value.rank() != 3)
      throw DimensionError("global_avg_pool: input must be [B,C,T], got " +
                           x->value.shape_string());
    const int batch = x->value.dim(0);
    const int ch = x->value.dim(1);
    const int t = x->value.dim(2);
    Tensor<Real> out({batch, ch});
    for (int bi = 0; bi < batch; ++bi)
      for (int c = 0; c < ch; ++c) {
        const Real* row =
            x->value.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t;
        Real s = 0;
        for (int ti = 0; ti < t; ++ti) s += row[ti];
        out.values[static_cast<std::size_t>(bi) * ch + c] = s / static_cast<Real>(t);
      }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y, batch, ch, t]() {
      const Real inv_t = Real(1) / static_cast<Real>(t);
      for (int bi = 0; bi < batch; ++bi)
        for (int c = 0; c < ch; ++c) {
          const Real g =
              y->grad.values[static_cast<std::size_t>(bi) * ch + c] * inv_t;
          Real* row =
              x->grad.values.data() + (static_cast<std::size_t>(bi) * ch + c) * t;
          for (int ti = 0; ti < t; ++ti) row[ti] += g;
        }
    };
    return y;
  }

  // Inverted dropout.  The keep mask is a pure function of (seed, step) and
  // the element index — independent of values, mode switches elsewhere, or
  // the worker count.  Eval mode is the identity.
  Node* dropout(Node* x, double rate, Mode mode, std::uint64_t seed,
                std::uint64_t step) {
    if (rate < 0.0 || rate >= 1.0)
      throw ConfigError("dropout rate must lie in [0, 1)");
    if (mode == Mode::eval || rate == 0.0) {
      Tensor<Real> out = x->value;
      Node* y = make_node(std::move(out), nullptr);
      y->backward = [x, y]() {
        for (std::size_t i = 0; i < y->grad.numel(); ++i)
          x->grad.values[i] += y->grad.values[i];
      };
      return y;
    }
    auto mask = std::make_shared<std::vector<Real>>(x->value.numel(), Real(0));
    Rng rng(derive_seed(seed, "dropout_mask", step));
    const Real scale = Real(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < mask->size(); ++i)
      (*mask)[i] = rng.next_unit() >= rate ? scale : Real(0);
    Tensor<Real> out(x->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.values[i] = x->value.values[i] * (*mask)[i];
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y, mask]() {
      for (std::size_t i = 0; i < y->grad.numel(); ++i)
        x->grad.values[i] += y->grad.values[i] * (*mask)[i];
    };
    return y;
  }

  Node* sigmoid(Node* x) {
    Tensor<Real> out(x->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const Real v = x->value.values[i];
      // Branch on sign for overflow-free evaluation.
      out.values[i] = v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                                   : std::exp(v) / (Real(1) + std::exp(v));
    }
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y]() {
      for (std::size_t i = 0; i < y->grad.numel(); ++i) {
        const Real s = y->value.values[i];
        x->grad.values[i] += y->grad.values[i] * s * (Real(1) - s);
      }
    };
    return y;
  }

  Node* sum(Node* x) {
    Real s = 0;
    for (Real v : x->value.values) s += v;
    Tensor<Real> out({1});
    out.values[0] = s;
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y]() {
      const Real g = y->grad.values[0];
      for (std::size_t i = 0; i < x->grad.numel(); ++i) x->grad.values[i] += g;
    };
    return y;
  }

  Node* mean(Node* x) {
    if (x->value.numel() == 0) throw DimensionError("mean of an empty tensor");
    Real s = 0;
    for (Real v : x->value.values) s += v;
    Tensor<Real> out({1});
    const Real inv = Real(1) / static_cast<Real>(x->value.numel());
    out.values[0] = s * inv;
    Node* y = make_node(std::move(out), nullptr);
    y->backward = [x, y, inv]() {
      const Real g = y->grad.values[0] * inv;
      for (std::size_t i = 0; i < x->grad.numel(); ++i) x->grad.values[i] += g;
    };
    return y;
  }

  // Fires every backward closure in reverse creation order, then copies
  // parameter-leaf gradients back into their Param::grad (accumulating, so a
  // caller can sum gradients across micro-batches if it wants to).
  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if ((*it)->backward) (*it)->backward();
    for (auto& [node, param] : param_leaves_)
      for (std::size_t i = 0; i < node->grad.numel(); ++i)
        param->grad.values[i] += node->grad.values[i];
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  Node* make_node(Tensor<Real> value, std::nullptr_t) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->grad = Tensor<Real>(node->value.shape);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  std::deque<std::unique_ptr<Node>> nodes_;
  std::vector<std::pair<Node*, Param<Real>*>> param_leaves_;
};

}  // namespace sigmetric
