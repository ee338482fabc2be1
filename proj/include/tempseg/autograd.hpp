/* Copyright 2026 The tempseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Minimal reverse-mode automatic differentiation over Tensor<T>.
//
// Every op computes its value eagerly. When at least one input requires a
// gradient, the op also records a backward closure that accumulates into the
// inputs' gradient buffers. Graphs are released when the last Var referencing
// the output goes away; parameters are long-lived leaves whose gradients
// accumulate until zero_grad().

#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor<T>(value.shape);
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->ensure_grad();
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient buffer; zeros when nothing has been accumulated yet.
  const Tensor<T>& grad() const { return node_->ensure_grad(); }
  void zero_grad() {
    if (node_) node_->ensure_grad().fill(T{0});
  }
  T item() const {
    TEMPSEG_REQUIRE(node_->value.size() == 1, "item() on tensor of shape ",
                    shape_str(node_->value.shape));
    return node_->value[0];
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Builds an op output. `fn` is only kept when some input needs a gradient.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

// Gradient buffer of an input, or nullptr when it does not need one.
template <typename T>
Tensor<T>* grad_of(const Var<T>& v) {
  return v.requires_grad() ? &v.node()->ensure_grad() : nullptr;
}

}  // namespace detail

/// Runs reverse accumulation from a scalar root, seeding d(root)/d(root) = 1.
template <typename T>
void backward(const Var<T>& root) {
  TEMPSEG_REQUIRE(root.size() == 1, "backward root must be scalar, got ", shape_str(root.shape()));
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    for (auto* g : {detail::grad_of(a), detail::grad_of(b)}) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_of(b))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * b.value()[i];
    if (auto* g = detail::grad_of(b))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * a.value()[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= s;
  return detail::make_op<T>(std::move(out), {a}, [a, s](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().data) total += v;
  return detail::make_op<T>(Tensor<T>({1}, total), {a}, [a](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (auto& v : g->data) v += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = T{1} / (T{1} + std::exp(-v));
  return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T y = self.value[i];
        (*g)[i] += self.grad[i] * y * (T{1} - y);
      }
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = std::tanh(v);
  return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T y = self.value[i];
        (*g)[i] += self.grad[i] * (T{1} - y * y);
      }
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = v > T{0} ? v : T{0};
  return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i)
        if (a.value()[i] > T{0}) (*g)[i] += self.grad[i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  TEMPSEG_REQUIRE(shape_size(shape) == a.size(), "cannot reshape ", shape_str(a.shape()), " to ",
                  shape_str(shape));
  Tensor<T> out;
  out.shape = std::move(shape);
  out.data = a.value().data;
  return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Channel-structured ops on [C,H,W]

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  TEMPSEG_REQUIRE(a.value().rank() == 3 && b.value().rank() == 3 && a.shape()[1] == b.shape()[1] &&
                      a.shape()[2] == b.shape()[2],
                  "spatial mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> out({a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]});
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::grad_of(b))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[a.size() + i];
  });
}

/// Channels [begin, end) of a [C,H,W] tensor.
template <typename T>
Var<T> slice_channels(const Var<T>& a, int begin, int end) {
  TEMPSEG_REQUIRE(a.value().rank() == 3 && 0 <= begin && begin < end && end <= a.shape()[0],
                  "bad channel slice [", begin, ",", end, ") of ", shape_str(a.shape()));
  const std::size_t plane = static_cast<std::size_t>(a.shape()[1]) * a.shape()[2];
  Tensor<T> out({end - begin, a.shape()[1], a.shape()[2]});
  std::copy(a.value().data.begin() + static_cast<std::ptrdiff_t>(begin * plane),
            a.value().data.begin() + static_cast<std::ptrdiff_t>(end * plane), out.data.begin());
  return detail::make_op<T>(std::move(out), {a}, [a, begin, plane](Node<T>& self) {
    if (auto* g = detail::grad_of(a))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * plane + i] += self.grad[i];
  });
}

/// x[c,:,:] * w[c]
template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& w) {
  TEMPSEG_REQUIRE(x.value().rank() == 3 && w.size() == static_cast<std::size_t>(x.shape()[0]),
                  "channel weight of size ", w.size(), " for ", shape_str(x.shape()));
  const std::size_t plane = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
  Tensor<T> out = x.value();
  for (int c = 0; c < x.shape()[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] *= w.value()[c];
  return detail::make_op<T>(std::move(out), {x, w}, [x, w, plane](Node<T>& self) {
    auto* gx = detail::grad_of(x);
    auto* gw = detail::grad_of(w);
    for (int c = 0; c < x.shape()[0]; ++c) {
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = c * plane + i;
        if (gx) (*gx)[k] += self.grad[k] * w.value()[c];
        acc += self.grad[k] * x.value()[k];
      }
      if (gw) (*gw)[c] += acc;
    }
  });
}

/// Mean over the spatial extent: [C,H,W] -> [C].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  TEMPSEG_REQUIRE(x.value().rank() == 3, "expected [C,H,W], got ", shape_str(x.shape()));
  const int channels = x.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
  Tensor<T> out({channels});
  for (int c = 0; c < channels; ++c) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.value()[c * plane + i];
    out[c] = acc / static_cast<T>(plane);
  }
  return detail::make_op<T>(std::move(out), {x}, [x, channels, plane](Node<T>& self) {
    if (auto* g = detail::grad_of(x))
      for (int c = 0; c < channels; ++c) {
        const T d = self.grad[c] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) (*g)[c * plane + i] += d;
      }
  });
}

/// Per-pixel softmax across channels of a [K,H,W] logit map.
template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  TEMPSEG_REQUIRE(x.value().rank() == 3, "expected [K,H,W], got ", shape_str(x.shape()));
  const int k = x.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
  Tensor<T> out(x.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    T mx = x.value()[p];
    for (int c = 1; c < k; ++c) mx = std::max(mx, x.value()[c * plane + p]);
    T z = 0;
    for (int c = 0; c < k; ++c) {
      const T e = std::exp(x.value()[c * plane + p] - mx);
      out[c * plane + p] = e;
      z += e;
    }
    for (int c = 0; c < k; ++c) out[c * plane + p] /= z;
  }
  return detail::make_op<T>(std::move(out), {x}, [x, k, plane](Node<T>& self) {
    auto* g = detail::grad_of(x);
    if (!g) return;
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int c = 0; c < k; ++c) dot += self.grad[c * plane + p] * self.value[c * plane + p];
      for (int c = 0; c < k; ++c)
        (*g)[c * plane + p] += self.value[c * plane + p] * (self.grad[c * plane + p] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and resampling

/// 2D cross-correlation with zero padding. x: [Cin,H,W], w: [Cout,Cin,k,k],
/// b: [Cout]. Lowered to im2col + GEMM.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapC = Eigen::Map<const Mat>;
  using Map = Eigen::Map<Mat>;

  TEMPSEG_REQUIRE(x.value().rank() == 3 && w.value().rank() == 4, "conv2d expects [C,H,W] input and "
                  "[Cout,Cin,k,k] weights, got ", shape_str(x.shape()), " and ", shape_str(w.shape()));
  const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const int cout = w.shape()[0], k = w.shape()[2];
  TEMPSEG_REQUIRE(w.shape()[1] == cin && w.shape()[3] == k, "weight ", shape_str(w.shape()),
                  " does not fit input ", shape_str(x.shape()));
  TEMPSEG_REQUIRE(b.size() == static_cast<std::size_t>(cout), "bias size ", b.size(), " != ", cout);
  TEMPSEG_REQUIRE(stride >= 1, "stride must be positive");
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  TEMPSEG_REQUIRE(oh > 0 && ow > 0, "empty conv output");
  const int rows = cin * k * k;
  const int cols = oh * ow;

  auto col = std::make_shared<Buffer<T>>(static_cast<std::size_t>(rows) * cols, T{0});
  const T* xs = x.value().data.data();
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col->data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = xs + (static_cast<std::size_t>(c) * h + iy) * wd;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < wd) dst[oy * ow + ox] = src[ix];
          }
        }
      }

  Tensor<T> out({cout, oh, ow});
  Map om(out.data.data(), cout, cols);
  MapC wm(w.value().data.data(), cout, rows);
  MapC cm(col->data(), rows, cols);
  om.noalias() = wm * cm;
  for (int o = 0; o < cout; ++o) om.row(o).array() += b.value()[o];

  return detail::make_op<T>(
      std::move(out), {x, w, b},
      [x, w, b, col, cin, h, wd, cout, k, stride, pad, oh, ow, rows, cols](Node<T>& self) {
        MapC gout(self.grad.data.data(), cout, cols);
        if (auto* gb = detail::grad_of(b))
          for (int o = 0; o < cout; ++o) (*gb)[o] += gout.row(o).sum();
        if (auto* gw = detail::grad_of(w)) {
          Map gwm(gw->data.data(), cout, rows);
          gwm.noalias() += gout * MapC(col->data(), rows, cols).transpose();
        }
        if (auto* gx = detail::grad_of(x)) {
          Mat gcol = MapC(w.value().data.data(), cout, rows).transpose() * gout;
          T* gxs = gx->data.data();
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const T* src = gcol.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
                for (int oy = 0; oy < oh; ++oy) {
                  const int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  T* dst = gxs + (static_cast<std::size_t>(c) * h + iy) * wd;
                  for (int ox = 0; ox < ow; ++ox) {
                    const int ix = ox * stride - pad + kx;
                    if (ix >= 0 && ix < wd) dst[ix] += src[oy * ow + ox];
                  }
                }
              }
        }
      });
}

namespace detail {

// Half-pixel-centred linear resampling taps along one axis.
struct LinearTap {
  int i0, i1;
  double w1;
};

inline std::vector<LinearTap> linear_taps(int in, int out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    int i0 = static_cast<int>(s);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of a [C,H,W] tensor to [C,out_h,out_w].
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  TEMPSEG_REQUIRE(x.value().rank() == 3 && out_h > 0 && out_w > 0, "bad resize of ",
                  shape_str(x.shape()));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  auto ty = detail::linear_taps(h, out_h);
  auto tx = detail::linear_taps(w, out_w);
  Tensor<T> out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const T wy = static_cast<T>(a.w1);
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& bt = tx[ox];
        const T wx = static_cast<T>(bt.w1);
        const T v00 = x.value().at(ch, a.i0, bt.i0), v01 = x.value().at(ch, a.i0, bt.i1);
        const T v10 = x.value().at(ch, a.i1, bt.i0), v11 = x.value().at(ch, a.i1, bt.i1);
        out.at(ch, oy, ox) = (T{1} - wy) * ((T{1} - wx) * v00 + wx * v01) +
                             wy * ((T{1} - wx) * v10 + wx * v11);
      }
    }
  return detail::make_op<T>(std::move(out), {x}, [x, c, out_h, out_w, ty, tx](Node<T>& self) {
    auto* g = detail::grad_of(x);
    if (!g) return;
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        const T wy = static_cast<T>(a.w1);
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& bt = tx[ox];
          const T wx = static_cast<T>(bt.w1);
          const T go = self.grad.at(ch, oy, ox);
          g->at(ch, a.i0, bt.i0) += go * (T{1} - wy) * (T{1} - wx);
          g->at(ch, a.i0, bt.i1) += go * (T{1} - wy) * wx;
          g->at(ch, a.i1, bt.i0) += go * wy * (T{1} - wx);
          g->at(ch, a.i1, bt.i1) += go * wy * wx;
        }
      }
  });
}

}  // namespace tempseg
