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

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "tempseg/autograd.hpp"

namespace tempseg {

/// Target resolution of a pooled feature grid; N = height * width locations.
struct GridSize {
  int height = 16;
  int width = 16;
  int locations() const { return height * width; }
  friend bool operator==(const GridSize&, const GridSize&) = default;
};

namespace detail {

// Adaptive pooling bin [begin, end) for output cell `i` of `out` over `in`.
inline std::pair<int, int> pool_bin(int i, int in, int out) {
  const int begin = (i * in) / out;
  const int end = ((i + 1) * in + out - 1) / out;
  return {begin, end};
}

}  // namespace detail

/// Average-pools a [C,H,W] map onto `grid` and flattens it row-major into an
/// [N,C] feature grid. Non-divisible extents use overlapping adaptive bins.
template <typename T>
Var<T> pool_to_grid(const Var<T>& x, GridSize grid) {
  TEMPSEG_REQUIRE(x.value().rank() == 3, "expected [C,H,W], got ", shape_str(x.shape()));
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  TEMPSEG_VALIDATE(grid.height > 0 && grid.width > 0 && grid.height <= h && grid.width <= w,
                   "target grid ", grid.height, "x", grid.width, " exceeds input ", h, "x", w);
  const int n = grid.locations();
  Tensor<T> out({n, c});
  for (int gy = 0; gy < grid.height; ++gy) {
    const auto [y0, y1] = detail::pool_bin(gy, h, grid.height);
    for (int gx = 0; gx < grid.width; ++gx) {
      const auto [x0, x1] = detail::pool_bin(gx, w, grid.width);
      const T inv = T{1} / static_cast<T>((y1 - y0) * (x1 - x0));
      for (int ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) acc += x.value().at(ch, y, xx);
        out.at(gy * grid.width + gx, ch) = acc * inv;
      }
    }
  }
  return detail::make_op<T>(std::move(out), {x}, [x, grid, c, h, w](Node<T>& self) {
    auto* g = detail::grad_of(x);
    if (!g) return;
    for (int gy = 0; gy < grid.height; ++gy) {
      const auto [y0, y1] = detail::pool_bin(gy, h, grid.height);
      for (int gx = 0; gx < grid.width; ++gx) {
        const auto [x0, x1] = detail::pool_bin(gx, w, grid.width);
        const T inv = T{1} / static_cast<T>((y1 - y0) * (x1 - x0));
        for (int ch = 0; ch < c; ++ch) {
          const T d = self.grad.at(gy * grid.width + gx, ch) * inv;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) g->at(ch, y, xx) += d;
        }
      }
    }
  });
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows scaled to unit length; zero rows stay zero. Returns the row norms.
template <typename T>
std::vector<T> normalize_rows(const Tensor<T>& x, RowMat<T>& unit) {
  const int n = x.dim(0), c = x.dim(1);
  unit = Eigen::Map<const RowMat<T>>(x.data.data(), n, c);
  std::vector<T> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    norms[i] = unit.row(i).norm();
    if (norms[i] > T{0}) unit.row(i) /= norms[i];
  }
  return norms;
}

// Pulls a gradient w.r.t. unit rows back through the row normalisation.
template <typename T>
void unnormalize_grad(const RowMat<T>& unit, const std::vector<T>& norms, RowMat<T>& g_unit,
                      Tensor<T>& g_out) {
  const int n = static_cast<int>(unit.rows());
  const int c = static_cast<int>(unit.cols());
  for (int i = 0; i < n; ++i) {
    if (norms[i] <= T{0}) continue;
    const T proj = g_unit.row(i).dot(unit.row(i));
    for (int k = 0; k < c; ++k)
      g_out.at(i, k) += (g_unit(i, k) - proj * unit(i, k)) / norms[i];
  }
}

}  // namespace detail

/// Pairwise cosine similarity between the rows of two [N,C] grids:
/// a_ij = <x1_i, x2_j> / (|x1_i| |x2_j|). Rows with zero norm give a_ij = 0
/// and receive no gradient.
template <typename T>
Var<T> at_operator(const Var<T>& x1, const Var<T>& x2) {
  TEMPSEG_REQUIRE(x1.value().rank() == 2 && x2.value().rank() == 2, "expected [N,C] grids, got ",
                  shape_str(x1.shape()), " and ", shape_str(x2.shape()));
  TEMPSEG_REQUIRE(x1.shape()[1] == x2.shape()[1], "channel mismatch ", x1.shape()[1], " vs ",
                  x2.shape()[1]);
  TEMPSEG_REQUIRE(x1.shape()[0] == x2.shape()[0], "location count mismatch ", x1.shape()[0], " vs ",
                  x2.shape()[0]);
  using Mat = detail::RowMat<T>;
  auto u1 = std::make_shared<Mat>();
  auto u2 = std::make_shared<Mat>();
  auto n1 = std::make_shared<std::vector<T>>(detail::normalize_rows(x1.value(), *u1));
  auto n2 = std::make_shared<std::vector<T>>(detail::normalize_rows(x2.value(), *u2));
  const int n = x1.shape()[0];
  Tensor<T> out({n, n});
  Eigen::Map<Mat>(out.data.data(), n, n).noalias() = (*u1) * u2->transpose();
  return detail::make_op<T>(std::move(out), {x1, x2}, [x1, x2, u1, u2, n1, n2, n](Node<T>& self) {
    Eigen::Map<const Mat> g(self.grad.data.data(), n, n);
    if (auto* g1 = detail::grad_of(x1)) {
      Mat gu = g * (*u2);
      detail::unnormalize_grad(*u1, *n1, gu, *g1);
    }
    if (auto* g2 = detail::grad_of(x2)) {
      Mat gu = g.transpose() * (*u1);
      detail::unnormalize_grad(*u2, *n2, gu, *g2);
    }
  });
}

template <typename T>
Tensor<T> at_operator(const Tensor<T>& x1, const Tensor<T>& x2) {
  return at_operator(Var<T>::constant(x1), Var<T>::constant(x2)).value();
}

}  // namespace tempseg
