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

// Backward warping along optical flow, the photometric occlusion mask, and
// the .flo binary flow format.

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tempseg/autograd.hpp"
#include "tempseg/io.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg {

/// Per-pixel displacement: the pixel at (x, y) of frame t moves to
/// (x + dx, y + dy) in frame t+k.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> dx;
  std::vector<float> dy;

  FlowField() = default;
  FlowField(int h, int w)
      : width(w),
        height(h),
        dx(static_cast<std::size_t>(h) * w, 0.0f),
        dy(static_cast<std::size_t>(h) * w, 0.0f) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool all_finite() const {
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!std::isfinite(dx[i]) || !std::isfinite(dy[i])) return false;
    return true;
  }
  bool is_zero() const {
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (dx[i] != 0.0f || dy[i] != 0.0f) return false;
    return true;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

namespace detail {

struct BilinearSample {
  int x0, x1, y0, y1;
  double wx, wy;
};

// Sample position clamped to the image border.
inline BilinearSample bilinear_at(double sx, double sy, int w, int h) {
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  BilinearSample s{};
  s.x0 = static_cast<int>(std::floor(sx));
  s.y0 = static_cast<int>(std::floor(sy));
  s.x1 = std::min(s.x0 + 1, w - 1);
  s.y1 = std::min(s.y0 + 1, h - 1);
  s.wx = sx - s.x0;
  s.wy = sy - s.y0;
  return s;
}

inline void check_flow(const FlowField& flow, int h, int w, const char* what) {
  TEMPSEG_REQUIRE(flow.height == h && flow.width == w, what, ": flow ", flow.height, "x",
                  flow.width, " does not match map ", h, "x", w);
  if (!flow.all_finite()) throw ValidationError(std::string(what) + ": flow has non-finite entries");
}

}  // namespace detail

/// Resamples `src` (frame t+k) into the geometry of frame t using the flow
/// M_{t->t+k}: out(x) = src(x + delta(x)), bilinear, border-clamped.
template <typename T>
Tensor<T> warp_backward(const Tensor<T>& src, const FlowField& flow) {
  TEMPSEG_REQUIRE(src.rank() == 3, "expected [C,H,W], got ", shape_str(src.shape));
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  detail::check_flow(flow, h, w, "warp_backward");
  Tensor<T> out(src.shape);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = flow.index(y, x);
      const auto s = detail::bilinear_at(x + static_cast<double>(flow.dx[i]),
                                         y + static_cast<double>(flow.dy[i]), w, h);
      const T wx = static_cast<T>(s.wx), wy = static_cast<T>(s.wy);
      for (int ch = 0; ch < c; ++ch) {
        const T v00 = src.at(ch, s.y0, s.x0), v01 = src.at(ch, s.y0, s.x1);
        const T v10 = src.at(ch, s.y1, s.x0), v11 = src.at(ch, s.y1, s.x1);
        out.at(ch, y, x) =
            (T{1} - wy) * ((T{1} - wx) * v00 + wx * v01) + wy * ((T{1} - wx) * v10 + wx * v11);
      }
    }
  return out;
}

/// Differentiable in `src`; the flow is treated as a fixed external signal.
template <typename T>
Var<T> warp_backward(const Var<T>& src, const FlowField& flow) {
  Tensor<T> out = warp_backward(src.value(), flow);
  return detail::make_op<T>(std::move(out), {src}, [src, flow](Node<T>& self) {
    auto* g = detail::grad_of(src);
    if (!g) return;
    const int c = src.shape()[0], h = src.shape()[1], w = src.shape()[2];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = flow.index(y, x);
        const auto s = detail::bilinear_at(x + static_cast<double>(flow.dx[i]),
                                           y + static_cast<double>(flow.dy[i]), w, h);
        const T wx = static_cast<T>(s.wx), wy = static_cast<T>(s.wy);
        for (int ch = 0; ch < c; ++ch) {
          const T go = self.grad.at(ch, y, x);
          g->at(ch, s.y0, s.x0) += go * (T{1} - wy) * (T{1} - wx);
          g->at(ch, s.y0, s.x1) += go * (T{1} - wy) * wx;
          g->at(ch, s.y1, s.x0) += go * wy * (T{1} - wx);
          g->at(ch, s.y1, s.x1) += go * wy * wx;
        }
      }
  });
}

/// v = exp(-mean_c |I_t - warped|), one weight per pixel, shape [1,H,W].
template <typename T>
Tensor<T> occlusion_mask(const Tensor<T>& frame_t, const Tensor<T>& warped) {
  require_same_shape(frame_t, warped, "occlusion_mask");
  TEMPSEG_REQUIRE(frame_t.rank() == 3, "expected [C,H,W], got ", shape_str(frame_t.shape));
  const int c = frame_t.dim(0), h = frame_t.dim(1), w = frame_t.dim(2);
  Tensor<T> mask({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = 0;
      for (int ch = 0; ch < c; ++ch) acc += std::abs(frame_t.at(ch, y, x) - warped.at(ch, y, x));
      mask.at(0, y, x) = std::exp(-acc / static_cast<T>(c));
    }
  return mask;
}

/// Nearest-neighbour backward warp of a single-channel integer map.
inline std::vector<std::uint8_t> warp_nearest(const std::vector<std::uint8_t>& src, int h, int w,
                                              const FlowField& flow) {
  TEMPSEG_REQUIRE(src.size() == static_cast<std::size_t>(h) * w, "label size mismatch");
  detail::check_flow(flow, h, w, "warp_nearest");
  std::vector<std::uint8_t> out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = flow.index(y, x);
      const int sx = std::clamp(static_cast<int>(std::lround(x + flow.dx[i])), 0, w - 1);
      const int sy = std::clamp(static_cast<int>(std::lround(y + flow.dy[i])), 0, h - 1);
      out[i] = src[static_cast<std::size_t>(sy) * w + sx];
    }
  return out;
}

/// Chains M_{a->b} and M_{b->c} into M_{a->c}:
/// M_ac(x) = M_ab(x) + M_bc(x + M_ab(x)), with M_bc sampled bilinearly.
inline FlowField compose_flows(const FlowField& ab, const FlowField& bc) {
  TEMPSEG_REQUIRE(ab.width == bc.width && ab.height == bc.height, "compose_flows: shape mismatch");
  const int h = ab.height, w = ab.width;
  FlowField out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = ab.index(y, x);
      const auto s = detail::bilinear_at(x + static_cast<double>(ab.dx[i]),
                                         y + static_cast<double>(ab.dy[i]), w, h);
      auto sample = [&](const std::vector<float>& f) {
        const double v00 = f[bc.index(s.y0, s.x0)], v01 = f[bc.index(s.y0, s.x1)];
        const double v10 = f[bc.index(s.y1, s.x0)], v11 = f[bc.index(s.y1, s.x1)];
        return (1 - s.wy) * ((1 - s.wx) * v00 + s.wx * v01) + s.wy * ((1 - s.wx) * v10 + s.wx * v11);
      };
      out.dx[i] = static_cast<float>(ab.dx[i] + sample(bc.dx));
      out.dy[i] = static_cast<float>(ab.dy[i] + sample(bc.dy));
    }
  return out;
}

// ---------------------------------------------------------------------------
// .flo files: "PIEH", int32 width, int32 height, row-major float32 (dx, dy).

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string encode_flo(const FlowField& flow) {
  std::string buf = "PIEH";
  buf.reserve(12 + flow.dx.size() * 8);
  detail::put_u32(buf, static_cast<std::uint32_t>(flow.width));
  detail::put_u32(buf, static_cast<std::uint32_t>(flow.height));
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    detail::put_u32(buf, std::bit_cast<std::uint32_t>(flow.dx[i]));
    detail::put_u32(buf, std::bit_cast<std::uint32_t>(flow.dy[i]));
  }
  return buf;
}

/// `origin` names the source in error messages.
inline FlowField decode_flo(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "PIEH") != 0)
    throw IoError(origin, "not a .flo file (bad magic)");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto w = static_cast<std::int32_t>(detail::get_u32(p + 4));
  const auto h = static_cast<std::int32_t>(detail::get_u32(p + 8));
  if (w <= 0 || h <= 0 || w > (1 << 15) || h > (1 << 15))
    throw IoError(origin, "implausible flow size " + std::to_string(w) + "x" + std::to_string(h));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 12 + n * 8)
    throw IoError(origin, "truncated flow file: expected " + std::to_string(12 + n * 8) +
                              " bytes, found " + std::to_string(bytes.size()));
  FlowField flow(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    flow.dx[i] = std::bit_cast<float>(detail::get_u32(p + 12 + 8 * i));
    flow.dy[i] = std::bit_cast<float>(detail::get_u32(p + 16 + 8 * i));
  }
  return flow;
}

inline FlowField read_flo(const std::string& path) { return decode_flo(io::read_file(path), path); }

inline void write_flo(const std::string& path, const FlowField& flow) {
  io::write_file_atomic(path, encode_flo(flow));
}

}  // namespace tempseg
