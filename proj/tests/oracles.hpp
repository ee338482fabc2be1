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


// Independent loop oracles shared by the unit tests and the acceptance
// runner. Each is written from the defining formula, without reusing any
// library kernel.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "tempseg/conv_lstm.hpp"
#include "tempseg/flowwarp.hpp"
#include "tempseg/label_map.hpp"

namespace tempseg::testing {

// --- warping ------------------------------------------------------------------

/// Bilinear sample by explicit enumeration of every source pixel's tent weight.
inline double oracle_sample(const Tensor<double>& src, int ch, double sx, double sy) {
  const int h = src.dim(1), w = src.dim(2);
  sx = std::min(std::max(sx, 0.0), w - 1.0);
  sy = std::min(std::max(sy, 0.0), h - 1.0);
  double acc = 0;
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      const double kx = std::max(0.0, 1.0 - std::abs(sx - xx));
      const double ky = std::max(0.0, 1.0 - std::abs(sy - yy));
      acc += kx * ky * src.at(ch, yy, xx);
    }
  return acc;
}

// --- similarity -----------------------------------------------------------------

/// O(N^2 C) cosine map; zero rows give zero similarity.
inline Tensor<double> cosine_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const int n = a.dim(0), c = a.dim(1);
  Tensor<double> out({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < c; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      out.at(i, j) = (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
    }
  return out;
}

// --- ConvLSTM -------------------------------------------------------------------

inline double sigmoid_oracle(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct PlainState {
  Tensor<double> e, h;
};

/// Straight-line transcription of the gate equations with explicit loops.
inline PlainState oracle_step(const ConvLSTMParams<double>& p, const PlainState& s, const Tensor<double>& a) {
  const int d = p.hidden, k = p.kernel, r = k / 2;
  const int hh = a.dim(1), ww = a.dim(2);
  const auto& W = p.gate_weights.value();
  const auto& B = p.gate_bias.value();
  // Input channel 0 is A, channels 1..D are H_{t-1}.
  const auto in = [&](int ch, int y, int x) -> double {
    if (y < 0 || x < 0 || y >= hh || x >= ww) return 0.0;
    return ch == 0 ? a.at(0, y, x) : s.h.at(ch - 1, y, x);
  };
  const auto conv = [&](int out_ch, int y, int x) {
    double acc = B.data[out_ch];
    for (int ci = 0; ci <= d; ++ci)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          acc += W.data[((static_cast<std::size_t>(out_ch) * (d + 1) + ci) * k + ky) * k + kx] *
                 in(ci, y + ky - r, x + kx - r);
    return acc;
  };
  PlainState out{Tensor<double>({d, hh, ww}), Tensor<double>({d, hh, ww})};
  for (int c = 0; c < d; ++c)
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) {
        const double e_prev = s.e.at(c, y, x);
        const double i = sigmoid_oracle(conv(c, y, x) + p.peep_i.value().data[c] * e_prev);
        const double f = sigmoid_oracle(conv(d + c, y, x) + p.peep_f.value().data[c] * e_prev);
        const double g = std::tanh(conv(2 * d + c, y, x));
        const double e = f * e_prev + i * g;
        const double o = sigmoid_oracle(conv(3 * d + c, y, x) + p.peep_o.value().data[c] * e);
        out.e.at(c, y, x) = e;
        out.h.at(c, y, x) = o * std::tanh(e);
      }
  return out;
}

/// Spatial mean of the final memory after running every map from zero state.
inline std::vector<double> oracle_embedding(const ConvLSTMParams<double>& p, const std::vector<Tensor<double>>& maps) {
  const int h = maps[0].dim(1), w = maps[0].dim(2);
  PlainState s{Tensor<double>({p.hidden, h, w}), Tensor<double>({p.hidden, h, w})};
  for (const auto& m : maps) s = oracle_step(p, s, m);
  std::vector<double> out(static_cast<std::size_t>(p.hidden), 0.0);
  for (int c = 0; c < p.hidden; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out[c] += s.e.at(c, y, x);
    out[c] /= h * w;
  }
  return out;
}

// --- metrics --------------------------------------------------------------------

inline LabelMap random_labels(int h, int w, int k, std::mt19937_64& rng) {
  LabelMap l(h, w);
  for (auto& v : l.ids) v = static_cast<std::uint8_t>(rng() % k);
  return l;
}

/// Per-class IoU from explicit pixel sets; pixels ignored in `gt` are skipped.
inline std::optional<double> iou_oracle(const LabelMap& pred, const LabelMap& gt, int c) {
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.ids[i] == LabelMap::kIgnore) continue;
    const bool p = pred.ids[i] == c, g = gt.ids[i] == c;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return std::nullopt;
  return double(inter) / uni;
}

inline double miou_oracle(const LabelMap& pred, const LabelMap& gt, int k) {
  double acc = 0;
  int n = 0;
  for (int c = 0; c < k; ++c)
    if (auto v = iou_oracle(pred, gt, c)) {
      acc += *v;
      ++n;
    }
  return acc / n;
}

/// Mean over consecutive pairs of the mIoU between prediction t and
/// prediction t-1 pulled onto frame t by rounding x + M(x) to the nearest
/// pixel, clamped to the canvas.
inline double tc_oracle(const std::vector<LabelMap>& preds, const std::vector<FlowField>& to_prev, int k) {
  double acc = 0;
  for (std::size_t t = 1; t < preds.size(); ++t) {
    const LabelMap& prev = preds[t - 1];
    const FlowField& f = to_prev[t - 1];
    LabelMap warped(prev.height, prev.width);
    for (int y = 0; y < prev.height; ++y)
      for (int x = 0; x < prev.width; ++x) {
        const double sx = std::floor(x + static_cast<double>(f.dx[f.index(y, x)]) + 0.5);
        const double sy = std::floor(y + static_cast<double>(f.dy[f.index(y, x)]) + 0.5);
        const int cx = static_cast<int>(std::min(std::max(sx, 0.0), prev.width - 1.0));
        const int cy = static_cast<int>(std::min(std::max(sy, 0.0), prev.height - 1.0));
        warped.ids[f.index(y, x)] = prev.at(cy, cx);
      }
    acc += miou_oracle(warped, preds[t], k);
  }
  return acc / static_cast<double>(preds.size() - 1);
}

}  // namespace tempseg::testing
