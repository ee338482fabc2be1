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

// Training objectives: cross-entropy, the motion-guided temporal loss,
// single-frame distillation (pixel KL + pairwise similarity), pair-wise-frame
// and multi-frame dependency distillation, and their weighted composition.
//
// Probability maps are [K,H,W]; feature maps are [C,h,w]. Teacher inputs are
// plain constants: no gradient ever reaches teacher parameters.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tempseg/autograd.hpp"
#include "tempseg/conv_lstm.hpp"
#include "tempseg/flowwarp.hpp"
#include "tempseg/label_map.hpp"
#include "tempseg/similarity.hpp"

namespace tempseg {

/// Lower clamp applied to probabilities before taking logarithms.
inline constexpr double kProbEpsilon = 1e-8;

namespace detail {

inline int pixel_count(const Shape& s) { return s[1] * s[2]; }

}  // namespace detail

/// mean((a - b)^2) over all entries.
template <typename T>
Var<T> mean_squared_difference(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mean_squared_difference");
  const std::size_t n = a.size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return detail::make_op<T>(Tensor<T>({1}, acc / static_cast<T>(n)), {a, b}, [a, b, n](Node<T>& self) {
    const T s = T{2} * self.grad[0] / static_cast<T>(n);
    auto* ga = detail::grad_of(a);
    auto* gb = detail::grad_of(b);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = s * (a.value()[i] - b.value()[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

/// (1/N) sum_i v_i |a_i - b_i|^2 with a, b [K,H,W] and v [1,H,W] constant.
template <typename T>
Var<T> masked_squared_error(const Var<T>& a, const Var<T>& b, const Tensor<T>& mask) {
  require_same_shape(a.value(), b.value(), "masked_squared_error");
  const int k = a.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(detail::pixel_count(a.shape()));
  TEMPSEG_REQUIRE(mask.size() == plane, "mask ", shape_str(mask.shape), " does not cover ",
                  shape_str(a.shape()));
  T acc = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    T d2 = 0;
    for (int c = 0; c < k; ++c) {
      const T d = a.value()[c * plane + p] - b.value()[c * plane + p];
      d2 += d * d;
    }
    acc += mask[p] * d2;
  }
  return detail::make_op<T>(
      Tensor<T>({1}, acc / static_cast<T>(plane)), {a, b}, [a, b, mask, k, plane](Node<T>& self) {
        const T s = T{2} * self.grad[0] / static_cast<T>(plane);
        auto* ga = detail::grad_of(a);
        auto* gb = detail::grad_of(b);
        for (int c = 0; c < k; ++c)
          for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t i = c * plane + p;
            const T d = s * mask[p] * (a.value()[i] - b.value()[i]);
            if (ga) (*ga)[i] += d;
            if (gb) (*gb)[i] -= d;
          }
      });
}

/// Occlusion-weighted squared distance between q_t and q_{t+k} warped back
/// to frame t along M_{t->t+k}. Gradients reach both probability maps.
template <typename T>
Var<T> temporal_loss(const Var<T>& q_t, const Var<T>& q_tk, const FlowField& flow,
                     const Tensor<T>& mask) {
  require_same_shape(q_t.value(), q_tk.value(), "temporal_loss");
  return masked_squared_error(q_t, warp_backward(q_tk, flow), mask);
}

/// Squared difference between student and teacher cross-frame similarity
/// maps of pooled probabilities.
template <typename T>
Var<T> pf_loss(const Var<T>& qs_t, const Var<T>& qs_tk, const Tensor<T>& qt_t, const Tensor<T>& qt_tk,
               GridSize grid) {
  require_same_shape(qs_t.value(), qs_tk.value(), "pf_loss");
  require_same_shape(qt_t, qt_tk, "pf_loss");
  require_same_shape(qs_t.value(), qt_t, "pf_loss");
  const Var<T> student = at_operator(pool_to_grid(qs_t, grid), pool_to_grid(qs_tk, grid));
  const Var<T> teacher = at_operator(pool_to_grid(Var<T>::constant(qt_t), grid),
                                     pool_to_grid(Var<T>::constant(qt_tk), grid));
  return mean_squared_difference(student, teacher);
}

/// |e_teacher - e_student|^2.
template <typename T>
Var<T> mf_loss(const Var<T>& e_teacher, const Var<T>& e_student) {
  TEMPSEG_REQUIRE(e_teacher.size() == e_student.size(), "embedding lengths differ: ", e_teacher.size(),
                  " vs ", e_student.size());
  return scale(mean_squared_difference(e_teacher, e_student), static_cast<T>(e_teacher.size()));
}

/// (1/N) sum_i KL(q^s_i || q^t_i), student first.
template <typename T>
Var<T> pixel_distill(const Var<T>& qs, const Tensor<T>& qt) {
  require_same_shape(qs.value(), qt, "pixel_distill");
  const int k = qs.shape()[0];
  const std::size_t plane = static_cast<std::size_t>(detail::pixel_count(qs.shape()));
  const T eps = static_cast<T>(kProbEpsilon);
  T acc = 0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const T s = qs.value()[i];
    acc += s * (std::log(std::max(s, eps)) - std::log(std::max(qt[i], eps)));
  }
  return detail::make_op<T>(
      Tensor<T>({1}, acc / static_cast<T>(plane)), {qs}, [qs, qt, eps, plane, k](Node<T>& self) {
        auto* g = detail::grad_of(qs);
        if (!g) return;
        const T s0 = self.grad[0] / static_cast<T>(plane);
        for (std::size_t i = 0; i < static_cast<std::size_t>(k) * plane; ++i) {
          const T s = qs.value()[i];
          T d = std::log(std::max(s, eps)) - std::log(std::max(qt[i], eps));
          if (s > eps) d += T{1};
          (*g)[i] += s0 * d;
        }
      });
}

/// Squared difference of self-similarity maps of two [N,C] grids; channel
/// counts may differ.
template <typename T>
Var<T> pairwise_distill(const Var<T>& fs, const Tensor<T>& ft) {
  TEMPSEG_REQUIRE(fs.value().rank() == 2 && ft.rank() == 2 && fs.shape()[0] == ft.dim(0),
                  "grid mismatch ", shape_str(fs.shape()), " vs ", shape_str(ft.shape));
  const Var<T> teacher = Var<T>::constant(ft);
  return mean_squared_difference(at_operator(fs, fs), at_operator(teacher, teacher));
}

template <typename T>
struct SingleFrameTerms {
  Var<T> pixel;
  Var<T> pair;
  Var<T> total;
};

/// Pixel KL on probabilities plus pairwise distillation on pooled features.
template <typename T>
SingleFrameTerms<T> sf_loss(const Var<T>& qs, const Tensor<T>& qt, const Var<T>& fs,
                            const Tensor<T>& ft, GridSize grid) {
  SingleFrameTerms<T> out;
  out.pixel = pixel_distill(qs, qt);
  out.pair = pairwise_distill(pool_to_grid(fs, grid), pool_to_grid(Var<T>::constant(ft), grid).value());
  out.total = add(out.pixel, out.pair);
  return out;
}

/// Mean of -log q[label] over non-ignored pixels; 0 when every pixel is
/// ignored.
template <typename T>
Var<T> cross_entropy(const Var<T>& q, const LabelMap& labels) {
  TEMPSEG_REQUIRE(q.value().rank() == 3 && q.shape()[1] == labels.height && q.shape()[2] == labels.width,
                  "labels ", labels.height, "x", labels.width, " do not match ", shape_str(q.shape()));
  const int k = q.shape()[0];
  labels.validate(k);
  const std::size_t plane = labels.size();
  const T eps = static_cast<T>(kProbEpsilon);
  T acc = 0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const auto y = labels.ids[p];
    if (y == LabelMap::kIgnore) continue;
    acc -= std::log(std::max(q.value()[y * plane + p], eps));
    ++counted;
  }
  const T denom = counted ? static_cast<T>(counted) : T{1};
  return detail::make_op<T>(Tensor<T>({1}, acc / denom), {q}, [q, labels, plane, denom, eps](Node<T>& self) {
    auto* g = detail::grad_of(q);
    if (!g) return;
    for (std::size_t p = 0; p < plane; ++p) {
      const auto y = labels.ids[p];
      if (y == LabelMap::kIgnore) continue;
      const T v = q.value()[y * plane + p];
      if (v > eps) (*g)[y * plane + p] -= self.grad[0] / (denom * v);
    }
  });
}

/// max(0, margin - |e|). At e = 0 the norm's subgradient is taken along the
/// all-ones direction so a collapsed embedding still receives a push.
template <typename T>
Var<T> norm_hinge(const Var<T>& e, T margin) {
  T n2 = 0;
  for (T v : e.value().data) n2 += v * v;
  const T norm = std::sqrt(n2);
  const T value = std::max(T{0}, margin - norm);
  return detail::make_op<T>(Tensor<T>({1}, value), {e}, [e, norm, value](Node<T>& self) {
    auto* g = detail::grad_of(e);
    if (!g || value <= T{0}) return;
    const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i) {
      const T dnorm = norm > T{0} ? e.value()[i] / norm : inv_sqrt_d;
      (*g)[i] -= self.grad[0] * dnorm;
    }
  });
}

// ---------------------------------------------------------------------------
// Composite objective

/// Which regularisers are active; together they span the ablation grid.
struct TermFlags {
  bool sf = false;
  bool pf = false;
  bool mf = false;
  bool tl = false;

  bool any() const { return sf || pf || mf || tl; }
  bool needs_teacher() const { return sf || pf || mf; }
  bool needs_sequence() const { return any(); }

  /// "none", "all", or a comma list of sf, pf, mf, tl.
  static TermFlags parse(const std::string& text) {
    TermFlags f;
    if (text == "none" || text.empty()) return f;
    if (text == "all") return {true, true, true, true};
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (tok == "sf") f.sf = true;
      else if (tok == "pf") f.pf = true;
      else if (tok == "mf") f.mf = true;
      else if (tok == "tl") f.tl = true;
      else throw ValidationError("unknown loss term `" + tok + "` (expected sf, pf, mf, tl, all, none)");
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return f;
  }

  std::string str() const {
    std::string out;
    auto put = [&](bool on, const char* name) {
      if (!on) return;
      if (!out.empty()) out += ",";
      out += name;
    };
    put(sf, "sf");
    put(pf, "pf");
    put(mf, "mf");
    put(tl, "tl");
    return out.empty() ? "none" : out;
  }

  friend bool operator==(const TermFlags&, const TermFlags&) = default;
};

struct ObjectiveConfig {
  double lambda = 0.1;
  TermFlags terms;
  GridSize pair_grid{16, 16};
  GridSize mf_grid{8, 8};
  double collapse_margin = 0.1;
  bool anti_collapse = true;
};

template <typename T>
struct StudentFrame {
  Var<T> probs;     // [K,H,W]
  Var<T> features;  // [C,h,w]
};

template <typename T>
struct TeacherFrame {
  Tensor<T> probs;     // [K,H,W]
  Tensor<T> features;  // [C',h',w'], possibly pre-pooled
};

/// One sampled training sequence, frames in temporal order.
template <typename T>
struct SequenceBatch {
  std::vector<StudentFrame<T>> student;
  std::vector<TeacherFrame<T>> teacher;  // empty when no distillation term is on
  std::vector<FlowField> flows;          // M_{t->t+1} between consecutive members
  std::vector<Tensor<T>> masks;          // occlusion masks [1,H,W] per pair
  std::vector<std::optional<LabelMap>> labels;
};

template <typename T>
struct LossBreakdown {
  double ce = 0, sf_pixel = 0, sf_pair = 0, tl = 0, pf = 0, mf = 0, anti_collapse = 0, total = 0;
  double lambda = 0;
  double teacher_embedding_norm = 0;
  Var<T> objective;

  double sf() const { return sf_pixel + sf_pair; }
  double recomposed() const { return ce + lambda * (sf_pixel + sf_pair + tl + pf + mf) + anti_collapse; }
};

namespace detail {

template <typename T>
Var<T> self_similarity_map(const Tensor<T>& features, GridSize grid) {
  const Var<T> g = pool_to_grid(Var<T>::constant(features), grid);
  const Var<T> a = at_operator(g, g);
  return reshape(a, {1, a.shape()[0], a.shape()[1]});
}

template <typename T>
Var<T> self_similarity_map(const Var<T>& features, GridSize grid) {
  const Var<T> g = pool_to_grid(features, grid);
  const Var<T> a = at_operator(g, g);
  return reshape(a, {1, a.shape()[0], a.shape()[1]});
}

template <typename T>
Var<T> zero_scalar() {
  return Var<T>::constant(Tensor<T>({1}));
}

}  // namespace detail

/// Cross-entropy summed over labeled frames, plus lambda times the enabled
/// regularisers (SF over every frame, TL and PF over consecutive pairs, MF
/// once per sequence), plus the anti-collapse hinge on the teacher embedding
/// whenever MF is on.
template <typename T>
LossBreakdown<T> total_objective(const SequenceBatch<T>& seq, const ObjectiveConfig& cfg,
                                 const ConvLSTMParams<T>* lstm) {
  const std::size_t frames = seq.student.size();
  TEMPSEG_REQUIRE(frames >= 1 && seq.labels.size() == frames, "need one label slot per frame");
  TEMPSEG_VALIDATE(cfg.lambda >= 0, "lambda must be non-negative");
  const TermFlags& terms = cfg.terms;
  if (terms.needs_teacher())
    TEMPSEG_REQUIRE(seq.teacher.size() == frames, "teacher outputs missing for distillation");
  if (terms.tl || terms.pf)
    TEMPSEG_REQUIRE(seq.flows.size() + 1 == frames, "need one flow per consecutive pair");
  if (terms.tl) TEMPSEG_REQUIRE(seq.masks.size() + 1 == frames, "need one mask per consecutive pair");
  if (terms.mf) TEMPSEG_REQUIRE(lstm != nullptr, "multi-frame term needs ConvLSTM parameters");

  LossBreakdown<T> out;
  out.lambda = cfg.lambda;

  Var<T> ce = detail::zero_scalar<T>();
  bool any_label = false;
  for (std::size_t t = 0; t < frames; ++t) {
    if (!seq.labels[t]) continue;
    any_label = true;
    ce = add(ce, cross_entropy(seq.student[t].probs, *seq.labels[t]));
  }
  TEMPSEG_VALIDATE(any_label, "sequence has no labeled frame");

  Var<T> reg = detail::zero_scalar<T>();
  if (terms.sf) {
    for (std::size_t t = 0; t < frames; ++t) {
      auto sf = sf_loss(seq.student[t].probs, seq.teacher[t].probs, seq.student[t].features,
                        seq.teacher[t].features, cfg.pair_grid);
      out.sf_pixel += sf.pixel.item();
      out.sf_pair += sf.pair.item();
      reg = add(reg, sf.total);
    }
  }
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    if (terms.tl) {
      auto tl = temporal_loss(seq.student[t].probs, seq.student[t + 1].probs, seq.flows[t], seq.masks[t]);
      out.tl += tl.item();
      reg = add(reg, tl);
    }
    if (terms.pf) {
      auto pf = pf_loss(seq.student[t].probs, seq.student[t + 1].probs, seq.teacher[t].probs,
                        seq.teacher[t + 1].probs, cfg.pair_grid);
      out.pf += pf.item();
      reg = add(reg, pf);
    }
  }

  Var<T> penalty = detail::zero_scalar<T>();
  if (terms.mf) {
    std::vector<Var<T>> student_maps, teacher_maps;
    for (std::size_t t = 0; t < frames; ++t) {
      student_maps.push_back(detail::self_similarity_map(seq.student[t].features, cfg.mf_grid));
      teacher_maps.push_back(detail::self_similarity_map(seq.teacher[t].features, cfg.mf_grid));
    }
    const Var<T> e_teacher = encode_sequence(*lstm, teacher_maps);
    const Var<T> e_student = encode_sequence(*lstm, student_maps);
    const Var<T> mf = mf_loss(e_teacher, e_student);
    out.mf = mf.item();
    reg = add(reg, mf);
    double n2 = 0;
    for (T v : e_teacher.value().data) n2 += double(v) * double(v);
    out.teacher_embedding_norm = std::sqrt(n2);
    if (cfg.anti_collapse) {
      penalty = norm_hinge(e_teacher, static_cast<T>(cfg.collapse_margin));
      out.anti_collapse = penalty.item();
    }
  }

  out.ce = ce.item();
  out.objective = add(add(ce, scale(reg, static_cast<T>(cfg.lambda))), penalty);
  out.total = out.objective.item();
  return out;
}

}  // namespace tempseg
