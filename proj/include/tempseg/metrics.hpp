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

// Segmentation accuracy (confusion matrix, IoU, pixel accuracy) and the
// warped-mIoU temporal consistency of predicted label sequences.

#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/flowwarp.hpp"
#include "tempseg/io.hpp"
#include "tempseg/label_map.hpp"

namespace tempseg {

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes) : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
    TEMPSEG_VALIDATE(classes >= 1, "class count must be positive");
  }

  void add(const LabelMap& pred, const LabelMap& gt) {
    TEMPSEG_REQUIRE(pred.height == gt.height && pred.width == gt.width, "prediction ", pred.height, "x",
                    pred.width, " vs ground truth ", gt.height, "x", gt.width);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto g = gt.ids[i];
      if (g == LabelMap::kIgnore) continue;
      const auto p = pred.ids[i];
      TEMPSEG_VALIDATE(g < classes_, "ground-truth id ", int(g), " out of range");
      TEMPSEG_VALIDATE(p < classes_, "predicted id ", int(p), " out of range");
      ++counts_[static_cast<std::size_t>(g) * classes_ + p];
    }
  }

  int classes() const { return classes_; }
  std::uint64_t count(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
  }

  /// TP / (TP + FP + FN); nullopt when the class occurs in neither map.
  std::optional<double> iou(int c) const {
    std::uint64_t tp = count(c, c), fp = 0, fn = 0;
    for (int o = 0; o < classes_; ++o) {
      if (o == c) continue;
      fp += count(o, c);
      fn += count(c, o);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(denom);
  }

  /// Mean over classes with a defined IoU; nullopt when none is defined.
  std::optional<double> mean_iou() const {
    double acc = 0;
    int n = 0;
    for (int c = 0; c < classes_; ++c)
      if (auto v = iou(c)) {
        acc += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return acc / n;
  }

  std::optional<double> pixel_accuracy() const {
    const std::uint64_t n = total();
    if (n == 0) return std::nullopt;
    std::uint64_t correct = 0;
    for (int c = 0; c < classes_; ++c) correct += count(c, c);
    return static_cast<double>(correct) / static_cast<double>(n);
  }

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

struct AccuracyReport {
  std::vector<std::optional<double>> class_iou;
  double miou = 0;
  double pixel_accuracy = 0;
  std::uint64_t pixels = 0;
};

inline AccuracyReport confusion_and_miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                                         int classes) {
  TEMPSEG_REQUIRE(preds.size() == gts.size(), preds.size(), " predictions for ", gts.size(),
                  " ground-truth maps");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i]);
  TEMPSEG_VALIDATE(cm.total() > 0, "no evaluable pixels (empty input or everything ignored)");
  AccuracyReport r;
  for (int c = 0; c < classes; ++c) r.class_iou.push_back(cm.iou(c));
  r.miou = *cm.mean_iou();
  r.pixel_accuracy = *cm.pixel_accuracy();
  r.pixels = cm.total();
  return r;
}

/// Temporal consistency of one predicted sequence.
struct SequenceConsistency {
  std::vector<double> pair_tc;                  // one per consecutive pair
  double mean = 0;                              // mean of pair_tc
  std::vector<std::optional<double>> class_tc;  // per-class mean over pairs where defined
};

/// Warps each prediction t-1 onto frame t (nearest neighbour) and scores
/// the mIoU between the warped map and prediction t. `to_previous[t-1]` is
/// the flow M_{t->t-1} that locates frame t's pixels in frame t-1.
inline SequenceConsistency temporal_consistency(const std::vector<LabelMap>& preds,
                                                const std::vector<FlowField>& to_previous, int classes) {
  TEMPSEG_VALIDATE(preds.size() >= 2, "temporal consistency needs at least two frames, got ", preds.size());
  TEMPSEG_REQUIRE(to_previous.size() + 1 == preds.size(), "need one flow per consecutive pair");
  SequenceConsistency out;
  std::vector<double> class_sum(static_cast<std::size_t>(classes), 0.0);
  std::vector<int> class_n(static_cast<std::size_t>(classes), 0);
  for (std::size_t t = 1; t < preds.size(); ++t) {
    const LabelMap& cur = preds[t];
    const LabelMap& prev = preds[t - 1];
    TEMPSEG_REQUIRE(prev.height == cur.height && prev.width == cur.width, "frame size changes mid-sequence");
    LabelMap warped(cur.height, cur.width, warp_nearest(prev.ids, prev.height, prev.width, to_previous[t - 1]));
    ConfusionMatrix cm(classes);
    cm.add(cur, warped);
    const auto m = cm.mean_iou();
    TEMPSEG_VALIDATE(m.has_value(), "empty prediction pair at index ", t);
    out.pair_tc.push_back(*m);
    for (int c = 0; c < classes; ++c)
      if (auto v = cm.iou(c)) {
        class_sum[c] += *v;
        ++class_n[c];
      }
  }
  double acc = 0;
  for (double v : out.pair_tc) acc += v;
  out.mean = acc / static_cast<double>(out.pair_tc.size());
  for (int c = 0; c < classes; ++c)
    out.class_tc.push_back(class_n[c] ? std::optional<double>(class_sum[c] / class_n[c]) : std::nullopt);
  return out;
}

struct EvalReport {
  int classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> class_iou;
  std::vector<std::optional<double>> class_tc;
  double miou = 0;
  double pixel_accuracy = 0;
  double mean_tc = 0;
  std::vector<std::vector<double>> tc_trace;  // [sequence][pair]
  std::vector<std::string> sequence_ids;
};

/// Accuracy over (preds, gts) joined with temporal consistency over whole
/// predicted sequences; TC averages pairs within a sequence, then sequences.
inline EvalReport per_class_report(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                                   const std::vector<std::vector<LabelMap>>& pred_seqs,
                                   const std::vector<std::vector<FlowField>>& to_previous, int classes) {
  TEMPSEG_REQUIRE(pred_seqs.size() == to_previous.size(), "one flow list per sequence required");
  EvalReport r;
  r.classes = classes;
  for (int c = 0; c < classes; ++c) r.class_names.push_back("class_" + std::to_string(c));
  const AccuracyReport acc = confusion_and_miou(preds, gts, classes);
  r.class_iou = acc.class_iou;
  r.miou = acc.miou;
  r.pixel_accuracy = acc.pixel_accuracy;

  std::vector<double> class_sum(static_cast<std::size_t>(classes), 0.0);
  std::vector<int> class_n(static_cast<std::size_t>(classes), 0);
  double tc_sum = 0;
  for (std::size_t s = 0; s < pred_seqs.size(); ++s) {
    const SequenceConsistency sc = temporal_consistency(pred_seqs[s], to_previous[s], classes);
    tc_sum += sc.mean;
    r.tc_trace.push_back(sc.pair_tc);
    r.sequence_ids.push_back(std::to_string(s));
    for (int c = 0; c < classes; ++c)
      if (sc.class_tc[c]) {
        class_sum[c] += *sc.class_tc[c];
        ++class_n[c];
      }
  }
  TEMPSEG_VALIDATE(!pred_seqs.empty(), "no sequences for temporal consistency");
  r.mean_tc = tc_sum / static_cast<double>(pred_seqs.size());
  for (int c = 0; c < classes; ++c)
    r.class_tc.push_back(class_n[c] ? std::optional<double>(class_sum[c] / class_n[c]) : std::nullopt);
  return r;
}

// ---------------------------------------------------------------------------
// Report emission

namespace detail {

inline std::string opt_cell(const std::optional<double>& v) { return v ? io::fmt_double(*v, 10) : "nan"; }

inline std::string pct(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(1) << 100.0 * *v;
  return oss.str();
}

}  // namespace detail

inline std::string metrics_csv(const EvalReport& r) {
  std::string out = "miou,pixel_accuracy,tc\n";
  out += io::fmt_double(r.miou, 10) + "," + io::fmt_double(r.pixel_accuracy, 10) + "," +
         io::fmt_double(r.mean_tc, 10) + "\n";
  return out;
}

inline std::string per_class_csv(const EvalReport& r) {
  std::string out = "class,iou,tc\n";
  for (int c = 0; c < r.classes; ++c)
    out += r.class_names[c] + "," + detail::opt_cell(r.class_iou[c]) + "," + detail::opt_cell(r.class_tc[c]) + "\n";
  return out;
}

inline std::string tc_trace_csv(const EvalReport& r) {
  std::string out = "sequence,pair,tc\n";
  for (std::size_t s = 0; s < r.tc_trace.size(); ++s)
    for (std::size_t p = 0; p < r.tc_trace[s].size(); ++p)
      out += r.sequence_ids[s] + "," + std::to_string(p + 1) + "," + io::fmt_double(r.tc_trace[s][p], 10) + "\n";
  return out;
}

/// Aligned text table: classes as columns plus a trailing mean column, one
/// mIoU row and one TC row per labelled report (values in percent).
inline std::string per_class_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  if (rows.empty()) return {};
  const EvalReport& first = rows.front().second;
  std::vector<std::string> header{"", ""};
  for (const auto& n : first.class_names) header.push_back(n);
  header.push_back("mean");
  std::vector<std::vector<std::string>> table{header};
  for (const char* metric : {"mIoU", "TC"}) {
    bool first_row = true;
    for (const auto& [label, r] : rows) {
      std::vector<std::string> line{first_row ? metric : "", label};
      first_row = false;
      const bool is_iou = std::string(metric) == "mIoU";
      for (int c = 0; c < r.classes; ++c) line.push_back(detail::pct(is_iou ? r.class_iou[c] : r.class_tc[c]));
      line.push_back(detail::pct(is_iou ? r.miou : r.mean_tc));
      table.push_back(std::move(line));
    }
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size() && i < width.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream oss;
  for (std::size_t li = 0; li < table.size(); ++li) {
    const auto& line = table[li];
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 2) oss << "| ";
      if (i + 1 == line.size()) oss << "| ";
      oss << std::setw(static_cast<int>(width[i])) << (i < 2 ? std::left : std::right) << line[i] << " ";
    }
    oss << "\n";
    if (li == 0 || li == rows.size()) {
      std::size_t total = 0;
      for (auto w : width) total += w + 1;
      oss << std::string(total + 4, '-') << "\n";
    }
  }
  return oss.str();
}

}  // namespace tempseg
