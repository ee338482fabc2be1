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


#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "tempseg/metrics.hpp"
#include "oracles.hpp"

namespace tempseg {
namespace {

LabelMap row(std::vector<std::uint8_t> ids) {
  const int w = static_cast<int>(ids.size());
  return LabelMap(1, w, std::move(ids));
}

using testing::iou_oracle;
using testing::miou_oracle;
using testing::random_labels;
using testing::tc_oracle;

TEST(ConfusionAndMiou, PerfectPrediction) {
  const auto l = row({0, 1, 2, 1});
  const auto r = confusion_and_miou({l}, {l}, 3);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.pixel_accuracy, 1.0);
}

TEST(ConfusionAndMiou, HandCountedExample) {
  const auto r = confusion_and_miou({row({0, 0, 1, 1})}, {row({0, 1, 1, 1})}, 2);
  EXPECT_NEAR(*r.class_iou[0], 0.5, 1e-15);
  EXPECT_NEAR(*r.class_iou[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.miou, 0.58333333333, 1e-10);
  EXPECT_NEAR(r.pixel_accuracy, 0.75, 1e-15);
}

TEST(ConfusionAndMiou, AbsentClassesAreExcluded) {
  const auto r = confusion_and_miou({row({0, 1})}, {row({0, 1})}, 4);
  EXPECT_FALSE(r.class_iou[2].has_value());
  EXPECT_FALSE(r.class_iou[3].has_value());
  EXPECT_EQ(r.miou, 1.0);
}

TEST(ConfusionAndMiou, IgnoredPixelsDoNotCount) {
  const auto r = confusion_and_miou({row({0, 1, 1})}, {row({0, LabelMap::kIgnore, 1})}, 2);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.pixels, 2u);
}

TEST(ConfusionAndMiou, AllIgnoredOrEmptyIsRejected) {
  EXPECT_THROW(confusion_and_miou({row({0, 1})}, {row({LabelMap::kIgnore, LabelMap::kIgnore})}, 2),
               ValidationError);
  EXPECT_THROW(confusion_and_miou({}, {}, 2), ValidationError);
}

TEST(ConfusionAndMiou, ShapeMismatchIsAContractViolation) {
  EXPECT_THROW(confusion_and_miou({row({0, 1})}, {row({0, 1, 1})}, 2), ContractViolation);
}

TEST(ConfusionAndMiou, MatchesSetOracleOnRandomMaps) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_labels(7, 9, 4, rng), g = random_labels(7, 9, 4, rng);
    const auto r = confusion_and_miou({p}, {g}, 4);
    EXPECT_NEAR(r.miou, miou_oracle(p, g, 4), 1e-12);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(r.class_iou[c], iou_oracle(p, g, c));
  }
}

TEST(TemporalConsistency, StaticPredictionsAreFullyConsistent) {
  std::mt19937_64 rng(2);
  const auto l = random_labels(6, 6, 3, rng);
  const auto tc = temporal_consistency({l, l, l}, {FlowField(6, 6), FlowField(6, 6)}, 3);
  EXPECT_EQ(tc.mean, 1.0);
  EXPECT_EQ(tc.pair_tc, (std::vector<double>{1.0, 1.0}));
}

TEST(TemporalConsistency, ExactlyWarpedPredictionScoresOne) {
  std::mt19937_64 rng(3);
  const auto prev = random_labels(6, 6, 3, rng);
  FlowField back(6, 6);
  std::fill(back.dx.begin(), back.dx.end(), -1.0f);
  std::fill(back.dy.begin(), back.dy.end(), 2.0f);
  const LabelMap cur(6, 6, warp_nearest(prev.ids, 6, 6, back));
  EXPECT_EQ(temporal_consistency({prev, cur}, {back}, 3).mean, 1.0);
}

TEST(TemporalConsistency, RelabeledRegionMatchesHandOracle) {
  // 2x4 maps moving right by one pixel; the last column is relabeled.
  const LabelMap prev(2, 4, std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0, 1, 1});
  FlowField back(2, 4);
  std::fill(back.dx.begin(), back.dx.end(), -1.0f);
  // Warped prev: column x takes prev column max(x-1, 0) -> [0,0,0,1] per row.
  const LabelMap cur(2, 4, std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 0});
  const auto tc = temporal_consistency({prev, cur}, {back}, 2);
  // class 0: inter 6, union 8; class 1: inter 0, union 2.
  EXPECT_NEAR(tc.pair_tc[0], (6.0 / 8.0 + 0.0) / 2.0, 1e-15);
  EXPECT_NEAR(*tc.class_tc[0], 0.75, 1e-15);
  EXPECT_NEAR(*tc.class_tc[1], 0.0, 1e-15);
}

TEST(TemporalConsistency, MatchesLoopOracleOnRandomSequences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> d(-2.6f, 2.6f);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabelMap> preds;
    std::vector<FlowField> flows;
    for (int t = 0; t < 4; ++t) preds.push_back(random_labels(6, 7, 3, rng));
    for (int t = 0; t < 3; ++t) {
      FlowField f(6, 7);
      for (std::size_t i = 0; i < f.dx.size(); ++i) {
        f.dx[i] = d(rng);
        f.dy[i] = d(rng);
      }
      flows.push_back(f);
    }
    EXPECT_NEAR(temporal_consistency(preds, flows, 3).mean, tc_oracle(preds, flows, 3), 1e-12);
  }
}

TEST(TemporalConsistency, SingleFrameIsRejected) {
  EXPECT_THROW(temporal_consistency({row({0})}, {}, 2), ValidationError);
}

TEST(PerClassReport, PerfectPredictionsGiveOnes) {
  std::mt19937_64 rng(4);
  const auto a = random_labels(4, 4, 3, rng);
  const auto r = per_class_report({a}, {a}, {{a, a}}, {{FlowField(4, 4)}}, 3);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(r.class_iou[c].value_or(1.0), 1.0);
    EXPECT_EQ(r.class_tc[c].value_or(1.0), 1.0);
  }
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.mean_tc, 1.0);
}

TEST(PerClassReport, SingleClassGivesOneRow) {
  const LabelMap z(3, 3, std::uint8_t{0});
  const auto r = per_class_report({z}, {z}, {{z, z}}, {{FlowField(3, 3)}}, 1);
  const std::string csv = per_class_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(PerClassReport, RowsMatchIndependentRuns) {
  std::mt19937_64 rng(5);
  std::vector<LabelMap> preds, gts;
  std::vector<std::vector<LabelMap>> seqs;
  std::vector<std::vector<FlowField>> flows;
  for (int s = 0; s < 3; ++s) {
    preds.push_back(random_labels(5, 5, 3, rng));
    gts.push_back(random_labels(5, 5, 3, rng));
    seqs.push_back({random_labels(5, 5, 3, rng), random_labels(5, 5, 3, rng), random_labels(5, 5, 3, rng)});
    flows.push_back({FlowField(5, 5), FlowField(5, 5)});
  }
  const auto r = per_class_report(preds, gts, seqs, flows, 3);
  const auto acc = confusion_and_miou(preds, gts, 3);
  EXPECT_EQ(r.class_iou, acc.class_iou);
  double tc = 0;
  for (int s = 0; s < 3; ++s) {
    const auto one = temporal_consistency(seqs[s], flows[s], 3);
    EXPECT_EQ(r.tc_trace[s], one.pair_tc);
    tc += one.mean;
  }
  EXPECT_NEAR(r.mean_tc, tc / 3, 1e-15);
  for (const auto& v : r.class_iou) {
    ASSERT_TRUE(v.has_value());
    EXPECT_GE(*v, 0.0);
    EXPECT_LE(*v, 1.0);
  }
}

TEST(ReportEmission, CsvLayoutsAndTraceMean) {
  std::mt19937_64 rng(6);
  std::vector<std::vector<LabelMap>> seqs;
  std::vector<std::vector<FlowField>> flows;
  for (int s = 0; s < 2; ++s) {
    seqs.push_back({random_labels(4, 4, 2, rng), random_labels(4, 4, 2, rng), random_labels(4, 4, 2, rng)});
    flows.push_back({FlowField(4, 4), FlowField(4, 4)});
  }
  const auto r = per_class_report({seqs[0][0]}, {seqs[1][0]}, seqs, flows, 2);
  EXPECT_EQ(metrics_csv(r).substr(0, 23), "miou,pixel_accuracy,tc\n");
  const std::string pc = per_class_csv(r);
  EXPECT_EQ(std::count(pc.begin(), pc.end(), '\n'), 3);

  std::istringstream in(tc_trace_csv(r));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sequence,pair,tc");
  double acc = 0;
  int n = 0;
  while (std::getline(in, line)) {
    acc += std::stod(line.substr(line.rfind(',') + 1));
    ++n;
  }
  EXPECT_EQ(n, 4);
  EXPECT_NEAR(acc / n, r.mean_tc, 1e-9);
  const std::string table = per_class_table({{"a", r}});
  EXPECT_NE(table.find("mIoU"), std::string::npos);
  EXPECT_NE(table.find("TC"), std::string::npos);
}

}  // namespace
}  // namespace tempseg
