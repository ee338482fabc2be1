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

#include <cmath>
#include <limits>

#include "tempseg/flowwarp.hpp"
#include "test_support.hpp"
#include "oracles.hpp"

namespace tempseg {
namespace {

using testing::random_flow;
using testing::random_tensor;

using testing::oracle_sample;

Tensor<double> row(double a, double b) { return Tensor<double>({1, 1, 2}, {a, b}); }

FlowField uniform_flow(int h, int w, float dx, float dy = 0.0f) {
  FlowField f(h, w);
  std::fill(f.dx.begin(), f.dx.end(), dx);
  std::fill(f.dy.begin(), f.dy.end(), dy);
  return f;
}

TEST(WarpBackward, ZeroFlowIsIdentity) {
  const auto out = warp_backward(row(3.0, 7.0), FlowField(1, 2));
  EXPECT_EQ(testing::vec(out.data), (std::vector<double>{3.0, 7.0}));
}

TEST(WarpBackward, UnitShiftClampsAtBorder) {
  const auto out = warp_backward(row(3.0, 7.0), uniform_flow(1, 2, 1.0f));
  // Integer-index oracle: sample positions 1 and min(2, 1).
  const std::vector<double> src{3.0, 7.0};
  EXPECT_EQ(testing::vec(out.data), (std::vector<double>{src[1], src[std::min(2, 1)]}));
}

TEST(WarpBackward, HalfPixelShiftInterpolates) {
  const double a = 3.0, b = 7.0;
  const auto out = warp_backward(row(a, b), uniform_flow(1, 2, 0.5f));
  EXPECT_DOUBLE_EQ(out.data[0], 0.5 * a + 0.5 * b);
  EXPECT_DOUBLE_EQ(out.data[1], b);
}

TEST(WarpBackward, MatchesCornerEnumerationOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto src = random_tensor({2, 5, 6}, rng);
    const auto flow = random_flow(5, 6, rng, 2.5);
    const auto out = warp_backward(src, flow);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) {
          const auto i = flow.index(y, x);
          EXPECT_NEAR(out.at(c, y, x), oracle_sample(src, c, x + double(flow.dx[i]), y + double(flow.dy[i])), 1e-12);
        }
  }
}

TEST(WarpBackward, ZeroFlowIdentityIsBitExactOnRandomMaps) {
  std::mt19937_64 rng(3);
  const auto src = random_tensor({3, 7, 5}, rng);
  EXPECT_EQ(warp_backward(src, FlowField(7, 5)), src);
}

TEST(WarpBackward, IsLinearInSource) {
  std::mt19937_64 rng(5);
  const auto a = random_tensor({2, 6, 6}, rng), b = random_tensor({2, 6, 6}, rng);
  const auto flow = random_flow(6, 6, rng);
  const double alpha = 0.7, beta = -1.3;
  Tensor<double> mix(a.shape);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = alpha * a.data[i] + beta * b.data[i];
  const auto wm = warp_backward(mix, flow), wa = warp_backward(a, flow), wb = warp_backward(b, flow);
  for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(wm.data[i], alpha * wa.data[i] + beta * wb.data[i], 1e-12);
}

TEST(WarpBackward, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto src = random_tensor({2, 6, 6}, rng);
  const auto weights = random_tensor({2, 6, 6}, rng);
  const auto flow = random_flow(6, 6, rng);
  const double err = testing::gradient_check({src}, [&](const std::vector<Var<double>>& v) {
    return sum(mul(warp_backward(v[0], flow), Var<double>::constant(weights)));
  });
  EXPECT_LE(err, 1e-5);
}

TEST(WarpBackward, NoGradientReachesFlow) {
  // The flow is a plain value; the op's only graph input is the source.
  std::mt19937_64 rng(9);
  const auto src = Var<double>::parameter(random_tensor({1, 4, 4}, rng));
  const auto out = warp_backward(src, random_flow(4, 4, rng));
  ASSERT_EQ(out.node()->parents.size(), 1u);
  EXPECT_EQ(out.node()->parents[0], src.node());
}

TEST(WarpBackward, RejectsShapeMismatch) {
  EXPECT_THROW(warp_backward(row(1, 2), FlowField(2, 2)), ContractViolation);
}

TEST(WarpBackward, RejectsNonFiniteFlow) {
  FlowField f(1, 2);
  f.dx[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(warp_backward(row(1, 2), f), ValidationError);
  f.dx[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(warp_backward(row(1, 2), f), ValidationError);
}

TEST(OcclusionMask, IdenticalImagesGiveOnes) {
  std::mt19937_64 rng(1);
  const auto img = random_tensor({3, 4, 4}, rng, 0, 1);
  const auto m = occlusion_mask(img, img);
  EXPECT_EQ(m.shape, (Shape{1, 4, 4}));
  for (double v : m.data) EXPECT_EQ(v, 1.0);
}

TEST(OcclusionMask, UniformLn2DifferenceGivesHalf) {
  Tensor<double> a({3, 2, 2}, 0.2), b({3, 2, 2}, 0.2 + std::log(2.0));
  for (double v : occlusion_mask(a, b).data) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(OcclusionMask, MatchesScalarFormula) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_tensor({3, 4, 4}, rng, 0, 1), b = random_tensor({3, 4, 4}, rng, 0, 1);
    const auto m = occlusion_mask(a, b);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const double d = (std::abs(a.at(0, y, x) - b.at(0, y, x)) + std::abs(a.at(1, y, x) - b.at(1, y, x)) +
                          std::abs(a.at(2, y, x) - b.at(2, y, x))) / 3.0;
        EXPECT_NEAR(m.at(0, y, x), std::exp(-d), 1e-15);
      }
  }
}

TEST(OcclusionMask, RangeAndMonotonicity) {
  Tensor<double> base({1, 1, 50}, 0.0), other({1, 1, 50});
  for (int i = 0; i < 50; ++i) other.data[i] = 0.1 * i;
  const auto m = occlusion_mask(base, other);
  for (int i = 0; i < 50; ++i) {
    EXPECT_GT(m.data[i], 0.0);
    EXPECT_LE(m.data[i], 1.0);
    if (i > 0) {
      EXPECT_LE(m.data[i], m.data[i - 1]);
    }
  }
}

TEST(OcclusionMask, RejectsShapeMismatch) {
  EXPECT_THROW(occlusion_mask(Tensor<double>({3, 2, 2}), Tensor<double>({3, 2, 3})), ContractViolation);
}

TEST(WarpNearest, RoundsToNearestSource) {
  const std::vector<std::uint8_t> src{0, 1, 2, 3};
  EXPECT_EQ(warp_nearest(src, 1, 4, uniform_flow(1, 4, 0.6f)), (std::vector<std::uint8_t>{1, 2, 3, 3}));
  EXPECT_EQ(warp_nearest(src, 1, 4, uniform_flow(1, 4, -0.4f)), src);
}

TEST(ComposeFlows, ConstantFlowsAdd) {
  const auto ab = uniform_flow(5, 5, 1.0f, -1.0f), bc = uniform_flow(5, 5, 0.5f, 2.0f);
  const auto ac = compose_flows(ab, bc);
  for (std::size_t i = 0; i < ac.dx.size(); ++i) {
    EXPECT_FLOAT_EQ(ac.dx[i], 1.5f);
    EXPECT_FLOAT_EQ(ac.dy[i], 1.0f);
  }
}

TEST(FloFile, RoundTripsBitExact) {
  std::mt19937_64 rng(4);
  const auto flow = random_flow(3, 5, rng, 10);
  const auto dir = testing::scratch_dir("flo_roundtrip");
  write_flo(dir + "/a.flo", flow);
  EXPECT_EQ(read_flo(dir + "/a.flo"), flow);
  const std::string bytes = encode_flo(flow);
  EXPECT_EQ(bytes.substr(0, 4), "PIEH");
  EXPECT_EQ(bytes.size(), 12u + 3 * 5 * 8);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 5u);  // width, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // height
}

TEST(FloFile, TruncatedFileNamesThePath) {
  std::mt19937_64 rng(4);
  const auto dir = testing::scratch_dir("flo_truncated");
  const std::string path = dir + "/cut.flo";
  const std::string bytes = encode_flo(random_flow(4, 4, rng));
  io::write_file_atomic(path, bytes.substr(0, bytes.size() - 3));
  try {
    read_flo(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), path);
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
  }
}

TEST(FloFile, BadMagicIsRejected) {
  std::string bytes = encode_flo(FlowField(2, 2));
  bytes[0] = 'X';
  EXPECT_THROW(decode_flo(bytes, "mem.flo"), IoError);
}

TEST(FloFile, MissingFileIsIoError) { EXPECT_THROW(read_flo("/nonexistent/dir/x.flo"), IoError); }

}  // namespace
}  // namespace tempseg
