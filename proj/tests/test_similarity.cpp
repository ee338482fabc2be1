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

#include "tempseg/similarity.hpp"
#include "test_support.hpp"
#include "oracles.hpp"

namespace tempseg {
namespace {

using testing::random_tensor;

using testing::cosine_oracle;

TEST(AtOperator, OrthonormalRowsGiveIdentity) {
  const Tensor<double> x({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(testing::vec(at_operator(x, x).data), (std::vector<double>{1, 0, 0, 1}));
}

TEST(AtOperator, DiagonalVectorCosine) {
  const Tensor<double> a({2, 2}, {1, 0, 1, 0}), b({2, 2}, {1, 1, 1, 1});
  EXPECT_NEAR(at_operator(a, b).at(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(at_operator(a, b).at(0, 1), 0.70711, 5e-6);
}

TEST(AtOperator, MatchesLoopOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
    const auto got = at_operator(a, b), want = cosine_oracle(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-12);
  }
}

TEST(AtOperator, SelfSimilarityIsSymmetricWithUnitDiagonal) {
  std::mt19937_64 rng(22);
  const auto x = random_tensor({6, 4}, rng);
  const auto a = at_operator(x, x);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(a.at(i, i), 1.0, 1e-12);
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(a.at(i, j), a.at(j, i));
      EXPECT_LE(std::abs(a.at(i, j)), 1.0 + 1e-12);
    }
  }
}

TEST(AtOperator, ScaleInvariant) {
  std::mt19937_64 rng(23);
  const auto a = random_tensor({5, 3}, rng), b = random_tensor({5, 3}, rng);
  Tensor<double> scaled = a;
  for (auto& v : scaled.data) v *= 3.7;
  const auto x = at_operator(a, b), y = at_operator(scaled, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.data[i], y.data[i], 1e-10);
}

TEST(AtOperator, ZeroRowsGiveZeroSimilarityAndGradient) {
  Tensor<double> a({2, 2}, {0, 0, 1, 2});
  const auto va = Var<double>::parameter(a);
  const auto vb = Var<double>::parameter(Tensor<double>({2, 2}, {1, 1, 0, 0}));
  const auto s = at_operator(va, vb);
  EXPECT_EQ(s.value().at(0, 0), 0.0);
  EXPECT_EQ(s.value().at(0, 1), 0.0);
  EXPECT_EQ(s.value().at(1, 1), 0.0);
  backward(sum(s));
  EXPECT_EQ(va.grad().at(0, 0), 0.0);
  EXPECT_EQ(va.grad().at(0, 1), 0.0);
  EXPECT_EQ(vb.grad().at(1, 0), 0.0);
  EXPECT_EQ(vb.grad().at(1, 1), 0.0);
}

TEST(AtOperator, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto a = random_tensor({5, 3}, rng), b = random_tensor({5, 3}, rng);
    const auto w = random_tensor({5, 5}, rng);
    const double err = testing::gradient_check({a, b}, [&](const std::vector<Var<double>>& v) {
      return sum(mul(at_operator(v[0], v[1]), Var<double>::constant(w)));
    });
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

TEST(AtOperator, RejectsChannelMismatch) {
  EXPECT_THROW(at_operator(Tensor<double>({2, 3}), Tensor<double>({2, 2})), ContractViolation);
}

TEST(AtOperator, RejectsLocationMismatch) {
  EXPECT_THROW(at_operator(Tensor<double>({2, 3}), Tensor<double>({3, 3})), ContractViolation);
}

TEST(PoolToGrid, ConstantMapGivesEqualRows) {
  const auto g = pool_to_grid(Var<double>::constant(Tensor<double>({1, 4, 4}, 2.5)), {2, 2}).value();
  EXPECT_EQ(g.shape, (Shape{4, 1}));
  for (double v : g.data) EXPECT_EQ(v, 2.5);
}

TEST(PoolToGrid, SingleCellIsMean) {
  const auto g = pool_to_grid(Var<double>::constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4})), {1, 1}).value();
  EXPECT_EQ(testing::vec(g.data), (std::vector<double>{2.5}));
}

TEST(PoolToGrid, FullSizeIsRowMajorReshape) {
  std::mt19937_64 rng(24);
  const auto x = random_tensor({3, 2, 4}, rng);
  const auto g = pool_to_grid(Var<double>::constant(x), {2, 4}).value();
  for (int y = 0; y < 2; ++y)
    for (int xx = 0; xx < 4; ++xx)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(g.at(y * 4 + xx, c), x.at(c, y, xx));
}

TEST(PoolToGrid, BlockMeansMatchLoopOracle) {
  std::mt19937_64 rng(25);
  const auto x = random_tensor({2, 8, 8}, rng);
  const auto g = pool_to_grid(Var<double>::constant(x), {4, 2}).value();
  for (int gy = 0; gy < 4; ++gy)
    for (int gx = 0; gx < 2; ++gx)
      for (int c = 0; c < 2; ++c) {
        double acc = 0;
        for (int y = gy * 2; y < gy * 2 + 2; ++y)
          for (int xx = gx * 4; xx < gx * 4 + 4; ++xx) acc += x.at(c, y, xx);
        EXPECT_NEAR(g.at(gy * 2 + gx, c), acc / 8, 1e-14);
      }
}

TEST(PoolToGrid, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(26);
  const auto x = random_tensor({2, 6, 5}, rng);
  const auto w = random_tensor({4, 2}, rng);
  const double err = testing::gradient_check({x}, [&](const std::vector<Var<double>>& v) {
    return sum(mul(pool_to_grid(v[0], {2, 2}), Var<double>::constant(w)));
  });
  EXPECT_LE(err, 1e-6);
}

TEST(PoolToGrid, TargetLargerThanInputIsRejected) {
  EXPECT_THROW(pool_to_grid(Var<double>::constant(Tensor<double>({1, 4, 4})), {8, 8}), ValidationError);
}

}  // namespace
}  // namespace tempseg
