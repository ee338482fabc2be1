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

#include "tempseg/conv_lstm.hpp"
#include "test_support.hpp"
#include "oracles.hpp"

namespace tempseg {
namespace {

using testing::random_tensor;

using testing::oracle_embedding;
using testing::oracle_step;
using testing::PlainState;

TEST(ConvLSTMStep, ZeroParamsZeroStateIsCollapsePoint) {
  const auto p = ConvLSTMParams<double>::zeros(3, 4);
  std::mt19937_64 rng(1);
  const auto a = Var<double>::constant(random_tensor({1, 3, 3}, rng));
  StepTrace<double> tr;
  const auto s = step(p, RecurrentState<double>::zeros(4, 3, 3), a, &tr);
  for (double v : tr.input_gate.value().data) EXPECT_EQ(v, 0.5);
  for (double v : tr.forget_gate.value().data) EXPECT_EQ(v, 0.5);
  for (double v : tr.output_gate.value().data) EXPECT_EQ(v, 0.5);
  for (double v : s.memory.value().data) EXPECT_EQ(v, 0.0);
  for (double v : s.hidden.value().data) EXPECT_EQ(v, 0.0);
}

TEST(ConvLSTMStep, ZeroParamsHalveNonzeroMemory) {
  const auto p = ConvLSTMParams<double>::zeros(3, 2);
  std::mt19937_64 rng(2);
  auto st = RecurrentState<double>::zeros(2, 2, 2);
  st.memory = Var<double>::constant(random_tensor({2, 2, 2}, rng));
  const auto s = step(p, st, Var<double>::constant(random_tensor({1, 2, 2}, rng)));
  for (std::size_t i = 0; i < s.memory.size(); ++i) {
    const double e = st.memory.value().data[i];
    EXPECT_NEAR(s.memory.value().data[i], 0.5 * e, 1e-15);
    EXPECT_NEAR(s.hidden.value().data[i], 0.5 * std::tanh(0.5 * e), 1e-15);
  }
}

TEST(ConvLSTMStep, MatchesEquationTranscription) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(300 + trial);
    const auto p = ConvLSTMParams<double>::uniform(3, 3, 0.5, rng);
    PlainState s{random_tensor({3, 2, 2}, rng), random_tensor({3, 2, 2}, rng)};
    const auto a = random_tensor({1, 2, 2}, rng);
    const auto want = oracle_step(p, s, a);
    const auto got = step(p, {Var<double>::constant(s.e), Var<double>::constant(s.h)}, Var<double>::constant(a));
    for (std::size_t i = 0; i < want.e.size(); ++i) {
      EXPECT_NEAR(got.memory.value().data[i], want.e.data[i], 1e-12);
      EXPECT_NEAR(got.hidden.value().data[i], want.h.data[i], 1e-12);
    }
  }
}

TEST(ConvLSTMStep, GatesStayInOpenUnitInterval) {
  std::mt19937_64 rng(4);
  const auto p = ConvLSTMParams<double>::uniform(3, 4, 1.0, rng);
  StepTrace<double> tr;
  auto st = RecurrentState<double>::zeros(4, 5, 5);
  for (int t = 0; t < 3; ++t) st = step(p, st, Var<double>::constant(random_tensor({1, 5, 5}, rng)), &tr);
  for (const auto* g : {&tr.input_gate, &tr.forget_gate, &tr.output_gate})
    for (double v : g->value().data) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  for (double v : tr.candidate.value().data) EXPECT_LT(std::abs(v), 1.0);
}

TEST(ConvLSTMStep, RejectsMismatchedState) {
  const auto p = ConvLSTMParams<double>::zeros(3, 2);
  EXPECT_THROW(step(p, RecurrentState<double>::zeros(2, 3, 3), Var<double>::constant(Tensor<double>({1, 4, 4}))),
               ContractViolation);
  EXPECT_THROW(step(p, RecurrentState<double>::zeros(3, 4, 4), Var<double>::constant(Tensor<double>({1, 4, 4}))),
               ContractViolation);
}

TEST(EncodeSequence, ZeroParamsGiveZeroEmbedding) {
  const auto p = ConvLSTMParams<double>::zeros(3, 8);
  std::mt19937_64 rng(5);
  std::vector<Var<double>> maps;
  for (int t = 0; t < 4; ++t) maps.push_back(Var<double>::constant(random_tensor({1, 6, 6}, rng)));
  const auto e = encode_sequence(p, maps);
  EXPECT_EQ(e.shape(), (Shape{8}));
  for (double v : e.value().data) EXPECT_EQ(v, 0.0);
}

TEST(EncodeSequence, SingleStepIsPooledFirstMemory) {
  std::mt19937_64 rng(6);
  const auto p = ConvLSTMParams<double>::uniform(3, 3, 0.5, rng);
  const auto a = Var<double>::constant(random_tensor({1, 4, 4}, rng));
  const auto e = encode_sequence(p, {a});
  const auto s = step(p, RecurrentState<double>::zeros(3, 4, 4), a);
  EXPECT_EQ(e.value(), global_avg_pool(s.memory).value());
}

TEST(EncodeSequence, MatchesUnrolledOracle) {
  for (int trial = 0; trial < 5; ++trial) {
    std::mt19937_64 rng(400 + trial);
    const auto p = ConvLSTMParams<double>::uniform(3, 4, 0.5, rng);
    std::vector<Tensor<double>> raw;
    std::vector<Var<double>> maps;
    for (int t = 0; t < 3; ++t) {
      raw.push_back(random_tensor({1, 4, 4}, rng));
      maps.push_back(Var<double>::constant(raw.back()));
    }
    const auto want = oracle_embedding(p, raw);
    const auto got = encode_sequence(p, maps).value();
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.data[i], want[i], 1e-12);
  }
}

TEST(EncodeSequence, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(500 + seed);
    const int d = 2, k = 3;
    const auto ref = ConvLSTMParams<double>::uniform(k, d, 0.6, rng);
    std::vector<Tensor<double>> inputs;
    for (int t = 0; t < 3; ++t) inputs.push_back(random_tensor({1, 4, 4}, rng));
    for (const auto& v : ref.tensors()) inputs.push_back(v.value());
    const auto weights = random_tensor({d}, rng);
    const double err = testing::gradient_check(inputs, [&](const std::vector<Var<double>>& v) {
      ConvLSTMParams<double> p;
      p.kernel = k;
      p.hidden = d;
      p.gate_weights = v[3];
      p.gate_bias = v[4];
      p.peep_i = v[5];
      p.peep_f = v[6];
      p.peep_o = v[7];
      return sum(mul(encode_sequence(p, {v[0], v[1], v[2]}), Var<double>::constant(weights)));
    });
    EXPECT_LE(err, 1e-4) << "seed " << seed;
  }
}

TEST(EncodeSequence, RejectsEmptyAndNonUniformSequences) {
  const auto p = ConvLSTMParams<double>::zeros(3, 2);
  EXPECT_THROW(encode_sequence(p, {}), ValidationError);
  EXPECT_THROW(encode_sequence(p, {Var<double>::constant(Tensor<double>({1, 3, 3})),
                                   Var<double>::constant(Tensor<double>({1, 4, 4}))}),
               ValidationError);
}

TEST(ClipWeights, InRangeParamsAreUnchanged) {
  std::mt19937_64 rng(7);
  auto p = ConvLSTMParams<double>::uniform(3, 2, 0.5, rng);
  const auto before = p.gate_weights.value();
  clip_weights(p, -1.0, 1.0);
  EXPECT_EQ(p.gate_weights.value(), before);
}

TEST(ClipWeights, ClampsLargeEntry) {
  auto p = ConvLSTMParams<double>::zeros(3, 2);
  p.gate_bias.mutable_value().data[0] = 5.0;
  clip_weights(p, -1.0, 1.0);
  EXPECT_EQ(p.gate_bias.value().data[0], 1.0);
}

TEST(ClipWeights, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(8);
  auto p = ConvLSTMParams<double>::uniform(3, 3, 3.0, rng);
  std::vector<std::vector<double>> want;
  for (const auto& v : p.tensors()) {
    std::vector<double> w = testing::vec(v.value().data);
    for (auto& x : w) x = x < -0.5 ? -0.5 : (x > 0.25 ? 0.25 : x);
    want.push_back(w);
  }
  clip_weights(p, -0.5, 0.25);
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(testing::vec(ts[i].value().data), want[i]);
}

TEST(ClipWeights, EmptyRangeIsRejected) {
  auto p = ConvLSTMParams<double>::zeros(3, 2);
  EXPECT_THROW(clip_weights(p, 1.0, 1.0), ValidationError);
  EXPECT_THROW(clip_weights(p, 2.0, -2.0), ValidationError);
}

TEST(ConvLSTMParams, EvenKernelIsRejected) {
  EXPECT_THROW(ConvLSTMParams<double>::zeros(2, 4), ValidationError);
}

}  // namespace
}  // namespace tempseg
