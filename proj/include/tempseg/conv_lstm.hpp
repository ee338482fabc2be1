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

// Convolutional LSTM with peephole connections that folds a sequence of
// self-similarity maps into a fixed-length embedding.
//
//   i_t = sigmoid(W_ai * A_t + W_hi * H_{t-1} + w_ei . E_{t-1} + b_i)
//   f_t = sigmoid(W_af * A_t + W_hf * H_{t-1} + w_ef . E_{t-1} + b_f)
//   E_t = f_t . E_{t-1} + i_t . tanh(W_ae * A_t + W_he * H_{t-1} + b_e)
//   o_t = sigmoid(W_ao * A_t + W_ho * H_{t-1} + w_eo . E_t + b_o)
//   H_t = o_t . tanh(E_t)
//
// `*` is a same-padded convolution and `.` the elementwise product; the
// peephole weights are per hidden channel. The input and hidden kernels of
// all four gates are stored as one [4*D, 1+D, k, k] kernel over the channel
// concatenation [A_t, H_{t-1}].

#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "tempseg/autograd.hpp"

namespace tempseg {

template <typename T>
struct ConvLSTMParams {
  int kernel = 3;
  int hidden = 8;
  Var<T> gate_weights;  // [4D, 1+D, k, k], gate order i, f, e, o
  Var<T> gate_bias;     // [4D]
  Var<T> peep_i;        // [D]
  Var<T> peep_f;        // [D]
  Var<T> peep_o;        // [D]

  static ConvLSTMParams zeros(int kernel, int hidden) {
    TEMPSEG_VALIDATE(kernel > 0 && kernel % 2 == 1, "kernel size must be odd, got ", kernel);
    TEMPSEG_VALIDATE(hidden > 0, "hidden channels must be positive, got ", hidden);
    ConvLSTMParams p;
    p.kernel = kernel;
    p.hidden = hidden;
    p.gate_weights = Var<T>::parameter(Tensor<T>({4 * hidden, 1 + hidden, kernel, kernel}));
    p.gate_bias = Var<T>::parameter(Tensor<T>({4 * hidden}));
    p.peep_i = Var<T>::parameter(Tensor<T>({hidden}));
    p.peep_f = Var<T>::parameter(Tensor<T>({hidden}));
    p.peep_o = Var<T>::parameter(Tensor<T>({hidden}));
    return p;
  }

  /// Uniform(-scale, scale) for every entry.
  template <typename Rng>
  static ConvLSTMParams uniform(int kernel, int hidden, T scale, Rng& rng) {
    ConvLSTMParams p = zeros(kernel, hidden);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& v : p.tensors())
      for (auto& x : v.mutable_value().data) x = static_cast<T>(dist(rng));
    return p;
  }

  std::vector<Var<T>> tensors() const { return {gate_weights, gate_bias, peep_i, peep_f, peep_o}; }
  static std::vector<std::string> tensor_names() {
    return {"gate_weights", "gate_bias", "peep_i", "peep_f", "peep_o"};
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : tensors()) n += v.size();
    return n;
  }
};

template <typename T>
struct RecurrentState {
  Var<T> memory;  // E, [D,S,S]
  Var<T> hidden;  // H, [D,S,S]

  static RecurrentState zeros(int channels, int h, int w) {
    return {Var<T>::constant(Tensor<T>({channels, h, w})),
            Var<T>::constant(Tensor<T>({channels, h, w}))};
  }
};

/// Gate activations of one step, exposed for inspection and tests.
template <typename T>
struct StepTrace {
  Var<T> input_gate, forget_gate, output_gate, candidate;
};

template <typename T>
RecurrentState<T> step(const ConvLSTMParams<T>& p, const RecurrentState<T>& state, const Var<T>& input,
                       StepTrace<T>* trace = nullptr) {
  const int d = p.hidden;
  TEMPSEG_REQUIRE(input.value().rank() == 3 && input.shape()[0] == 1,
                  "input must be a single-channel map, got ", shape_str(input.shape()));
  TEMPSEG_REQUIRE(state.memory.shape() == Shape({d, input.shape()[1], input.shape()[2]}) &&
                      state.hidden.shape() == state.memory.shape(),
                  "state ", shape_str(state.memory.shape()), " does not match input ",
                  shape_str(input.shape()), " with ", d, " hidden channels");

  const Var<T> z =
      conv2d(concat_channels(input, state.hidden), p.gate_weights, p.gate_bias, 1, p.kernel / 2);
  const Var<T> i = sigmoid(add(slice_channels(z, 0, d), mul_channel(state.memory, p.peep_i)));
  const Var<T> f = sigmoid(add(slice_channels(z, d, 2 * d), mul_channel(state.memory, p.peep_f)));
  const Var<T> g = tanh(slice_channels(z, 2 * d, 3 * d));
  const Var<T> e = add(mul(f, state.memory), mul(i, g));
  const Var<T> o = sigmoid(add(slice_channels(z, 3 * d, 4 * d), mul_channel(e, p.peep_o)));
  const Var<T> h = mul(o, tanh(e));
  if (trace) *trace = {i, f, o, g};
  return {e, h};
}

/// Runs `step` over `maps` from a zero state and returns the spatial mean of
/// the final memory, a vector of length `hidden`.
template <typename T>
Var<T> encode_sequence(const ConvLSTMParams<T>& p, const std::vector<Var<T>>& maps) {
  TEMPSEG_VALIDATE(!maps.empty(), "cannot encode an empty sequence");
  const Shape& first = maps.front().shape();
  TEMPSEG_VALIDATE(first.size() == 3 && first[0] == 1, "maps must be [1,S,S], got ", shape_str(first));
  for (const auto& m : maps)
    TEMPSEG_VALIDATE(m.shape() == first, "non-uniform map shapes ", shape_str(first), " vs ",
                     shape_str(m.shape()));
  auto state = RecurrentState<T>::zeros(p.hidden, first[1], first[2]);
  for (const auto& m : maps) state = step(p, state, m);
  return global_avg_pool(state.memory);
}

/// Clamps every parameter entry into [lo, hi] in place.
template <typename T>
void clip_weights(ConvLSTMParams<T>& p, std::type_identity_t<T> lo, std::type_identity_t<T> hi) {
  TEMPSEG_VALIDATE(lo < hi, "clip range [", lo, ", ", hi, "] is empty");
  for (auto& v : p.tensors())
    for (auto& x : v.mutable_value().data) x = std::clamp(x, lo, hi);
}

}  // namespace tempseg
