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

// Segmentation-network and motion-estimator interfaces, a small
// encoder-decoder CNN with student and teacher presets, and a motion
// estimator that serves exact flow from a synthetic clip.

#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tempseg/autograd.hpp"
#include "tempseg/data.hpp"
#include "tempseg/flowwarp.hpp"
#include "tempseg/io.hpp"

namespace tempseg {

template <typename T>
struct NetOutput {
  Var<T> probs;     // [K,H,W], softmax over K
  Var<T> features;  // last block before the classifier, [C,h,w]
};

template <typename T>
class SegmentationNet {
 public:
  virtual ~SegmentationNet() = default;
  virtual NetOutput<T> forward(const Var<T>& image) const = 0;
  virtual std::vector<Var<T>> parameters() const = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  virtual int classes() const = 0;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
  }

  /// Frozen parameters record no backward closures.
  void set_trainable(bool on) {
    for (auto& p : parameters()) p.node()->requires_grad = on;
  }
};

/// Layer widths of the reference network.
///   stem:  3x3 stride 2            -> stem channels at 1/2
///   body:  3x3 stride 2, then 3x3  -> body channels at 1/4 (body_layers convs)
///   head:  upsample body, concat stem, 3x3 convs -> head channels at 1/2
///   cls:   1x1 to K, bilinear upsample to input size, softmax
/// depth = 1 + body_layers + head_layers + 1.
struct TinyNetConfig {
  int stem = 16;
  int body = 32;
  int body_layers = 2;
  int head = 16;
  int head_layers = 1;
  int classes = 4;
  int in_channels = 3;

  int depth() const { return 2 + body_layers + head_layers; }

  static TinyNetConfig student(int classes = 4) { return {16, 32, 2, 16, 1, classes, 3}; }
  static TinyNetConfig teacher(int classes = 4) { return {32, 64, 3, 32, 2, classes, 3}; }

  static TinyNetConfig preset(const std::string& name, int classes) {
    if (name == "student") return student(classes);
    if (name == "teacher") return teacher(classes);
    throw ValidationError("unknown network preset '" + name + "' (expected student or teacher)");
  }

  void validate() const {
    TEMPSEG_VALIDATE(classes >= 2, "network needs at least 2 classes, got ", classes);
    TEMPSEG_VALIDATE(in_channels >= 1, "network needs at least one input channel");
    TEMPSEG_VALIDATE(stem > 0 && body > 0 && head > 0, "channel widths must be positive");
    TEMPSEG_VALIDATE(body_layers >= 1 && head_layers >= 1, "depth must be >= 4 (one body and one head layer)");
  }

  void save(io::KeyValues& kv, const std::string& prefix) const {
    kv.set_number(prefix + "stem", stem);
    kv.set_number(prefix + "body", body);
    kv.set_number(prefix + "body_layers", body_layers);
    kv.set_number(prefix + "head", head);
    kv.set_number(prefix + "head_layers", head_layers);
    kv.set_number(prefix + "classes", classes);
    kv.set_number(prefix + "in_channels", in_channels);
  }

  static TinyNetConfig load(const io::KeyValues& kv, const std::string& prefix) {
    TinyNetConfig c;
    c.stem = static_cast<int>(kv.get_int(prefix + "stem"));
    c.body = static_cast<int>(kv.get_int(prefix + "body"));
    c.body_layers = static_cast<int>(kv.get_int(prefix + "body_layers"));
    c.head = static_cast<int>(kv.get_int(prefix + "head"));
    c.head_layers = static_cast<int>(kv.get_int(prefix + "head_layers"));
    c.classes = static_cast<int>(kv.get_int(prefix + "classes"));
    c.in_channels = static_cast<int>(kv.get_int(prefix + "in_channels"));
    c.validate();
    return c;
  }

  friend bool operator==(const TinyNetConfig&, const TinyNetConfig&) = default;
};

template <typename T>
class TinyNet final : public SegmentationNet<T> {
 public:
  struct Conv {
    std::string name;
    Var<T> weight;  // [Cout,Cin,k,k]
    Var<T> bias;    // [Cout]
    int stride;
  };

  /// Weights He-normal from `seed`, biases zero.
  TinyNet(const TinyNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    add_conv(rng, "stem", cfg_.in_channels, cfg_.stem, 3, 2);
    for (int i = 0; i < cfg_.body_layers; ++i)
      add_conv(rng, "body" + std::to_string(i), i == 0 ? cfg_.stem : cfg_.body, cfg_.body, 3, i == 0 ? 2 : 1);
    for (int i = 0; i < cfg_.head_layers; ++i)
      add_conv(rng, "head" + std::to_string(i), i == 0 ? cfg_.body + cfg_.stem : cfg_.head, cfg_.head, 3, 1);
    add_conv(rng, "cls", cfg_.head, cfg_.classes, 1, 1);
  }

  const TinyNetConfig& config() const { return cfg_; }
  int classes() const override { return cfg_.classes; }
  const std::vector<Conv>& layers() const { return layers_; }

  NetOutput<T> forward(const Var<T>& image) const override {
    TEMPSEG_REQUIRE(image.value().rank() == 3 && image.shape()[0] == cfg_.in_channels, "expected [",
                    cfg_.in_channels, ",H,W] image, got ", shape_str(image.shape()));
    const int h = image.shape()[1], w = image.shape()[2];
    TEMPSEG_VALIDATE(h >= 4 && w >= 4, "image ", h, "x", w, " too small for two stride-2 stages");
    std::size_t li = 0;
    const auto apply = [&](const Var<T>& x) {
      const Conv& c = layers_[li++];
      const int k = c.weight.shape()[2];
      return conv2d(x, c.weight, c.bias, c.stride, k / 2);
    };
    const Var<T> stem = relu(apply(image));
    Var<T> body = stem;
    for (int i = 0; i < cfg_.body_layers; ++i) body = relu(apply(body));
    Var<T> head = concat_channels(resize_bilinear(body, stem.shape()[1], stem.shape()[2]), stem);
    for (int i = 0; i < cfg_.head_layers; ++i) head = relu(apply(head));
    const Var<T> logits = apply(head);
    return {softmax_channels(resize_bilinear(logits, h, w)), head};
  }

  std::vector<Var<T>> parameters() const override {
    std::vector<Var<T>> out;
    for (const auto& c : layers_) {
      out.push_back(c.weight);
      out.push_back(c.bias);
    }
    return out;
  }

  std::vector<std::string> parameter_names() const override {
    std::vector<std::string> out;
    for (const auto& c : layers_) {
      out.push_back(c.name + ".weight");
      out.push_back(c.name + ".bias");
    }
    return out;
  }

 private:
  template <typename Rng>
  void add_conv(Rng& rng, std::string name, int cin, int cout, int k, int stride) {
    Tensor<T> w({cout, cin, k, k});
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * k * k)));
    for (auto& v : w.data) v = static_cast<T>(dist(rng));
    layers_.push_back({std::move(name), Var<T>::parameter(std::move(w)), Var<T>::parameter(Tensor<T>({cout})), stride});
  }

  TinyNetConfig cfg_;
  std::vector<Conv> layers_;
};

/// Hard prediction: per-pixel argmax of a [K,H,W] probability map; ties go
/// to the lower class id.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& probs) {
  TEMPSEG_REQUIRE(probs.rank() == 3, "expected [K,H,W], got ", shape_str(probs.shape));
  const int k = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  LabelMap out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (probs.at(c, y, x) > probs.at(best, y, x)) best = c;
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  return out;
}

/// f(I_b, I_a) = M_{a->b} for frames of one clip, addressed by index.
class MotionEstimator {
 public:
  virtual ~MotionEstimator() = default;
  virtual FlowField estimate(int from, int to) const = 0;
};

/// Serves the stored consecutive flows of a clip, chained for distant pairs.
class GroundTruthFlowEstimator final : public MotionEstimator {
 public:
  explicit GroundTruthFlowEstimator(const VideoClip& clip) : clip_(&clip) {
    TEMPSEG_VALIDATE(clip.forward_flows.size() + 1 == clip.frames.size() &&
                         clip.backward_flows.size() + 1 == clip.frames.size(),
                     "clip ", clip.id, " was loaded without flows");
  }

  FlowField estimate(int from, int to) const override { return flow_between(*clip_, from, to); }

 private:
  const VideoClip* clip_;
};

}  // namespace tempseg
