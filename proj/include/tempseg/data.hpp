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

// Synthetic video clips of textured shapes moving at constant integer
// velocity over a static background. Every clip carries exact forward and
// backward optical flow and sparse labels, and round-trips through an
// on-disk layout of PNG frames, PNG labels, .flo flows and a manifest.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tempseg/flowwarp.hpp"
#include "tempseg/io.hpp"
#include "tempseg/label_map.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg {

using Color = std::array<float, 3>;

enum class ShapeKind { kRect, kDisc };

/// Class c >= 1 is drawn with texture (c - 1) % 3: horizontal stripes,
/// vertical stripes, checkerboard.
struct SceneObject {
  ShapeKind shape = ShapeKind::kRect;
  int cls = 1;
  int width = 12;   // bounding box; a disc uses min(width, height) as diameter
  int height = 12;
  int x = 0;        // top-left corner at frame 0
  int y = 0;
  int vx = 0;       // pixels per frame
  int vy = 0;
  Color color_a{0.8f, 0.2f, 0.2f};
  Color color_b{0.4f, 0.1f, 0.1f};
  int period = 4;   // texture period in pixels
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int classes = 4;
  int background_class = 0;
  Color background_top{0.45f, 0.5f, 0.55f};
  Color background_bottom{0.35f, 0.4f, 0.45f};
  std::vector<SceneObject> objects;  // drawn in order; later objects on top
  double noise = 0.08;               // per-pixel Gaussian sigma, drawn per frame
  double brightness_jitter = 0.0;    // per-frame global offset sigma

  void validate() const {
    TEMPSEG_VALIDATE(classes >= 2, "scene needs at least 2 classes, got ", classes);
    TEMPSEG_VALIDATE(height > 0 && width > 0, "empty canvas ", height, "x", width);
    TEMPSEG_VALIDATE(background_class >= 0 && background_class < classes, "background class out of range");
    TEMPSEG_VALIDATE(noise >= 0 && brightness_jitter >= 0, "noise amplitudes must be non-negative");
    for (const auto& o : objects) {
      TEMPSEG_VALIDATE(o.cls >= 0 && o.cls < classes, "object class ", o.cls, " out of range");
      TEMPSEG_VALIDATE(o.width > 0 && o.height > 0, "object with empty extent");
      TEMPSEG_VALIDATE(o.period >= 2, "texture period must be >= 2");
    }
  }
};

/// Ranges for drawing random scenes.
struct SceneSampler {
  int height = 64;
  int width = 64;
  int classes = 4;
  int min_objects = 2;
  int max_objects = 4;
  int min_size = 12;
  int max_size = 24;
  int max_speed = 2;
  double min_contrast = 0.1;
  double max_contrast = 0.45;
  int period = 4;
  double noise = 0.08;
  double brightness_jitter = 0.03;
  double disc_fraction = 0.5;

  template <typename Rng>
  SceneSpec sample(Rng& rng, int length) const {
    TEMPSEG_VALIDATE(classes >= 2, "scene needs at least 2 classes, got ", classes);
    TEMPSEG_VALIDATE(min_objects >= 0 && min_objects <= max_objects, "bad object count range");
    TEMPSEG_VALIDATE(min_size >= 2 && min_size <= max_size, "bad object size range");
    TEMPSEG_VALIDATE(max_speed >= 0, "max speed must be non-negative");
    auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    auto uint = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

    SceneSpec s;
    s.height = height;
    s.width = width;
    s.classes = classes;
    s.noise = noise;
    s.brightness_jitter = brightness_jitter;
    const double base = uni(0.3, 0.7);
    for (int c = 0; c < 3; ++c) {
      s.background_top[c] = static_cast<float>(std::clamp(base + uni(-0.15, 0.15), 0.0, 1.0));
      s.background_bottom[c] = static_cast<float>(std::clamp(base + uni(-0.15, 0.15), 0.0, 1.0));
    }
    const int count = uint(min_objects, max_objects);
    for (int i = 0; i < count; ++i) {
      SceneObject o;
      o.shape = uni(0, 1) < disc_fraction ? ShapeKind::kDisc : ShapeKind::kRect;
      o.cls = uint(1, classes - 1);
      o.width = uint(min_size, max_size);
      o.height = o.shape == ShapeKind::kDisc ? o.width : uint(min_size, max_size);
      o.vx = uint(-max_speed, max_speed);
      o.vy = uint(-max_speed, max_speed);
      // Keep the centre inside the canvas for the whole clip.
      const int span_x = o.vx * (length - 1), span_y = o.vy * (length - 1);
      const int cx_lo = std::max(0, -span_x), cx_hi = std::min(width - 1, width - 1 - span_x);
      const int cy_lo = std::max(0, -span_y), cy_hi = std::min(height - 1, height - 1 - span_y);
      const int cx = cx_lo <= cx_hi ? uint(cx_lo, cx_hi) : width / 2;
      const int cy = cy_lo <= cy_hi ? uint(cy_lo, cy_hi) : height / 2;
      o.x = cx - o.width / 2;
      o.y = cy - o.height / 2;
      const double contrast = uni(min_contrast, max_contrast);
      for (int c = 0; c < 3; ++c) {
        const double mid = uni(0.25, 0.75);
        o.color_a[c] = static_cast<float>(std::clamp(mid + contrast / 2, 0.0, 1.0));
        o.color_b[c] = static_cast<float>(std::clamp(mid - contrast / 2, 0.0, 1.0));
      }
      o.period = period;
      s.objects.push_back(o);
    }
    return s;
  }
};

struct VideoClip {
  std::string id;
  std::uint64_t seed = 0;
  int classes = 0;
  std::vector<Tensor<float>> frames;       // [3,H,W], values k/255
  std::vector<FlowField> forward_flows;    // [t]: M_{t->t+1}
  std::vector<FlowField> backward_flows;   // [t]: M_{t+1->t}
  std::vector<int> labeled;                // ascending frame indices
  std::vector<LabelMap> labels;            // aligned with `labeled`

  int length() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().dim(1); }
  int width() const { return frames.empty() ? 0 : frames.front().dim(2); }

  const LabelMap* label_for(int frame) const {
    for (std::size_t i = 0; i < labeled.size(); ++i)
      if (labeled[i] == frame) return &labels[i];
    return nullptr;
  }

  void validate() const {
    TEMPSEG_VALIDATE(!frames.empty(), "clip ", id, " has no frames");
    TEMPSEG_VALIDATE(forward_flows.size() + 1 == frames.size() && backward_flows.size() + 1 == frames.size(),
                     "clip ", id, ": flow count must be frame count - 1");
    TEMPSEG_VALIDATE(labeled.size() == labels.size(), "clip ", id, ": label index/map count mismatch");
    for (int idx : labeled) TEMPSEG_VALIDATE(idx >= 0 && idx < length(), "clip ", id, ": labeled index ", idx, " out of range");
    for (const auto& f : frames)
      TEMPSEG_VALIDATE(f.shape == frames.front().shape, "clip ", id, ": frames differ in shape");
    for (const auto& l : labels) l.validate(classes);
  }
};

namespace detail {

inline int texture_bit(int cls, int lx, int ly, int period) {
  const int half = std::max(1, period / 2);
  const auto cell = [half](int v) { return (v >= 0 ? v : v - half + 1) / half; };
  switch ((cls - 1) % 3) {
    case 0: return cell(ly) & 1;
    case 1: return cell(lx) & 1;
    default: return (cell(lx) + cell(ly)) & 1;
  }
}

inline bool covers(const SceneObject& o, int px, int py, int t) {
  const int lx = px - (o.x + o.vx * t);
  const int ly = py - (o.y + o.vy * t);
  if (lx < 0 || ly < 0 || lx >= o.width || ly >= o.height) return false;
  if (o.shape == ShapeKind::kRect) return true;
  const double d = std::min(o.width, o.height);
  const double cx = (d - 1) / 2.0, cy = (d - 1) / 2.0;
  const double rx = lx - cx, ry = ly - cy;
  return rx * rx + ry * ry <= (d / 2.0) * (d / 2.0);
}

// Index of the topmost object covering (px, py) at frame t, or -1.
inline int owner(const SceneSpec& s, int px, int py, int t) {
  for (int i = static_cast<int>(s.objects.size()) - 1; i >= 0; --i)
    if (covers(s.objects[i], px, py, t)) return i;
  return -1;
}

inline float quantize8(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic per-item seed derived from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return detail::splitmix64(detail::splitmix64(base ^ detail::splitmix64(stream)) + index);
}

/// Ground-truth class map of frame t.
inline LabelMap render_labels(const SceneSpec& s, int t) {
  LabelMap out(s.height, s.width, static_cast<std::uint8_t>(s.background_class));
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (int o = detail::owner(s, x, y, t); o >= 0) out.at(y, x) = static_cast<std::uint8_t>(s.objects[o].cls);
  return out;
}

/// Exact flow of frame t's pixels: forward (to t+1) uses +v of the visible
/// object, backward (to t-1) uses -v; background is static.
inline FlowField render_flow(const SceneSpec& s, int t, int direction) {
  FlowField f(s.height, s.width);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (int o = detail::owner(s, x, y, t); o >= 0) {
        f.dx[f.index(y, x)] = static_cast<float>(direction * s.objects[o].vx);
        f.dy[f.index(y, x)] = static_cast<float>(direction * s.objects[o].vy);
      }
  return f;
}

struct ClipOptions {
  std::vector<int> labeled;  // empty: the middle frame only
  std::string id = "clip";
};

/// Renders `length` frames of `spec`. Pixel noise and brightness jitter are
/// drawn from `seed`, so equal inputs give bit-identical clips.
inline VideoClip generate_clip(const SceneSpec& spec, int length, std::uint64_t seed, const ClipOptions& opts = {}) {
  spec.validate();
  TEMPSEG_VALIDATE(length >= 3, "clip length must be >= 3, got ", length);
  VideoClip clip;
  clip.id = opts.id;
  clip.seed = seed;
  clip.classes = spec.classes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int h = spec.height, w = spec.width;
  for (int t = 0; t < length; ++t) {
    Tensor<float> frame({3, h, w});
    const double offset = spec.brightness_jitter * gauss(rng);
    for (int y = 0; y < h; ++y) {
      const double a = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
      for (int x = 0; x < w; ++x) {
        Color base;
        if (int o = detail::owner(spec, x, y, t); o >= 0) {
          const SceneObject& obj = spec.objects[o];
          const int bit = detail::texture_bit(obj.cls, x - (obj.x + obj.vx * t), y - (obj.y + obj.vy * t), obj.period);
          base = bit ? obj.color_a : obj.color_b;
        } else {
          for (int c = 0; c < 3; ++c)
            base[c] = static_cast<float>((1 - a) * spec.background_top[c] + a * spec.background_bottom[c]);
        }
        for (int c = 0; c < 3; ++c) frame.at(c, y, x) = detail::quantize8(base[c] + offset + spec.noise * gauss(rng));
      }
    }
    clip.frames.push_back(std::move(frame));
  }
  for (int t = 0; t + 1 < length; ++t) {
    clip.forward_flows.push_back(render_flow(spec, t, +1));
    clip.backward_flows.push_back(render_flow(spec, t + 1, -1));
  }
  clip.labeled = opts.labeled.empty() ? std::vector<int>{length / 2} : opts.labeled;
  std::sort(clip.labeled.begin(), clip.labeled.end());
  for (int idx : clip.labeled) {
    TEMPSEG_VALIDATE(idx >= 0 && idx < length, "labeled index ", idx, " outside clip");
    clip.labels.push_back(render_labels(spec, idx));
  }
  return clip;
}

/// Flow M_{a->b} between any two frames, chained through consecutive flows.
inline FlowField flow_between(const VideoClip& clip, int a, int b) {
  TEMPSEG_VALIDATE(a >= 0 && b >= 0 && a < clip.length() && b < clip.length(), "frame pair (", a, ", ", b,
                   ") outside clip of length ", clip.length());
  FlowField out(clip.height(), clip.width());
  if (a < b)
    for (int t = a; t < b; ++t) out = t == a ? clip.forward_flows[t] : compose_flows(out, clip.forward_flows[t]);
  else if (a > b)
    for (int t = a; t > b; --t) out = t == a ? clip.backward_flows[t - 1] : compose_flows(out, clip.backward_flows[t - 1]);
  return out;
}

/// (frame_f, labeled frame, frame_b) plus the flows linking them.
struct Triplet {
  std::array<int, 3> frames{};
  std::array<FlowField, 2> flows;  // M_{f->labeled}, M_{labeled->b}
};

/// Draws frame_f uniformly from the `window` frames before a labeled frame
/// and frame_b from the `window` frames after it (clamped to the clip).
template <typename Rng>
Triplet sample_triplet(const VideoClip& clip, Rng& rng, int window = 5) {
  TEMPSEG_VALIDATE(window >= 1, "sampling window must be >= 1");
  TEMPSEG_VALIDATE(!clip.labeled.empty(), "clip ", clip.id, " has no labeled frame");
  const int pick = clip.labeled.size() == 1
                       ? 0
                       : std::uniform_int_distribution<int>(0, static_cast<int>(clip.labeled.size()) - 1)(rng);
  const int mid = clip.labeled[pick];
  TEMPSEG_VALIDATE(mid >= 1 && mid + 1 < clip.length(), "labeled frame ", mid, " of clip ", clip.id,
                   " lies on the clip boundary");
  const int f = std::uniform_int_distribution<int>(std::max(0, mid - window), mid - 1)(rng);
  const int b = std::uniform_int_distribution<int>(mid + 1, std::min(clip.length() - 1, mid + window))(rng);
  Triplet t;
  t.frames = {f, mid, b};
  t.flows = {flow_between(clip, f, mid), flow_between(clip, mid, b)};
  return t;
}

/// Longer sequences: (length - 1) / 2 distinct frames drawn from each side
/// of a labeled frame within `window`, returned in temporal order with the
/// flows between consecutive members. Length 3 matches sample_triplet.
struct Sequence {
  std::vector<int> frames;
  std::vector<FlowField> flows;  // flows[i]: M_{frames[i] -> frames[i+1]}
  int labeled_position = 0;      // index into `frames`
};

template <typename Rng>
Sequence sample_sequence(const VideoClip& clip, Rng& rng, int window, int length) {
  TEMPSEG_VALIDATE(length >= 3 && length % 2 == 1, "sequence length must be odd and >= 3, got ", length);
  Sequence s;
  if (length == 3) {
    Triplet t = sample_triplet(clip, rng, window);
    s.frames.assign(t.frames.begin(), t.frames.end());
    s.flows.assign(t.flows.begin(), t.flows.end());
    s.labeled_position = 1;
    return s;
  }
  TEMPSEG_VALIDATE(!clip.labeled.empty(), "clip ", clip.id, " has no labeled frame");
  const int pick = std::uniform_int_distribution<int>(0, static_cast<int>(clip.labeled.size()) - 1)(rng);
  const int mid = clip.labeled[pick];
  const int side = (length - 1) / 2;
  auto draw = [&](int lo, int hi) {
    std::vector<int> pool;
    for (int i = lo; i <= hi; ++i) pool.push_back(i);
    TEMPSEG_VALIDATE(static_cast<int>(pool.size()) >= side, "clip ", clip.id, " has fewer than ", side,
                     " frames on one side of labeled frame ", mid, " within the window");
    for (int i = 0; i < side; ++i)
      std::swap(pool[i], pool[std::uniform_int_distribution<int>(i, static_cast<int>(pool.size()) - 1)(rng)]);
    pool.resize(static_cast<std::size_t>(side));
    return pool;
  };
  auto before = draw(std::max(0, mid - window), mid - 1);
  auto after = draw(mid + 1, std::min(clip.length() - 1, mid + window));
  s.frames = before;
  s.frames.push_back(mid);
  s.frames.insert(s.frames.end(), after.begin(), after.end());
  std::sort(s.frames.begin(), s.frames.end());
  s.labeled_position = side;
  for (std::size_t i = 0; i + 1 < s.frames.size(); ++i) s.flows.push_back(flow_between(clip, s.frames[i], s.frames[i + 1]));
  return s;
}

// ---------------------------------------------------------------------------
// Disk layout: <dir>/{frame_%03d.png, label_%03d.png, flow_%03d.flo,
// flowb_%03d.flo, manifest}. flow_t is M_{t->t+1}; flowb_t is M_{t+1->t}.

inline constexpr int kClipFormatVersion = 1;

namespace detail {

inline std::string indexed(const std::string& dir, const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "/%s_%03d.%s", stem, i, ext);
  return dir + buf;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::vector<int> split_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(static_cast<int>(io::KeyValues::to_int(key, s.substr(pos, comma - pos))));
    pos = comma + 1;
  }
  return out;
}

inline io::Raster frame_raster(const Tensor<float>& f) {
  io::Raster r{f.dim(2), f.dim(1), 3, {}};
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c)
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(f.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  return r;
}

inline Tensor<float> raster_frame(const io::Raster& r, const std::string& origin) {
  if (r.channels != 3) throw IoError(origin, "expected an RGB frame");
  Tensor<float> f({3, r.height, r.width});
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < 3; ++c)
        f.at(c, y, x) = static_cast<float>(r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c]) / 255.0f;
  return f;
}

}  // namespace detail

inline void write_labels_png(const std::string& path, const LabelMap& l) {
  io::write_file_atomic(path, io::encode_png({l.width, l.height, 1, l.ids}));
}

inline LabelMap read_labels_png(const std::string& path) {
  const io::Raster r = io::decode_png(io::read_file(path), path);
  if (r.channels != 1) throw IoError(path, "expected a single-channel label image");
  return LabelMap(r.height, r.width, r.pixels);
}

inline void save_clip(const VideoClip& clip, const std::string& dir) {
  clip.validate();
  std::filesystem::create_directories(dir);
  for (int t = 0; t < clip.length(); ++t)
    io::write_file_atomic(detail::indexed(dir, "frame", t, "png"), io::encode_png(detail::frame_raster(clip.frames[t])));
  for (std::size_t i = 0; i < clip.labeled.size(); ++i)
    write_labels_png(detail::indexed(dir, "label", clip.labeled[i], "png"), clip.labels[i]);
  for (int t = 0; t + 1 < clip.length(); ++t) {
    write_flo(detail::indexed(dir, "flow", t, "flo"), clip.forward_flows[t]);
    write_flo(detail::indexed(dir, "flowb", t, "flo"), clip.backward_flows[t]);
  }
  io::KeyValues m;
  m.set_number("version", kClipFormatVersion);
  m.set("clip_id", clip.id);
  m.set("seed", std::to_string(clip.seed));
  m.set_number("frames", clip.length());
  m.set_number("height", clip.height());
  m.set_number("width", clip.width());
  m.set_number("classes", clip.classes);
  m.set("labeled", detail::join_ints(clip.labeled));
  io::write_file_atomic(dir + "/manifest", m.str());
}

struct LoadOptions {
  // Frame indices to read; nullopt reads every frame. Unread frames are
  // left as empty tensors.
  std::optional<std::vector<int>> frames;
  bool labeled_frames_only = false;  // read only the labeled frames
  bool flows = true;
};

inline VideoClip load_clip(const std::string& dir, const LoadOptions& opts = {}) {
  const std::string manifest_path = dir + "/manifest";
  const io::KeyValues m = io::KeyValues::load(manifest_path);
  VideoClip clip;
  try {
    if (m.get_int("version") != kClipFormatVersion)
      throw ValidationError("unsupported clip format version " + m.get("version"));
    clip.id = m.get("clip_id");
    clip.seed = std::stoull(m.get("seed"));
    clip.classes = static_cast<int>(m.get_int("classes"));
    clip.labeled = detail::split_ints("labeled", m.get("labeled"));
  } catch (const ValidationError& e) {
    throw ValidationError(manifest_path + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw ValidationError(manifest_path + ": malformed manifest (" + e.what() + ")");
  }
  const int frames = static_cast<int>(m.get_int("frames"));
  const int h = static_cast<int>(m.get_int("height")), w = static_cast<int>(m.get_int("width"));
  TEMPSEG_VALIDATE(frames >= 1 && h > 0 && w > 0, manifest_path, ": bad clip geometry");

  clip.frames.resize(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    if (opts.frames && std::find(opts.frames->begin(), opts.frames->end(), t) == opts.frames->end()) continue;
    if (opts.labeled_frames_only && std::find(clip.labeled.begin(), clip.labeled.end(), t) == clip.labeled.end())
      continue;
    const std::string path = detail::indexed(dir, "frame", t, "png");
    clip.frames[t] = detail::raster_frame(io::decode_png(io::read_file(path), path), path);
    if (clip.frames[t].dim(1) != h || clip.frames[t].dim(2) != w) throw IoError(path, "frame size disagrees with manifest");
  }
  for (int idx : clip.labeled) {
    TEMPSEG_VALIDATE(idx >= 0 && idx < frames, manifest_path, ": labeled index ", idx, " out of range");
    const std::string path = detail::indexed(dir, "label", idx, "png");
    LabelMap l = read_labels_png(path);
    try {
      l.validate(clip.classes);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": " + e.what() + " (manifest declares " + std::to_string(clip.classes) + " classes)");
    }
    clip.labels.push_back(std::move(l));
  }
  if (opts.flows) {
    for (int t = 0; t + 1 < frames; ++t) {
      clip.forward_flows.push_back(read_flo(detail::indexed(dir, "flow", t, "flo")));
      clip.backward_flows.push_back(read_flo(detail::indexed(dir, "flowb", t, "flo")));
    }
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Datasets: <root>/<split>/<clip_id>/

struct DatasetSpec {
  SceneSampler scene;
  int clip_length = 11;
  int train_clips = 200;
  int val_clips = 40;
  std::uint64_t seed = 0;
};

inline std::string clip_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%04d", index);
  return buf;
}

/// Clip `index` of `split`; depends only on (spec, split, index).
inline VideoClip generate_dataset_clip(const DatasetSpec& spec, const std::string& split, int index) {
  TEMPSEG_VALIDATE(split == "train" || split == "val", "unknown split '", split, "' (expected train or val)");
  const std::uint64_t stream = split == "train" ? 1 : 2;
  std::mt19937_64 scene_rng(derive_seed(spec.seed, stream, static_cast<std::uint64_t>(index)));
  const SceneSpec scene = spec.scene.sample(scene_rng, spec.clip_length);
  ClipOptions opts;
  opts.id = clip_name(index);
  return generate_clip(scene, spec.clip_length, derive_seed(spec.seed, stream + 16, static_cast<std::uint64_t>(index)), opts);
}

inline std::vector<std::string> list_clips(const std::string& root, const std::string& split) {
  const std::filesystem::path dir = std::filesystem::path(root) / split;
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "manifest")) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline constexpr const char* kRunManifestName = "run_manifest";

/// FNV-1a over the relative paths and bytes of every file under `root`,
/// visited in sorted order, skipping the top-level run manifest; hex string.
inline std::string dataset_hash(const std::string& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file() && std::filesystem::relative(e.path(), root) != kRunManifestName) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](const std::string& bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& f : files) {
    mix(std::filesystem::relative(f, root).generic_string());
    mix(io::read_file(f.string()));
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::vector<VideoClip> load_split(const std::string& root, const std::string& split, const LoadOptions& opts = {}) {
  std::vector<VideoClip> clips;
  for (const auto& dir : list_clips(root, split)) clips.push_back(load_clip(dir, opts));
  return clips;
}

}  // namespace tempseg
