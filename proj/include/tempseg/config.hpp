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

// Run configuration: flat `section.key = value` text with dotted sections.
// Unknown keys are rejected so typos surface as errors naming the key.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tempseg/data.hpp"
#include "tempseg/io.hpp"
#include "tempseg/losses.hpp"
#include "tempseg/models.hpp"

namespace tempseg {

/// One optimisation phase (teacher pretraining or student distillation).
struct PhaseConfig {
  double base_lr = 0.01;
  double poly_power = 0.9;
  double momentum = 0.9;
  int max_iters = 2000;
  int batch = 4;
  int checkpoint_every = 100;
};

struct TrainingConfig {
  std::uint64_t seed = 0;

  DatasetSpec data;

  std::string student_preset = "student";
  std::string teacher_preset = "teacher";

  int lstm_kernel = 3;
  int lstm_hidden = 8;
  std::string lstm_init = "zero";  // zero | uniform
  double lstm_init_scale = 0.1;
  double clip_lo = -1.0;
  double clip_hi = 1.0;

  PhaseConfig student;
  PhaseConfig teacher{0.01, 0.9, 0.9, 2000, 4, 100};
  bool teacher_temporal_loss = true;

  double lambda = 0.1;
  TermFlags terms = TermFlags::parse("all");
  int pair_grid = 16;
  int mf_grid = 8;
  int window = 5;
  int sequence_length = 3;
  bool anti_collapse = true;
  double collapse_margin = 0.1;
  bool augment = false;

  std::string ablate_schemes = "a,b,c,d,e,j";
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2};
  bool ablate_transfer = true;

  ObjectiveConfig objective() const {
    ObjectiveConfig o;
    o.lambda = lambda;
    o.terms = terms;
    o.pair_grid = {pair_grid, pair_grid};
    o.mf_grid = {mf_grid, mf_grid};
    o.collapse_margin = collapse_margin;
    o.anti_collapse = anti_collapse;
    return o;
  }

  void validate() const {
    for (const PhaseConfig* p : {&student, &teacher}) {
      TEMPSEG_VALIDATE(p->base_lr > 0, "learning rate must be positive");
      TEMPSEG_VALIDATE(p->poly_power >= 0, "poly power must be non-negative");
      TEMPSEG_VALIDATE(p->momentum >= 0 && p->momentum < 1, "momentum must lie in [0, 1)");
      TEMPSEG_VALIDATE(p->max_iters >= 0, "max_iters must be non-negative");
      TEMPSEG_VALIDATE(p->batch >= 1, "batch must be >= 1");
      TEMPSEG_VALIDATE(p->checkpoint_every >= 1, "checkpoint_every must be >= 1");
    }
    TEMPSEG_VALIDATE(lambda >= 0, "train.lambda must be non-negative");
    TEMPSEG_VALIDATE(clip_lo < clip_hi, "lstm.clip_lo must be below lstm.clip_hi");
    TEMPSEG_VALIDATE(lstm_init == "zero" || lstm_init == "uniform", "lstm.init must be zero or uniform");
    TEMPSEG_VALIDATE(pair_grid >= 1 && mf_grid >= 1, "grid sizes must be positive");
    TEMPSEG_VALIDATE(window >= 1, "train.window must be >= 1");
    TEMPSEG_VALIDATE(sequence_length >= 3 && sequence_length % 2 == 1, "train.sequence_length must be odd and >= 3");
    TEMPSEG_VALIDATE((sequence_length - 1) / 2 <= window, "train.window too small for the sequence length");
    TEMPSEG_VALIDATE(!augment, "train.augment is reserved and not implemented");
    TEMPSEG_VALIDATE(!ablate_seeds.empty(), "ablate.seeds must list at least one seed");
    TinyNetConfig::preset(student_preset, data.scene.classes).validate();
    TinyNetConfig::preset(teacher_preset, data.scene.classes).validate();
    TEMPSEG_VALIDATE(data.clip_length >= 3, "data.clip_length must be >= 3");
    TEMPSEG_VALIDATE(data.train_clips >= 0 && data.val_clips >= 0, "clip counts must be non-negative");
  }
};

namespace detail {

struct ConfigField {
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

template <typename Get>
ConfigField ref_field(Get ref) {
  return {[ref](TrainingConfig& c, const std::string& v) {
            auto& slot = ref(c);
            using V = std::decay_t<decltype(slot)>;
            if constexpr (std::is_same_v<V, bool>) {
              TEMPSEG_VALIDATE(v == "true" || v == "false", "expected true or false, got '", v, "'");
              slot = v == "true";
            } else if constexpr (std::is_same_v<V, std::string>) {
              slot = v;
            } else if constexpr (std::is_floating_point_v<V>) {
              slot = static_cast<V>(io::KeyValues::to_double("", v));
            } else {
              slot = static_cast<V>(io::KeyValues::to_int("", v));
            }
          },
          [ref](const TrainingConfig& c) {
            auto& slot = ref(const_cast<TrainingConfig&>(c));
            using V = std::decay_t<decltype(slot)>;
            if constexpr (std::is_same_v<V, bool>) return std::string(slot ? "true" : "false");
            else if constexpr (std::is_same_v<V, std::string>) return slot;
            else if constexpr (std::is_floating_point_v<V>) return io::shortest_double(static_cast<double>(slot));
            else return std::to_string(slot);
          }};
}

#define TEMPSEG_FIELD(expr) ref_field([](TrainingConfig& c) -> auto& { return expr; })

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = {
      {"seed", TEMPSEG_FIELD(c.seed)},
      {"data.height", TEMPSEG_FIELD(c.data.scene.height)},
      {"data.width", TEMPSEG_FIELD(c.data.scene.width)},
      {"data.classes", TEMPSEG_FIELD(c.data.scene.classes)},
      {"data.min_objects", TEMPSEG_FIELD(c.data.scene.min_objects)},
      {"data.max_objects", TEMPSEG_FIELD(c.data.scene.max_objects)},
      {"data.min_size", TEMPSEG_FIELD(c.data.scene.min_size)},
      {"data.max_size", TEMPSEG_FIELD(c.data.scene.max_size)},
      {"data.max_speed", TEMPSEG_FIELD(c.data.scene.max_speed)},
      {"data.min_contrast", TEMPSEG_FIELD(c.data.scene.min_contrast)},
      {"data.max_contrast", TEMPSEG_FIELD(c.data.scene.max_contrast)},
      {"data.period", TEMPSEG_FIELD(c.data.scene.period)},
      {"data.noise", TEMPSEG_FIELD(c.data.scene.noise)},
      {"data.brightness_jitter", TEMPSEG_FIELD(c.data.scene.brightness_jitter)},
      {"data.disc_fraction", TEMPSEG_FIELD(c.data.scene.disc_fraction)},
      {"data.clip_length", TEMPSEG_FIELD(c.data.clip_length)},
      {"data.train_clips", TEMPSEG_FIELD(c.data.train_clips)},
      {"data.val_clips", TEMPSEG_FIELD(c.data.val_clips)},
      {"model.student", TEMPSEG_FIELD(c.student_preset)},
      {"model.teacher", TEMPSEG_FIELD(c.teacher_preset)},
      {"lstm.kernel", TEMPSEG_FIELD(c.lstm_kernel)},
      {"lstm.hidden", TEMPSEG_FIELD(c.lstm_hidden)},
      {"lstm.init", TEMPSEG_FIELD(c.lstm_init)},
      {"lstm.init_scale", TEMPSEG_FIELD(c.lstm_init_scale)},
      {"lstm.clip_lo", TEMPSEG_FIELD(c.clip_lo)},
      {"lstm.clip_hi", TEMPSEG_FIELD(c.clip_hi)},
      {"train.base_lr", TEMPSEG_FIELD(c.student.base_lr)},
      {"train.poly_power", TEMPSEG_FIELD(c.student.poly_power)},
      {"train.momentum", TEMPSEG_FIELD(c.student.momentum)},
      {"train.max_iters", TEMPSEG_FIELD(c.student.max_iters)},
      {"train.batch", TEMPSEG_FIELD(c.student.batch)},
      {"train.checkpoint_every", TEMPSEG_FIELD(c.student.checkpoint_every)},
      {"train.lambda", TEMPSEG_FIELD(c.lambda)},
      {"train.pair_grid", TEMPSEG_FIELD(c.pair_grid)},
      {"train.mf_grid", TEMPSEG_FIELD(c.mf_grid)},
      {"train.window", TEMPSEG_FIELD(c.window)},
      {"train.sequence_length", TEMPSEG_FIELD(c.sequence_length)},
      {"train.anti_collapse", TEMPSEG_FIELD(c.anti_collapse)},
      {"train.collapse_margin", TEMPSEG_FIELD(c.collapse_margin)},
      {"train.augment", TEMPSEG_FIELD(c.augment)},
      {"teacher.base_lr", TEMPSEG_FIELD(c.teacher.base_lr)},
      {"teacher.poly_power", TEMPSEG_FIELD(c.teacher.poly_power)},
      {"teacher.momentum", TEMPSEG_FIELD(c.teacher.momentum)},
      {"teacher.max_iters", TEMPSEG_FIELD(c.teacher.max_iters)},
      {"teacher.batch", TEMPSEG_FIELD(c.teacher.batch)},
      {"teacher.checkpoint_every", TEMPSEG_FIELD(c.teacher.checkpoint_every)},
      {"teacher.temporal_loss", TEMPSEG_FIELD(c.teacher_temporal_loss)},
      {"ablate.schemes", TEMPSEG_FIELD(c.ablate_schemes)},
      {"ablate.transfer", TEMPSEG_FIELD(c.ablate_transfer)},
      {"train.terms",
       {[](TrainingConfig& c, const std::string& v) { c.terms = TermFlags::parse(v); },
        [](const TrainingConfig& c) { return c.terms.str(); }}},
      {"ablate.seeds",
       {[](TrainingConfig& c, const std::string& v) {
          c.ablate_seeds.clear();
          for (int s : split_ints("ablate.seeds", v)) {
            TEMPSEG_VALIDATE(s >= 0, "seeds must be non-negative");
            c.ablate_seeds.push_back(static_cast<std::uint64_t>(s));
          }
        },
        [](const TrainingConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.ablate_seeds.size(); ++i)
            out += (i ? "," : "") + std::to_string(c.ablate_seeds[i]);
          return out;
        }}},
  };
  return fields;
}

#undef TEMPSEG_FIELD

}  // namespace detail

/// Applies every entry of `kv` to `cfg`; unknown keys and malformed values
/// raise ValidationError naming the key and `origin`.
inline void apply_config(TrainingConfig& cfg, const io::KeyValues& kv, const std::string& origin) {
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : kv.entries()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError(origin + ": unknown config key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ": bad value for '" + key + "': " + e.what());
    }
  }
}

/// Defaults, then the file at `path` (if non-empty), then TEMPSEG_SEED.
inline TrainingConfig load_config(const std::string& path) {
  TrainingConfig cfg;
  if (!path.empty()) apply_config(cfg, io::KeyValues::load(path), path);
  if (const char* env = std::getenv("TEMPSEG_SEED"); env && *env) {
    io::KeyValues kv;
    kv.set("seed", env);
    apply_config(cfg, kv, "TEMPSEG_SEED");
  }
  cfg.data.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

/// Every field in canonical `key = value` form, sorted by key.
inline io::KeyValues config_snapshot(const TrainingConfig& cfg) {
  io::KeyValues kv;
  for (const auto& [key, field] : detail::config_fields()) kv.set(key, field.get(cfg));
  return kv;
}

inline TrainingConfig config_from_snapshot(const io::KeyValues& kv, const std::string& origin) {
  TrainingConfig cfg;
  apply_config(cfg, kv, origin);
  cfg.data.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

}  // namespace tempseg
