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

#pragma once

#include <cstdint>
#include <vector>

#include "tempseg/errors.hpp"

namespace tempseg {

/// Per-pixel class ids; kIgnore marks unlabeled pixels.
struct LabelMap {
  static constexpr std::uint8_t kIgnore = 255;

  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> ids;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), ids(static_cast<std::size_t>(h) * w, fill) {}
  LabelMap(int h, int w, std::vector<std::uint8_t> values) : height(h), width(w), ids(std::move(values)) {
    TEMPSEG_REQUIRE(ids.size() == static_cast<std::size_t>(h) * w, "label count ", ids.size(),
                    " does not match ", h, "x", w);
  }

  std::size_t size() const { return ids.size(); }
  std::uint8_t& at(int y, int x) { return ids[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return ids[static_cast<std::size_t>(y) * width + x]; }

  /// Throws ValidationError when an id is neither < classes nor kIgnore.
  void validate(int classes) const {
    for (std::uint8_t v : ids)
      TEMPSEG_VALIDATE(v < classes || v == kIgnore, "label id ", int(v), " out of range for ",
                       classes, " classes");
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

}  // namespace tempseg
