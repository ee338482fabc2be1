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

// File plumbing: atomic writes, 8-bit PNG via libpng, and the flat
// `key = value` text format used by configs and manifests.

#pragma once

#include <png.h>
#include <unistd.h>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/errors.hpp"

namespace tempseg::io {

namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream oss;
  oss << in.rdbuf();
  if (in.bad()) throw IoError(path, "read failed");
  return oss.str();
}

/// Writes to a sibling temp file then renames, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError(target.parent_path().string(), "cannot create directory: " + ec.message());
  }
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError(tmp, "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError(path, "rename failed: " + ec.message());
}

// ---------------------------------------------------------------------------
// PNG

struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

namespace detail {

struct ReadCursor {
  const std::string* bytes;
  std::size_t pos;
};

inline void png_append(png_structp p, png_bytep data, png_size_t len) {
  static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<char*>(data), len);
}

inline void png_consume(png_structp p, png_bytep data, png_size_t len) {
  auto* c = static_cast<ReadCursor*>(png_get_io_ptr(p));
  if (c->pos + len > c->bytes->size()) png_error(p, "truncated PNG data");
  std::memcpy(data, c->bytes->data() + c->pos, len);
  c->pos += len;
}

inline void png_quiet(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; everything with a destructor lives
// outside the setjmp scope.
inline bool png_write_raw(const Raster& img, std::string& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_quiet);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

// Returns nullptr on success, otherwise a static description.
inline const char* png_read_raw(ReadCursor& cursor, Raster& img) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_quiet);
  png_infop info = png_create_info_struct(png);
  const char* volatile failure = "corrupt PNG data";
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return failure;
  }
  png_set_read_fn(png, &cursor, png_consume);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 ||
      (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    failure = "only 8-bit gray or RGB PNGs are supported";
    png_error(png, "unsupported format");
  }
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return nullptr;
}

}  // namespace detail

inline std::string encode_png(const Raster& img) {
  TEMPSEG_REQUIRE(img.channels == 1 || img.channels == 3, "unsupported channel count ", img.channels);
  TEMPSEG_REQUIRE(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
                  "pixel buffer size mismatch");
  std::string out;
  if (!detail::png_write_raw(img, out)) throw std::runtime_error("PNG encoding failed");
  return out;
}

inline Raster decode_png(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw IoError(origin, "not a PNG file");
  Raster img;
  detail::ReadCursor cursor{&bytes, 0};
  if (const char* err = detail::png_read_raw(cursor, img)) throw IoError(origin, err);
  return img;
}

// ---------------------------------------------------------------------------
// Flat key/value text: one `key = value` per line, '#' starts a comment.

class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
      const std::string key = trim(trimmed.substr(0, eq));
      if (key.empty()) throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
      kv.set(key, trim(trimmed.substr(eq + 1)));
    }
    return kv;
  }
  static KeyValues load(const std::string& path) { return parse(read_file(path), path); }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  template <typename V>
  void set_number(const std::string& key, V v) {
    std::ostringstream oss;
    oss.precision(17);
    oss << v;
    values_[key] = oss.str();
  }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("missing key `" + key + "`");
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get(key)); }
  long long get_int(const std::string& key) const { return to_int(key, get(key)); }
  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("key `" + key + "`: expected boolean, got `" + v + "`");
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ValidationError(key_prefix(key) + "expected number, got `" + v + "`");
  }
  static long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw ValidationError(key_prefix(key) + "expected integer, got `" + v + "`");
    return out;
  }

 private:
  static std::string key_prefix(const std::string& key) { return key.empty() ? "" : "key `" + key + "`: "; }
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

/// Deterministic fixed-precision formatting for logs and CSVs.
inline std::string fmt_double(double v, int precision = 9) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

/// Shortest text that parses back to exactly `v`.
inline std::string shortest_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace tempseg::io
