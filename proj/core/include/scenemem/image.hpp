// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "scenemem/geometry.hpp"

namespace scenemem {

/// Interleaved float image, row-major, (y, x, channel).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 0 || h < 0 || c <= 0) throw std::invalid_argument("Image: bad dimensions");
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  Color rgb(int x, int y) const {
    const std::size_t i = index(x, y);
    return Color(data[i], data[i + 1], data[i + 2]);
  }
  void set_rgb(int x, int y, const Color& c) {
    const std::size_t i = index(x, y);
    data[i] = c.x();
    data[i + 1] = c.y();
    data[i + 2] = c.z();
  }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

/// Per-pixel boolean plane.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (uint8_t v : data) n += v != 0;
    return n;
  }
  bool operator==(const Mask&) const = default;
};

}  // namespace scenemem
