// SPDX-License-Identifier: Apache-2.0
//
// File formats.
//
// SPCL point clouds (little-endian):
//   char[4] "SPCL" | u32 version (=1) | u64 count | count x { f32 x,y,z, f32 r,g,b }
//
// NPY tensors follow the numpy .npy v1.0 layout: "\x93NUMPY", u8 major, u8 minor,
// u16 header length, ASCII dict header padded to 64 bytes, then raw data in C order.
// Only '<f4' and '|u1' dtypes are produced or accepted.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "scenemem/geometry.hpp"
#include "scenemem/image.hpp"

namespace scenemem {

/// Thrown on malformed or truncated input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kSpclVersion = 1;

void write_spcl(std::ostream& out, const PointCloud& cloud);
PointCloud read_spcl(std::istream& in);
void write_spcl(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_spcl(const std::filesystem::path& path);
std::string encode_spcl(const PointCloud& cloud);

/// ASCII PLY with float x,y,z and uchar red,green,blue.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

/// 8-bit RGB (channels == 3) or grayscale (channels == 1) PNG; values clamped to [0,1].
std::string encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// 1-bit grayscale PNG.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& values);
void write_npy(const std::filesystem::path& path, const Image& image);
NpyArray read_npy(const std::filesystem::path& path);

}  // namespace scenemem
