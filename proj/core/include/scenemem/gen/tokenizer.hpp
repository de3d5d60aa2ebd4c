// SPDX-License-Identifier: Apache-2.0
//
// Fixed patch tokenizer: each p x p patch of each channel is mapped through an
// orthonormal 2D DCT and the lowest k x k coefficients are kept (scaled by 1/p
// so that the DC term equals the patch mean). Identity mode keeps raw pixels.
// Latents are then normalised: the DC term (or every raw pixel) is shifted by
// `shift`, and everything is multiplied by `scale`, so that the flow noise and
// the data live on comparable scales.

#pragma once

#include <span>
#include <vector>

#include "scenemem/gen/params.hpp"
#include "scenemem/image.hpp"

namespace scenemem::gen {

struct TokenizerConfig {
  int patch = 16;
  /// Kept DCT coefficients per axis, 1..patch. Ignored in identity mode.
  int coeffs = 4;
  bool identity = false;
  int width = 128;
  int height = 128;
  double shift = 0.0;
  double scale = 1.0;

  /// Throws std::invalid_argument if the frame is not divisible into patches.
  void validate() const;
  int tokens_per_frame() const { return (width / patch) * (height / patch); }
  int channels() const { return 3 * (identity ? patch * patch : coeffs * coeffs); }
  bool operator==(const TokenizerConfig&) const = default;
};

class Tokenizer {
 public:
  explicit Tokenizer(const TokenizerConfig& cfg);

  const TokenizerConfig& config() const { return cfg_; }

  /// Frames are stacked: rows [f * T, (f + 1) * T) belong to frame f, tokens in raster patch order.
  Mat tokenize(std::span<const Image> frames) const;
  Mat tokenize(const Image& frame) const;
  std::vector<Image> detokenize(const Mat& tokens) const;

 private:
  TokenizerConfig cfg_;
  Mat basis_;  // coeffs x patch rows of the orthonormal DCT-II matrix
};

}  // namespace scenemem::gen
