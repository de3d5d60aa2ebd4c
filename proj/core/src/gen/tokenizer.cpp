// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/tokenizer.hpp"

#include <cmath>
#include <stdexcept>

namespace scenemem::gen {

void TokenizerConfig::validate() const {
  if (patch < 1) throw std::invalid_argument("tokenizer: patch must be >= 1");
  if (!identity && (coeffs < 1 || coeffs > patch)) throw std::invalid_argument("tokenizer: coeffs must be in [1, patch]");
  if (width < patch || height < patch || width % patch != 0 || height % patch != 0) {
    throw std::invalid_argument("tokenizer: frame size must be a multiple of the patch size");
  }
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift)) {
    throw std::invalid_argument("tokenizer: scale must be positive and shift finite");
  }
}

Tokenizer::Tokenizer(const TokenizerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int p = cfg_.patch, k = cfg_.identity ? p : cfg_.coeffs;
  basis_.resize(k, p);
  for (int u = 0; u < k; ++u) {
    const double a = u == 0 ? std::sqrt(1.0 / p) : std::sqrt(2.0 / p);
    for (int x = 0; x < p; ++x) basis_(u, x) = a * std::cos(M_PI * (x + 0.5) * u / p);
  }
}

Mat Tokenizer::tokenize(const Image& frame) const { return tokenize(std::span<const Image>(&frame, 1)); }

Mat Tokenizer::tokenize(std::span<const Image> frames) const {
  const int p = cfg_.patch, gw = cfg_.width / p, gh = cfg_.height / p;
  const int per = cfg_.tokens_per_frame(), c = cfg_.channels(), kk = c / 3;
  Mat out(static_cast<Eigen::Index>(frames.size()) * per, c);
  Mat patch(p, p);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Image& img = frames[f];
    if (img.width != cfg_.width || img.height != cfg_.height || img.channels != 3) {
      throw std::invalid_argument("tokenize: frame does not match tokenizer geometry");
    }
    for (int ty = 0; ty < gh; ++ty) {
      for (int tx = 0; tx < gw; ++tx) {
        const Eigen::Index row = static_cast<Eigen::Index>(f) * per + ty * gw + tx;
        for (int ch = 0; ch < 3; ++ch) {
          for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) patch(y, x) = img.at(tx * p + x, ty * p + y, ch);
          }
          if (cfg_.identity) {
            out.row(row).segment(ch * kk, kk) =
                (Eigen::Map<const RowVec>(patch.data(), kk).array() - cfg_.shift) * cfg_.scale;
          } else {
            Mat coef = (basis_ * patch * basis_.transpose()) / double(p);
            coef(0, 0) -= cfg_.shift;
            out.row(row).segment(ch * kk, kk) = Eigen::Map<const RowVec>(coef.data(), kk) * cfg_.scale;
          }
        }
      }
    }
  }
  return out;
}

std::vector<Image> Tokenizer::detokenize(const Mat& tokens) const {
  const int p = cfg_.patch, gw = cfg_.width / p, gh = cfg_.height / p;
  const int per = cfg_.tokens_per_frame(), c = cfg_.channels(), kk = c / 3;
  const int k = cfg_.identity ? p : cfg_.coeffs;
  if (tokens.cols() != c || tokens.rows() % per != 0) throw std::invalid_argument("detokenize: token shape mismatch");
  std::vector<Image> frames;
  for (Eigen::Index f = 0; f < tokens.rows() / per; ++f) {
    Image img(cfg_.width, cfg_.height, 3);
    for (int ty = 0; ty < gh; ++ty) {
      for (int tx = 0; tx < gw; ++tx) {
        const Eigen::Index row = f * per + ty * gw + tx;
        for (int ch = 0; ch < 3; ++ch) {
          Mat patch;
          const RowVec seg = tokens.row(row).segment(ch * kk, kk) / cfg_.scale;
          if (cfg_.identity) {
            patch = Eigen::Map<const Mat>(seg.data(), p, p).array() + cfg_.shift;
          } else {
            Mat coef = Eigen::Map<const Mat>(seg.data(), k, k);
            coef(0, 0) += cfg_.shift;
            coef *= double(p);
            patch = basis_.transpose() * coef * basis_;
          }
          for (int y = 0; y < p; ++y) {
            for (int x = 0; x < p; ++x) img.at(tx * p + x, ty * p + y, ch) = static_cast<float>(patch(y, x));
          }
        }
      }
    }
    frames.push_back(std::move(img));
  }
  return frames;
}

}  // namespace scenemem::gen
