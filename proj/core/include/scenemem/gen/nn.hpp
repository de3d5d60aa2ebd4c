// SPDX-License-Identifier: Apache-2.0
//
// Transformer layers with hand-written backward passes. Layers hold pointers
// into a ParamStore; per-call activations live in explicit cache structs so
// forward passes over a fixed parameter set are reentrant.

#pragma once

#include <string>
#include <vector>

#include "scenemem/gen/params.hpp"

namespace scenemem::gen {

struct LinearCache {
  Mat x;
  Mat xa;  // x * A when a LoRA adapter is attached
};

/// y = x W + b (+ scale * x A B). W is in x out; LoRA B starts at zero.
struct Linear {
  Param* w = nullptr;
  Param* b = nullptr;
  Param* lora_a = nullptr;
  Param* lora_b = nullptr;
  double lora_scale = 0.0;

  static Linear create(ParamStore& store, const std::string& name, ParamGroup group, int in, int out);
  void init(std::mt19937_64& rng, double stddev);
  void attach_lora(ParamStore& store, const std::string& name, int rank, double alpha, std::mt19937_64& rng);

  int in_dim() const { return static_cast<int>(w->value.rows()); }
  int out_dim() const { return static_cast<int>(w->value.cols()); }

  Mat forward(const Mat& x, LinearCache* cache) const;
  Mat backward(const Mat& dy, const LinearCache& cache) const;
};

struct LayerNormCache {
  Mat y;
  Eigen::VectorXd inv_std;
};

/// Per-token normalisation without affine parameters.
Mat layer_norm(const Mat& x, LayerNormCache* cache);
Mat layer_norm_backward(const Mat& dy, const LayerNormCache& cache);

double gelu(double x);
double gelu_grad(double x);

struct AttentionCache {
  LinearCache q, k, v, o;
  Mat Q, K, V, concat;
  std::vector<Mat> probs;  // per head, Lq x Lk
};

/// Multi-head attention; self-attention passes the same matrix as query and context.
struct Attention {
  Linear q, k, v, o;
  int heads = 1;

  static Attention create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int heads);
  Mat forward(const Mat& xq, const Mat& xkv, AttentionCache* cache) const;
  /// Returns the query-side gradient; the context-side gradient is added to dxkv.
  Mat backward(const Mat& dy, const AttentionCache& cache, Mat& dxkv) const;
};

struct FeedForwardCache {
  LinearCache l1, l2;
  Mat pre;
};

struct FeedForward {
  Linear l1, l2;

  static FeedForward create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int hidden);
  Mat forward(const Mat& x, FeedForwardCache* cache) const;
  Mat backward(const Mat& dy, const FeedForwardCache& cache) const;
};

struct BlockCache {
  LayerNormCache ln1, ln2, ln3;
  AttentionCache sa, ca;
  FeedForwardCache ff;
};

/// h += SA(LN h); h += CA(LN h, text); h += FFN(LN h).
struct Block {
  Attention self_attn, cross_attn;
  FeedForward ffn;

  static Block create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int heads, int hidden);
  void init(std::mt19937_64& rng, int dim);
  void attach_lora(ParamStore& store, const std::string& name, int rank, double alpha, std::mt19937_64& rng);
  std::vector<Linear*> linears();
  std::vector<const Linear*> linears() const;

  Mat forward(const Mat& h, const Mat& text, BlockCache* cache) const;
  /// Returns dh; the text gradient is added to dtext.
  Mat backward(const Mat& dy, const BlockCache& cache, Mat& dtext) const;
};

/// Copies W and b of every linear map (adapters untouched).
void copy_block_weights(const Block& from, Block& to);

}  // namespace scenemem::gen
