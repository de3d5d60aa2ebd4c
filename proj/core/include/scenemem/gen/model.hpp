// SPDX-License-Identifier: Apache-2.0
//
// Conditional velocity network. The main stream holds reference, preceding and
// noisy-target tokens; a parallel ControlNet stream holds the scene-projection
// tokens for the preceding and target frames. Each group of main blocks has one
// ControlNet block running beside its first main block; that block's output
// is projected and added to the preceding and target rows before the rest of
// the group. Reference rows receive no fusion.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenemem/gen/nn.hpp"
#include "scenemem/gen/params.hpp"
#include "scenemem/gen/tokenizer.hpp"

namespace scenemem::gen {

struct ModelConfig {
  TokenizerConfig tokenizer;
  int blocks = 8;
  /// Main blocks per ControlNet block.
  int control_every = 4;
  int dim = 64;
  int heads = 4;
  int ffn_mult = 4;
  bool lora = true;
  int lora_rank = 8;
  double lora_alpha = 8.0;
  int text_vocab = 16;
  int text_len = 4;
  /// Size of the temporal embedding table; preceding + target frames must fit.
  int max_frames = 32;
  uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  int groups() const { return blocks / control_every; }
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// Conditioning tokens for one sample. Row counts are multiples of the
/// per-frame token count; scene_p / scene_t align row-for-row with the
/// preceding / target rows.
struct Conditioning {
  Mat refs;
  Mat preceding;
  Mat scene_p;
  Mat scene_t;
  bool use_scene = true;
  int instruction = 0;
};

enum Segment : int { kSegRef = 0, kSegPreceding = 1, kSegTarget = 2, kSegScenePreceding = 3, kSegSceneTarget = 4 };

struct ModelCache {
  int n_ref = 0, n_pre = 0, n_tgt = 0;
  bool use_scene = false;
  int instruction = 0;
  Mat text;
  Eigen::VectorXd time_in;
  LinearCache time1, time2;
  Mat time_pre;
  LinearCache in_proj, cn_in;
  std::vector<BlockCache> main, control;
  std::vector<LinearCache> proj;
  LayerNormCache final_ln;
  LinearCache head;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Velocity for the target rows. Throws std::invalid_argument on shape
  /// mismatch and std::runtime_error on non-finite output.
  Mat forward(const Conditioning& cond, const Mat& x_t, double t, ModelCache* cache = nullptr) const;
  /// Accumulates parameter gradients of <dv, v>.
  void backward(const Mat& dv, const ModelCache& cache);

  /// text_len x dim instruction tokens. Throws std::out_of_range for id outside the vocabulary.
  Mat embed_instruction(int id) const;

  /// Copies each group's first main block into its ControlNet block and the
  /// input embedding into the scene embedding.
  void init_controlnet_from_backbone();
  /// Only parameters of `group` accumulate gradients.
  void set_trainable(ParamGroup group);
  void set_all_trainable();

  /// Sinusoidal features of 1000 t.
  static Eigen::VectorXd timestep_features(double t, int dim);

 private:
  void build();
  Mat time_embedding(double t, ModelCache* cache) const;

  ModelConfig cfg_;
  ParamStore store_;
  Linear time1_, time2_, in_proj_, cn_in_, head_;
  Param* pos_ = nullptr;
  Param* temporal_ = nullptr;
  Param* seg_video_ = nullptr;
  Param* seg_scene_ = nullptr;
  Param* text_table_ = nullptr;
  std::vector<Block> main_, control_;
  std::vector<Linear> proj_;
};

}  // namespace scenemem::gen
