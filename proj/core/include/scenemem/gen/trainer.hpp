// SPDX-License-Identifier: Apache-2.0
//
// Staged training: backbone pretraining (stand-in for pretrained weights),
// ControlNet-only training, then LoRA-only fine-tuning. AdamW throughout.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scenemem/gen/flow.hpp"
#include "scenemem/gen/model.hpp"
#include "scenemem/gen/tokenizer.hpp"
#include "scenemem/scene_synth.hpp"

namespace scenemem::gen {

/// One tokenized training sample.
struct Example {
  Mat target;
  Mat preceding;
  Mat scene_p;
  Mat scene_t;
  Mat refs;
  int instruction = 0;
};

/// Tokenizes frames and projections of an assembled sample; at most max_refs references are kept.
Example make_example(const TrainingSample& sample, const Tokenizer& tok, int max_refs);

struct DatasetConfig {
  int samples = 64;
  int video_length = 24;
  double fov_deg = 70.0;
  SceneParams scene;
  SampleConfig sample;
  int max_refs = 3;
  uint64_t seed = 1;
};

/// Synthetic rooms with palindromic sweeps, so that candidates revisit target views.
std::vector<Example> build_dataset(const DatasetConfig& cfg, const Tokenizer& tok);

enum class Stage : int { Pretrain = 0, ControlNet = 1, Lora = 2 };
ParamGroup stage_group(Stage s);

struct TrainConfig {
  Stage stage = Stage::ControlNet;
  int steps = 100;
  int batch = 4;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double grad_clip = 1.0;
  /// Condition dropout probabilities.
  double drop_refs = 0.2;
  double drop_scene = 0.2;
  bool augment = true;
  AugmentSchedule augment_schedule;
  /// Copy backbone weights into the ControlNet before a ControlNet stage.
  bool init_control = true;
  double divergence_threshold = 1e3;
  uint64_t seed = 7;

  void validate() const;
};

struct TrainReport {
  std::vector<double> losses;  // per step, mean over the batch
  uint64_t checksum_before[3] = {0, 0, 0};
  uint64_t checksum_after[3] = {0, 0, 0};
};

using StepCallback = std::function<void(int step, double loss)>;

/// Throws std::invalid_argument on an empty dataset and std::runtime_error
/// when the loss exceeds the divergence threshold or turns non-finite.
TrainReport train(Model& model, const std::vector<Example>& data, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

/// Writes losses as "step,loss" CSV.
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses);

/// Flat binary: "SMCK", u32 version, u64 header length, JSON header (model
/// config, tensor table, metadata), then little-endian f32 tensors in table order.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& metadata_json = "{}");
Model load_checkpoint(const std::filesystem::path& path);

inline constexpr uint32_t kCheckpointVersion = 1;

const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

/// A complete training run: model shape, synthetic dataset and the stage schedule.
///   {"model": {...}, "dataset": {"samples", "video_length", "fov_deg", "max_refs",
///    "seed", "fuse_all_candidates", "scene": {...}}, "stages": [{"stage":
///    "pretrain"|"controlnet"|"lora", "steps", "lr", "batch", ...}, ...]}
struct Recipe {
  ModelConfig model;
  DatasetConfig dataset;
  std::vector<TrainConfig> stages;

  void validate() const;
  std::string to_json() const;
  static Recipe from_json(const std::string& text);
  /// The small configuration used for the ablation benchmarks: 32x32 frames,
  /// 8-pixel patches, four blocks. Trains in about half an hour on one CPU core.
  static Recipe toy();
};

struct RecipeResult {
  Model model;
  std::vector<TrainReport> reports;  // one per stage
};

using StageCallback = std::function<void(int stage, int step, double loss)>;
RecipeResult run_recipe(const Recipe& recipe, const StageCallback& on_step = {});

}  // namespace scenemem::gen
