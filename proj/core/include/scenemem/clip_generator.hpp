// SPDX-License-Identifier: Apache-2.0
//
// The per-step clip generator seen by the session loop, with a ground-truth
// oracle implementation and a flow-model implementation carrying ablation flags.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scenemem/gen/model.hpp"
#include "scenemem/gen/tokenizer.hpp"
#include "scenemem/image.hpp"
#include "scenemem/renderer.hpp"
#include "scenemem/scene_synth.hpp"

namespace scenemem {

struct ClipRequest {
  std::vector<Image> refs;
  std::vector<Image> preceding;
  ProjectionVideo projection;            // one per target camera
  ProjectionVideo preceding_projection;  // memory rendered at the preceding frames' poses
  Trajectory cameras;
  int instruction = 0;
  uint64_t seed = 0;
  /// Scene time of the first generated frame, and frame spacing.
  double start_time = 0.0;
  double frame_dt = 0.1;
};

class ClipGenerator {
 public:
  virtual ~ClipGenerator() = default;
  /// One frame per camera. Implementations throw std::runtime_error on failure.
  virtual std::vector<Image> generate(const ClipRequest& req) const = 0;
  virtual std::string name() const = 0;
};

/// Renders the true scene at the requested cameras.
class OracleGenerator final : public ClipGenerator {
 public:
  explicit OracleGenerator(SceneSpec scene) : scene_(std::move(scene)) {}
  std::vector<Image> generate(const ClipRequest& req) const override;
  std::string name() const override { return "oracle"; }

 private:
  SceneSpec scene_;
};

struct FlowOptions {
  bool use_refs = true;
  bool use_scene = true;
  int steps = 20;
  int max_refs = 3;
};

/// Samples the flow model; ablation flags drop the reference or scene conditions.
class FlowGenerator final : public ClipGenerator {
 public:
  FlowGenerator(std::shared_ptr<const gen::Model> model, FlowOptions opts);
  std::vector<Image> generate(const ClipRequest& req) const override;
  std::string name() const override;

  const FlowOptions& options() const { return opts_; }

 private:
  std::shared_ptr<const gen::Model> model_;
  gen::Tokenizer tok_;
  FlowOptions opts_;
};

}  // namespace scenemem
