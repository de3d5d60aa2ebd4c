// SPDX-License-Identifier: Apache-2.0

#include "scenemem/clip_generator.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "scenemem/gen/flow.hpp"

namespace scenemem {

std::vector<Image> OracleGenerator::generate(const ClipRequest& req) const {
  std::vector<Image> out;
  for (std::size_t i = 0; i < req.cameras.size(); ++i) {
    const double t = std::clamp(req.start_time + double(i) * req.frame_dt, 0.0, scene_.duration);
    out.push_back(render_gt(scene_, req.cameras[i].pose, req.cameras[i].intrinsics, t).rgb);
  }
  return out;
}

FlowGenerator::FlowGenerator(std::shared_ptr<const gen::Model> model, FlowOptions opts)
    : model_(std::move(model)), tok_(model_ ? model_->config().tokenizer : gen::TokenizerConfig{}), opts_(opts) {
  if (!model_) throw std::invalid_argument("FlowGenerator: null model");
  if (opts_.steps < 1) throw std::invalid_argument("FlowGenerator: steps must be >= 1");
}

std::string FlowGenerator::name() const {
  if (opts_.use_refs && opts_.use_scene) return "flow-both";
  if (opts_.use_scene) return "flow-scene";
  if (opts_.use_refs) return "flow-refs";
  return "flow-none";
}

std::vector<Image> FlowGenerator::generate(const ClipRequest& req) const {
  if (req.cameras.empty()) throw std::invalid_argument("generate: empty trajectory");
  if (req.projection.size() != req.cameras.size()) throw std::invalid_argument("generate: projection length mismatch");
  const int c = tok_.config().channels();
  gen::Conditioning cond;
  cond.instruction = req.instruction;
  cond.use_scene = opts_.use_scene;

  std::vector<Image> refs;
  if (opts_.use_refs) {
    for (std::size_t i = 0; i < req.refs.size() && static_cast<int>(i) < opts_.max_refs; ++i) refs.push_back(req.refs[i]);
  }
  cond.refs = refs.empty() ? gen::Mat(0, c) : tok_.tokenize(refs);
  cond.preceding = req.preceding.empty() ? gen::Mat(0, c) : tok_.tokenize(req.preceding);
  if (opts_.use_scene) {
    if (req.preceding_projection.size() != req.preceding.size()) {
      throw std::invalid_argument("generate: preceding projection length mismatch");
    }
    std::vector<Image> pre, proj;
    for (const ProjectionImage& p : req.preceding_projection) pre.push_back(p.rgb);
    for (const ProjectionImage& p : req.projection) proj.push_back(p.rgb);
    cond.scene_p = pre.empty() ? gen::Mat(0, c) : tok_.tokenize(pre);
    cond.scene_t = tok_.tokenize(proj);
  }
  std::mt19937_64 rng(req.seed);
  const gen::Mat x0 = gen::standard_normal(static_cast<Eigen::Index>(req.cameras.size()) * tok_.config().tokens_per_frame(),
                                           c, rng);
  const gen::Mat x = gen::euler_sample(gen::model_velocity(*model_, cond), x0, opts_.steps);
  std::vector<Image> frames = tok_.detokenize(x);
  for (Image& f : frames) {
    for (float& v : f.data) v = std::clamp(v, 0.0f, 1.0f);
  }
  return frames;
}

}  // namespace scenemem
