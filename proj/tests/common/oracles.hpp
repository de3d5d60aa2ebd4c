// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit and acceptance
// tests. They share no code paths with the library beyond the value types.

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "scenemem/gen/flow.hpp"
#include "scenemem/retrieval.hpp"

namespace scenemem::oracle {

using Key = std::tuple<long, long, long>;

inline std::set<Key> key_set(const PointCloud& c, double d) {
  std::set<Key> s;
  for (const Vec3& p : c.positions) {
    s.emplace(static_cast<long>(std::floor(p.x() / d)), static_cast<long>(std::floor(p.y() / d)),
              static_cast<long>(std::floor(p.z() / d)));
  }
  return s;
}

inline double set_iou(const PointCloud& a, const PointCloud& b, double d) {
  const auto sa = key_set(a, d), sb = key_set(b, d);
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const Key& k : sa) inter += sb.count(k);
  return double(inter) / double(sa.size() + sb.size() - inter);
}

/// Scores every (target, candidate) pair, then applies the probing rule.
inline std::vector<int> brute_force_retrieve(const std::vector<ViewCloud>& targets,
                                             const std::vector<ViewCloud>& cands, const RetrievalConfig& cfg) {
  std::vector<std::vector<double>> score(targets.size(), std::vector<double>(cands.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const Pose y_to_x = compose(invert(targets[t].pose), cands[c].pose);
      score[t][c] = set_iou(targets[t].cloud, transform_cloud(cands[c].cloud, y_to_x), cfg.iou_cube_side);
    }
  }
  std::vector<int> out;
  for (std::size_t t = 0; t < targets.size(); t += static_cast<std::size_t>(cfg.stride)) {
    int best = -1;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const bool better = best < 0 ? score[t][c] > 0
                                   : score[t][c] > score[t][best] ||
                                         (score[t][c] == score[t][best] && cands[c].id < cands[best].id);
      if (better) best = static_cast<int>(c);
    }
    if (best < 0 || !(score[t][best] > cfg.epsilon)) continue;
    const int id = cands[best].id;
    if (std::find(out.begin(), out.end(), id) == out.end() && static_cast<int>(out.size()) < cfg.max_refs) {
      out.push_back(id);
    }
  }
  return out;
}

struct GradCheck {
  double worst_rel = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Central differences of the fixed-noise flow loss against the analytic
/// gradients, one relative error per tensor: |num - ana| / max(|num|, |ana|, floor).
/// The floor covers tensors whose true gradient is zero, such as attention key biases.
inline GradCheck finite_difference_check(gen::Model& model, const gen::Conditioning& cond, const gen::Mat& target,
                                         const gen::Mat& noise, double t, double h = 1e-5, double floor = 1e-6) {
  gen::ModelCache cache;
  const gen::LossResult r = gen::fm_loss_at(model, cond, target, noise, t, &cache);
  model.params().zero_grad();
  model.backward(gen::fm_loss_grad(r), cache);
  GradCheck out;
  for (const auto& p : model.params().all()) {
    gen::Mat num(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      const double lp = gen::fm_loss_at(model, cond, target, noise, t).loss;
      p->value.data()[i] = orig - h;
      const double lm = gen::fm_loss_at(model, cond, target, noise, t).loss;
      p->value.data()[i] = orig;
      num.data()[i] = (lp - lm) / (2 * h);
    }
    const double rel = (num - p->grad).norm() / std::max({num.norm(), p->grad.norm(), floor});
    out.checked += static_cast<std::size_t>(p->value.size());
    if (rel > out.worst_rel) {
      out.worst_rel = rel;
      out.worst_name = p->name;
    }
  }
  return out;
}

/// The miniature configuration for gradient checks: D = 8, two blocks.
inline gen::ModelConfig tiny_model_config() {
  gen::ModelConfig mc;
  mc.tokenizer = {4, 2, false, 8, 8};
  mc.blocks = 2;
  mc.control_every = 2;
  mc.dim = 8;
  mc.heads = 2;
  mc.lora_rank = 2;
  mc.lora_alpha = 2;
  mc.text_len = 2;
  mc.max_frames = 4;
  return mc;
}

/// Randomises the zero-initialised tensors (projectors, LoRA B) so that every
/// gradient path is exercised.
inline void randomise_zero_params(gen::Model& m, uint64_t seed, double stddev = 0.3) {
  std::mt19937_64 rng(seed);
  for (const auto& p : m.params().all()) {
    if (p->value.isZero(0)) gen::init_normal(p->value, stddev, rng);
  }
}

}  // namespace scenemem::oracle
