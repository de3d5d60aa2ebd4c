// SPDX-License-Identifier: Apache-2.0
//
// Rectified-flow training objective, preceding-latent augmentation and the
// Euler sampler.

#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "scenemem/gen/model.hpp"

namespace scenemem::gen {

struct FlowState {
  double t = 0.0;
  Mat x0;  // noise
  Mat xt;  // (1 - t) x0 + t X_T
  Mat ut;  // X_T - x0
};

FlowState interpolate(const Mat& target, const Mat& noise, double t);

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
/// sigmoid(N(mu, sigma)).
double sample_logit_normal(std::mt19937_64& rng, double mu = 0.0, double sigma = 1.0);

struct LossResult {
  double loss = 0.0;
  FlowState state;
  Mat v;
};

/// Mean over elements of (v_t - u_t)^2 for one sample; t and x0 drawn from rng.
LossResult fm_loss(const Model& model, const Conditioning& cond, const Mat& target, std::mt19937_64& rng,
                   ModelCache* cache = nullptr);
/// Same, with fixed t and noise.
LossResult fm_loss_at(const Model& model, const Conditioning& cond, const Mat& target, const Mat& noise, double t,
                      ModelCache* cache = nullptr);
/// Gradient of the loss with respect to v.
Mat fm_loss_grad(const LossResult& r);

/// Low-noise augmentation of preceding latents on the training scheduler:
/// sigma = k / total with integer k uniform in [lo, hi], X~ = (1 - sigma) X + sigma eps.
struct AugmentSchedule {
  int lo = 0;
  int hi = 50;
  int total = 1000;

  void validate() const;
  /// E[sigma] and E[sigma^2] under the schedule.
  double mean_sigma() const;
  double mean_sigma_sq() const;
};

Mat augment_preceding(const Mat& preceding, const AugmentSchedule& schedule, std::mt19937_64& rng);

/// Velocity field used by the sampler.
using VelocityFn = std::function<Mat(const Mat& x, double t)>;

/// Euler integration of dx/dt = v(x, t) from t = 0 to t = 1. Throws
/// std::invalid_argument for steps < 1 and std::runtime_error on non-finite state.
Mat euler_sample(const VelocityFn& velocity, const Mat& x0, int steps);

/// Velocity field of the model under fixed conditioning.
VelocityFn model_velocity(const Model& model, const Conditioning& cond);

/// Exact field of the straight path to `target`: (target - x) / (1 - t).
VelocityFn oracle_velocity(const Mat& target);

}  // namespace scenemem::gen
