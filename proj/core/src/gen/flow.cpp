// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace scenemem::gen {

FlowState interpolate(const Mat& target, const Mat& noise, double t) {
  if (target.rows() != noise.rows() || target.cols() != noise.cols()) {
    throw std::invalid_argument("interpolate: noise and target shapes differ");
  }
  FlowState s;
  s.t = t;
  s.x0 = noise;
  // Endpoints are special-cased so that x_0 and X_T come back bit-exactly.
  if (t == 0.0) {
    s.xt = noise;
  } else if (t == 1.0) {
    s.xt = target;
  } else {
    s.xt = (1.0 - t) * noise + t * target;
  }
  s.ut = target - noise;
  return s;
}

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Mat m(rows, cols);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double sample_logit_normal(std::mt19937_64& rng, double mu, double sigma) {
  const double z = std::normal_distribution<double>(mu, sigma)(rng);
  return 1.0 / (1.0 + std::exp(-z));
}

LossResult fm_loss_at(const Model& model, const Conditioning& cond, const Mat& target, const Mat& noise, double t,
                      ModelCache* cache) {
  LossResult r;
  r.state = interpolate(target, noise, t);
  r.v = model.forward(cond, r.state.xt, t, cache);
  r.loss = (r.v - r.state.ut).squaredNorm() / static_cast<double>(r.v.size());
  return r;
}

LossResult fm_loss(const Model& model, const Conditioning& cond, const Mat& target, std::mt19937_64& rng,
                   ModelCache* cache) {
  const double t = sample_logit_normal(rng);
  const Mat noise = standard_normal(target.rows(), target.cols(), rng);
  return fm_loss_at(model, cond, target, noise, t, cache);
}

Mat fm_loss_grad(const LossResult& r) { return (2.0 / static_cast<double>(r.v.size())) * (r.v - r.state.ut); }

void AugmentSchedule::validate() const {
  if (total < 1 || lo < 0 || hi < lo || hi > total) {
    throw std::invalid_argument("augment schedule: need 0 <= lo <= hi <= total");
  }
}

double AugmentSchedule::mean_sigma() const {
  return 0.5 * (lo + hi) / static_cast<double>(total);
}

double AugmentSchedule::mean_sigma_sq() const {
  double s = 0;
  for (int k = lo; k <= hi; ++k) s += double(k) * k;
  return s / (hi - lo + 1) / (double(total) * total);
}

Mat augment_preceding(const Mat& preceding, const AugmentSchedule& schedule, std::mt19937_64& rng) {
  schedule.validate();
  const int k = std::uniform_int_distribution<int>(schedule.lo, schedule.hi)(rng);
  if (k == 0) return preceding;
  const double sigma = double(k) / schedule.total;
  const Mat eps = standard_normal(preceding.rows(), preceding.cols(), rng);
  if (k == schedule.total) return eps;
  return (1.0 - sigma) * preceding + sigma * eps;
}

Mat euler_sample(const VelocityFn& velocity, const Mat& x0, int steps) {
  if (steps < 1) throw std::invalid_argument("euler_sample: steps must be >= 1");
  Mat x = x0;
  const double dt = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = double(i) / steps;
    x += dt * velocity(x, t);
    if (!x.allFinite()) throw std::runtime_error("euler_sample: non-finite state");
  }
  return x;
}

VelocityFn model_velocity(const Model& model, const Conditioning& cond) {
  return [&model, cond](const Mat& x, double t) { return model.forward(cond, x, t); };
}

VelocityFn oracle_velocity(const Mat& target) {
  return [target](const Mat& x, double t) -> Mat { return (target - x) / (1.0 - t); };
}

}  // namespace scenemem::gen
