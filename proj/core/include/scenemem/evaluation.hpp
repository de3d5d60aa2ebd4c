// SPDX-License-Identifier: Apache-2.0
//
// Image metrics and the memory benchmark harnesses: closed-loop revisits,
// long-horizon out-and-back runs and the voxel density sweep.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scenemem/clip_generator.hpp"
#include "scenemem/image.hpp"
#include "scenemem/scene_synth.hpp"
#include "scenemem/session.hpp"

namespace scenemem {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels, capped at kPsnrCap. Throws std::invalid_argument on shape mismatch.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over every window x window placement and channel (C1 = 1e-4, C2 = 9e-4).
double ssim(const Image& a, const Image& b, int window = 8);

struct MatchParams {
  int patch = 16;
  int radius = 24;
  double tau = 0.8;
  void validate() const;
};

/// Grid patches of `first` searched in `last` within +-radius by normalised
/// cross-correlation; a patch matches when its best score reaches tau. The
/// count is divided by the number of self-matches of `first` (zero-variance
/// patches never match). Returns 0 when `first` has no self-match.
double match_accuracy(const Image& first, const Image& last, const MatchParams& params = {});

struct MetricsRecord {
  double psnr_c = 0.0;
  double ssim_c = 0.0;
  double match_acc = 0.0;
  int clip_count = 0;
  std::string generator;
  uint64_t seed = 0;
  std::string config;  // JSON snapshot
};

/// Scene, start pose and sweep drawn deterministically from one seed.
struct Scenario {
  uint64_t seed = 0;
  uint64_t scene_seed = 0;
  SceneParams scene;
  Pose start;
  SweepParams sweep;
  Intrinsics intrinsics;
};

Scenario make_scenario(uint64_t seed, const SceneParams& params, const Intrinsics& intr);
Session scenario_session(const Scenario& sc, const SessionConfig& cfg);

/// Runs one step per clip of `traj` (the instruction describes each clip's
/// motion) and scores the last archived frame against the first.
MetricsRecord closed_loop_eval(Session& session, const Trajectory& traj, const ClipGenerator& generator,
                               const MatchParams& match = {});

/// Out-and-back pairs; one record per completed pair (clip counts 2, 4, ...).
/// Throws std::invalid_argument unless n_clips is even and positive.
std::vector<MetricsRecord> long_horizon_eval(Session& session, const Scenario& sc, int n_clips,
                                             const ClipGenerator& generator, const MatchParams& match = {});

struct DensityRow {
  double cube_side = 0.0;
  double psnr = 0.0;  // mean over views
  std::size_t points = 0;
};

/// Downsamples `cloud` at each cube side, renders it at the views and scores
/// against the ground-truth images. Throws std::invalid_argument unless the
/// sides are positive and strictly ascending.
std::vector<DensityRow> density_sweep(const PointCloud& cloud, std::span<const double> cube_sides,
                                      std::span<const CameraView> views, std::span<const Image> gt,
                                      int splat_radius = kDefaultSplatRadius);

/// density_sweep on one scenario: the cloud is back-projected from a static
/// out-and-back sweep of nine frames and scored at four poses between them.
std::vector<DensityRow> scenario_density(const Scenario& sc, std::span<const double> cube_sides,
                                         int splat_radius = kDefaultSplatRadius);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows);
void write_metrics_json(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows);
void write_density_csv(const std::filesystem::path& path, const std::vector<DensityRow>& rows);

}  // namespace scenemem
