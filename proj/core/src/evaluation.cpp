// SPDX-License-Identifier: Apache-2.0

#include "scenemem/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scenemem/renderer.hpp"

namespace scenemem {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.data.empty()) throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

// Mean and centred energy of a patch over all channels.
struct PatchStats {
  double mean = 0;
  double energy = 0;
};

PatchStats patch_stats(const Image& img, int x0, int y0, int p) {
  PatchStats s;
  const int n = p * p * img.channels;
  for (int y = 0; y < p; ++y) {
    for (int x = 0; x < p; ++x) {
      for (int c = 0; c < img.channels; ++c) s.mean += img.at(x0 + x, y0 + y, c);
    }
  }
  s.mean /= n;
  for (int y = 0; y < p; ++y) {
    for (int x = 0; x < p; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const double d = img.at(x0 + x, y0 + y, c) - s.mean;
        s.energy += d * d;
      }
    }
  }
  return s;
}

double ncc(const Image& a, int ax, int ay, const PatchStats& sa, const Image& b, int bx, int by, int p) {
  const PatchStats sb = patch_stats(b, bx, by, p);
  if (sb.energy <= 1e-12) return -1.0;
  double cross = 0;
  for (int y = 0; y < p; ++y) {
    for (int x = 0; x < p; ++x) {
      for (int c = 0; c < a.channels; ++c) {
        cross += (a.at(ax + x, ay + y, c) - sa.mean) * (b.at(bx + x, by + y, c) - sb.mean);
      }
    }
  }
  return cross / std::sqrt(sa.energy * sb.energy);
}

int count_matches(const Image& first, const Image& last, const MatchParams& mp) {
  const int p = mp.patch;
  int matched = 0;
  for (int y0 = 0; y0 + p <= first.height; y0 += p) {
    for (int x0 = 0; x0 + p <= first.width; x0 += p) {
      const PatchStats sa = patch_stats(first, x0, y0, p);
      if (sa.energy <= 1e-12) continue;
      double best = -1.0;
      for (int dy = -mp.radius; dy <= mp.radius && best < mp.tau; ++dy) {
        const int by = y0 + dy;
        if (by < 0 || by + p > last.height) continue;
        for (int dx = -mp.radius; dx <= mp.radius; ++dx) {
          const int bx = x0 + dx;
          if (bx < 0 || bx + p > last.width) continue;
          best = std::max(best, ncc(first, x0, y0, sa, last, bx, by, p));
          if (best >= mp.tau) break;
        }
      }
      if (best >= mp.tau) ++matched;
    }
  }
  return matched;
}

nlohmann::json record_json(const MetricsRecord& r) {
  return {{"psnr_c", r.psnr_c}, {"ssim_c", r.ssim_c},     {"match_acc", r.match_acc},
          {"clip_count", r.clip_count}, {"generator", r.generator}, {"seed", r.seed},
          {"config", r.config.empty() ? nlohmann::json() : nlohmann::json::parse(r.config)}};
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, int window) {
  check_same(a, b, "ssim");
  if (window < 1 || window > a.width || window > a.height) throw std::invalid_argument("ssim: bad window");
  constexpr double c1 = 1e-4, c2 = 9e-4;
  const double n = double(window) * window;
  double total = 0;
  long count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y0 = 0; y0 + window <= a.height; ++y0) {
      for (int x0 = 0; x0 + window <= a.width; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            const double va = a.at(x, y, c), vb = b.at(x, y, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double ma = sa / n, mb = sb / n;
        const double va = std::max(0.0, saa / n - ma * ma), vb = std::max(0.0, sbb / n - mb * mb);
        const double cov = sab / n - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

void MatchParams::validate() const {
  if (patch < 2 || radius < 0 || !(tau > -1 && tau <= 1)) throw std::invalid_argument("match: bad parameters");
}

double match_accuracy(const Image& first, const Image& last, const MatchParams& params) {
  check_same(first, last, "match_accuracy");
  params.validate();
  const int self = count_matches(first, first, params);
  if (self == 0) return 0.0;
  return static_cast<double>(count_matches(first, last, params)) / self;
}

Scenario make_scenario(uint64_t seed, const SceneParams& params, const Intrinsics& intr) {
  std::mt19937_64 rng(seed);
  Scenario sc;
  sc.seed = seed;
  sc.scene_seed = rng();
  sc.scene = params;
  sc.intrinsics = intr;
  const SceneSpec scene = generate_scene(sc.scene_seed, params);
  sc.start = random_start_pose(scene, rng);
  sc.sweep = random_sweep(rng);
  return sc;
}

Session scenario_session(const Scenario& sc, const SessionConfig& cfg) {
  return Session::create_from_scene(sc.scene_seed, sc.scene, sc.start, sc.intrinsics, cfg);
}

MetricsRecord closed_loop_eval(Session& session, const Trajectory& traj, const ClipGenerator& generator,
                               const MatchParams& match) {
  const int n = session.config().clip_len;
  if (traj.empty() || traj.size() % n != 0) throw std::invalid_argument("closed loop: trajectory is not whole clips");
  const int clips = static_cast<int>(traj.size()) / n;
  for (int c = 0; c < clips; ++c) {
    StepRequest req;
    req.trajectory.assign(traj.begin() + c * n, traj.begin() + (c + 1) * n);
    req.instruction = classify_motion(req.trajectory);
    session.step(req, generator);
  }
  MetricsRecord r;
  const Image& first = session.archive().front().rgb;
  const Image& last = session.archive().back().rgb;
  r.psnr_c = psnr(last, first);
  r.ssim_c = ssim(last, first);
  r.match_acc = match_accuracy(first, last, match);
  r.clip_count = session.clip_index();
  r.generator = generator.name();
  r.seed = session.config().seed;
  r.config = session.config().to_json();
  return r;
}

std::vector<MetricsRecord> long_horizon_eval(Session& session, const Scenario& sc, int n_clips,
                                             const ClipGenerator& generator, const MatchParams& match) {
  if (n_clips < 2 || n_clips % 2 != 0) throw std::invalid_argument("long horizon: clip count must be even");
  const int n = session.config().clip_len;
  const Trajectory pair = out_and_back(sc.start, sc.intrinsics, sc.sweep, 2, n);
  std::vector<MetricsRecord> out;
  for (int p = 0; p < n_clips / 2; ++p) {
    MetricsRecord r = closed_loop_eval(session, pair, generator, match);
    r.seed = sc.seed;
    out.push_back(r);
  }
  return out;
}

std::vector<DensityRow> density_sweep(const PointCloud& cloud, std::span<const double> cube_sides,
                                      std::span<const CameraView> views, std::span<const Image> gt,
                                      int splat_radius) {
  if (views.size() != gt.size() || views.empty()) throw std::invalid_argument("density: need one image per view");
  for (std::size_t i = 0; i < cube_sides.size(); ++i) {
    if (!(cube_sides[i] > 0) || (i > 0 && !(cube_sides[i] > cube_sides[i - 1]))) {
      throw std::invalid_argument("density: cube sides must be positive and ascending");
    }
  }
  std::vector<DensityRow> rows;
  for (double d : cube_sides) {
    const PointCloud ds = downsample(cloud, d);
    double total = 0;
    for (std::size_t v = 0; v < views.size(); ++v) {
      total += psnr(render_projection(ds, views[v].pose, views[v].intrinsics, splat_radius).rgb, gt[v]);
    }
    rows.push_back({d, total / views.size(), ds.size()});
  }
  return rows;
}

std::vector<DensityRow> scenario_density(const Scenario& sc, std::span<const double> cube_sides, int splat_radius) {
  const SceneSpec scene = generate_scene(sc.scene_seed, sc.scene);
  const Trajectory sweep = palindromic_sweep(sc.start, sc.intrinsics, sc.sweep, 9);
  PointCloud cloud;
  for (const CameraView& v : sweep) {
    const GtFrame f = render_gt_static(scene, v.pose, v.intrinsics);
    const PointCloud c = back_project_frame({f.rgb, f.depth, std::nullopt, v.pose, v.intrinsics},
                                            {kEpsilonZ, scene.max_range, 1});
    cloud.positions.insert(cloud.positions.end(), c.positions.begin(), c.positions.end());
    cloud.colors.insert(cloud.colors.end(), c.colors.begin(), c.colors.end());
  }
  std::vector<CameraView> views;
  std::vector<Image> gt;
  for (double s : {0.125, 0.375, 0.625, 0.875}) {
    views.push_back({sweep_pose(sc.start, sc.sweep, s), sc.intrinsics});
    gt.push_back(render_gt_static(scene, views.back().pose, sc.intrinsics).rgb);
  }
  return density_sweep(cloud, cube_sides, views, gt, splat_radius);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "seed,generator,clip_count,psnr_c,ssim_c,match_acc\n";
  for (const MetricsRecord& r : rows) {
    out << r.seed << ',' << r.generator << ',' << r.clip_count << ',' << r.psnr_c << ',' << r.ssim_c << ','
        << r.match_acc << '\n';
  }
}

void write_metrics_json(const std::filesystem::path& path, const std::vector<MetricsRecord>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const MetricsRecord& r : rows) a.push_back(record_json(r));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << a.dump(2) << '\n';
}

void write_density_csv(const std::filesystem::path& path, const std::vector<DensityRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "cube_side,psnr,points\n";
  for (const DensityRow& r : rows) out << r.cube_side << ',' << r.psnr << ',' << r.points << '\n';
}

}  // namespace scenemem
