// SPDX-License-Identifier: Apache-2.0

#include "scenemem/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scenemem/io.hpp"
#include "scenemem/renderer.hpp"

namespace scenemem {

using nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json camera_json(const CameraView& c) {
  json rot = json::array();
  for (int i = 0; i < 9; ++i) rot.push_back(c.pose.rotation()(i / 3, i % 3));
  const Intrinsics& k = c.intrinsics;
  return {{"rotation", rot},
          {"translation", vec3_json(c.pose.translation())},
          {"intrinsics",
           {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}}};
}

CameraView camera_from(const json& j, bool validate) {
  const auto& r = j.at("rotation");
  if (!r.is_array() || r.size() != 9) throw std::invalid_argument("camera rotation must have 9 entries");
  Mat3 rot;
  for (int i = 0; i < 9; ++i) rot(i / 3, i % 3) = r[i].get<double>();
  const Vec3 t = vec3_from(j.at("translation"));
  CameraView c;
  c.pose = validate ? Pose(rot, t) : Pose::unchecked(rot, t);
  const auto& k = j.at("intrinsics");
  c.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                  k.at("cy").get<double>(), k.at("width").get<int>(),  k.at("height").get<int>()};
  if (validate) c.intrinsics.validate();
  return c;
}

json trajectory_json(const Trajectory& traj) {
  json a = json::array();
  for (const CameraView& c : traj) a.push_back(camera_json(c));
  return a;
}

Trajectory trajectory_from(const json& j, bool validate) {
  if (!j.is_array()) throw std::invalid_argument("trajectory must be an array of cameras");
  Trajectory t;
  for (const auto& c : j) t.push_back(camera_from(c, validate));
  return t;
}

json scene_params_json(const SceneParams& p) {
  return {{"min_room", vec3_json(p.min_room)}, {"max_room", vec3_json(p.max_room)},
          {"num_static", p.num_static},       {"num_dynamic", p.num_dynamic},
          {"duration", p.duration},           {"keep_out_radius", p.keep_out_radius},
          {"eye_height", p.eye_height}};
}

SceneParams scene_params_from(const json& j) {
  SceneParams p;
  if (j.contains("min_room")) p.min_room = vec3_from(j["min_room"]);
  if (j.contains("max_room")) p.max_room = vec3_from(j["max_room"]);
  p.num_static = j.value("num_static", p.num_static);
  p.num_dynamic = j.value("num_dynamic", p.num_dynamic);
  p.duration = j.value("duration", p.duration);
  p.keep_out_radius = j.value("keep_out_radius", p.keep_out_radius);
  p.eye_height = j.value("eye_height", p.eye_height);
  p.validate();
  return p;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s, std::size_t end) : s_(s), end_(end) {}
  void read(void* dst, std::size_t n) {
    if (pos_ + n > end_) throw FormatError("corrupt bundle: truncated");
    std::memcpy(dst, s_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& s_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

uint64_t fnv1a(const void* data, std::size_t size, uint64_t seed) {
  uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void SessionConfig::validate() const {
  if (clip_len < 1) throw std::invalid_argument("session: clip_len must be >= 1");
  if (preceding < 0) throw std::invalid_argument("session: preceding must be >= 0");
  if (!(cube_side > 0)) throw std::invalid_argument("session: cube_side must be positive");
  if (splat_radius < 0) throw std::invalid_argument("session: negative splat radius");
  if (retrieval_window < 0) throw std::invalid_argument("session: negative retrieval window");
  if (!(max_gap_translation >= 0 && max_gap_rotation >= 0)) throw std::invalid_argument("session: negative gap bound");
  if (!(frame_dt >= 0) || !(max_range > 0)) throw std::invalid_argument("session: bad frame_dt or max_range");
  retrieval.validate();
}

std::string SessionConfig::to_json() const {
  const json j = {{"clip_len", clip_len},
                  {"preceding", preceding},
                  {"cube_side", cube_side},
                  {"splat_radius", splat_radius},
                  {"retrieval",
                   {{"max_refs", retrieval.max_refs},
                    {"stride", retrieval.stride},
                    {"epsilon", retrieval.epsilon},
                    {"iou_cube_side", retrieval.iou_cube_side}}},
                  {"retrieval_window", retrieval_window},
                  {"max_gap_translation", max_gap_translation},
                  {"max_gap_rotation", max_gap_rotation},
                  {"frame_dt", frame_dt},
                  {"max_range", max_range},
                  {"seed", seed}};
  return j.dump();
}

SessionConfig SessionConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  SessionConfig c;
  c.clip_len = j.value("clip_len", c.clip_len);
  c.preceding = j.value("preceding", c.preceding);
  c.cube_side = j.value("cube_side", c.cube_side);
  c.splat_radius = j.value("splat_radius", c.splat_radius);
  if (j.contains("retrieval")) {
    const auto& r = j["retrieval"];
    c.retrieval.max_refs = r.value("max_refs", c.retrieval.max_refs);
    c.retrieval.stride = r.value("stride", c.retrieval.stride);
    c.retrieval.epsilon = r.value("epsilon", c.retrieval.epsilon);
    c.retrieval.iou_cube_side = r.value("iou_cube_side", c.retrieval.iou_cube_side);
  }
  c.retrieval_window = j.value("retrieval_window", c.retrieval_window);
  c.max_gap_translation = j.value("max_gap_translation", c.max_gap_translation);
  c.max_gap_rotation = j.value("max_gap_rotation", c.max_gap_rotation);
  c.frame_dt = j.value("frame_dt", c.frame_dt);
  c.max_range = j.value("max_range", c.max_range);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Session Session::create_from_frame(const PosedFrame& init, const SessionConfig& cfg) {
  cfg.validate();
  if (init.depth.data.empty()) throw std::invalid_argument("session: image initialisation requires depth");
  Session s;
  s.cfg_ = cfg;
  s.mode_ = SessionMode::Freeform;
  s.memory_ = SpatialMemory(cfg.cube_side);
  FusionOptions fo;
  fo.max_range = cfg.max_range;
  s.memory_.fuse(init, fo);
  ArchiveFrame f{init.rgb, {init.pose, init.intrinsics}, init.dynamic_mask.value_or(Mask(init.rgb.width, init.rgb.height)),
                 0};
  s.archive_.push_back(std::move(f));
  return s;
}

Session Session::create_from_scene(uint64_t scene_seed, const SceneParams& params, const Pose& start,
                                   const Intrinsics& intr, const SessionConfig& cfg) {
  cfg.validate();
  auto scene = std::make_shared<const SceneSpec>(generate_scene(scene_seed, params));
  const GtFrame gt = render_gt(*scene, start, intr, 0.0);
  PosedFrame init{gt.rgb, gt.depth, gt.dynamic_mask, start, intr};
  SessionConfig c = cfg;
  c.max_range = scene->max_range;
  Session s = create_from_frame(init, c);
  s.mode_ = SessionMode::Evaluation;
  s.scene_seed_ = scene_seed;
  s.scene_params_ = params;
  s.scene_ = std::move(scene);
  return s;
}

std::vector<const ArchiveFrame*> Session::clip_frames(int k) const {
  if (k < 0 || k > clip_index_) throw std::out_of_range("no clip " + std::to_string(k));
  std::vector<const ArchiveFrame*> out;
  for (const ArchiveFrame& f : archive_) {
    if (f.clip == k) out.push_back(&f);
  }
  return out;
}

double Session::frame_time(std::size_t archive_index) const {
  const double t = double(archive_index) * cfg_.frame_dt;
  return scene_ ? std::min(t, scene_->duration) : t;
}

void Session::validate_request(const StepRequest& req) const {
  if (static_cast<int>(req.trajectory.size()) != cfg_.clip_len) {
    throw std::invalid_argument("step: trajectory has " + std::to_string(req.trajectory.size()) + " cameras, expected " +
                                std::to_string(cfg_.clip_len));
  }
  validate_trajectory(req.trajectory);
  const CameraView& last = archive_.back().camera;
  for (const CameraView& c : req.trajectory) {
    if (c.intrinsics.width != last.intrinsics.width || c.intrinsics.height != last.intrinsics.height) {
      throw std::invalid_argument("step: camera size differs from the session's frames");
    }
    if (c.pose.orthonormality_error() > 1e-6) throw std::invalid_argument("step: camera rotation is not orthonormal");
  }
  const Pose& first = req.trajectory.front().pose;
  if ((first.translation() - last.pose.translation()).norm() > cfg_.max_gap_translation ||
      rotation_angle(first.rotation(), last.pose.rotation()) > cfg_.max_gap_rotation) {
    throw std::invalid_argument("step: trajectory does not continue from the previous clip");
  }
  if (req.instruction < 0 || req.instruction >= kInstructionVocab) throw std::invalid_argument("step: bad instruction");
  for (const EditOp& e : req.edits) e.validate();
}

ClipRequest Session::prepare(const StepRequest& req) const {
  ClipRequest cr;
  const PointCloud cloud = memory_.snapshot();
  cr.cameras = req.trajectory;
  cr.instruction = req.instruction;
  cr.projection = render_sequence(cloud, req.trajectory, cfg_.splat_radius);
  cr.start_time = frame_time(archive_.size());
  cr.frame_dt = cfg_.frame_dt;
  cr.seed = cfg_.seed ^ (0x9E3779B97F4A7C15ull * static_cast<uint64_t>(clip_index_ + 1));

  // Preceding frames: the most recent archive frames, padded with the oldest one.
  std::vector<std::size_t> pre;
  const std::size_t m = static_cast<std::size_t>(cfg_.preceding);
  for (std::size_t i = 0; i < m; ++i) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(archive_.size()) - static_cast<std::ptrdiff_t>(m) +
                               static_cast<std::ptrdiff_t>(i);
    pre.push_back(idx < 0 ? 0 : static_cast<std::size_t>(idx));
  }
  for (std::size_t idx : pre) {
    const ArchiveFrame& f = archive_[idx];
    cr.preceding.push_back(f.rgb);
    cr.preceding_projection.push_back(render_projection(cloud, f.camera.pose, f.camera.intrinsics, cfg_.splat_radius));
  }

  std::vector<ViewCloud> targets, candidates;
  for (std::size_t i = 0; i < req.trajectory.size(); ++i) {
    targets.push_back({static_cast<int>(i), visible_subcloud(cloud, cr.projection[i], req.trajectory[i].pose),
                       req.trajectory[i].pose});
  }
  const std::size_t lo = cfg_.retrieval_window > 0 && archive_.size() > std::size_t(cfg_.retrieval_window)
                             ? archive_.size() - cfg_.retrieval_window
                             : 0;
  for (std::size_t i = lo; i < archive_.size(); ++i) {
    const CameraView& c = archive_[i].camera;
    const ProjectionImage view = render_projection(cloud, c.pose, c.intrinsics, cfg_.splat_radius);
    candidates.push_back({static_cast<int>(i), visible_subcloud(cloud, view, c.pose), c.pose});
  }
  for (int id : retrieve_references(targets, candidates, cfg_.retrieval)) cr.refs.push_back(archive_[id].rgb);
  return cr;
}

void Session::fuse_generated(const std::vector<Image>& frames, const Trajectory& traj, const PointCloud& cloud,
                             std::size_t first_index) {
  FusionOptions fo;
  fo.max_range = cfg_.max_range;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const CameraView& cam = traj[i];
    Image depth;
    Mask mask(cam.intrinsics.width, cam.intrinsics.height);
    if (mode_ == SessionMode::Evaluation) {
      const GtFrame gt = render_gt(*scene_, cam.pose, cam.intrinsics, frame_time(first_index + i));
      depth = gt.depth;
      mask = gt.dynamic_mask;
    } else {
      // Generated pixels land where the memory already has surface; elsewhere they carry no depth.
      depth = render_projection(cloud, cam.pose, cam.intrinsics, cfg_.splat_radius).depth;
    }
    memory_.fuse(PosedFrame{frames[i], depth, mask, cam.pose, cam.intrinsics}, fo);
    archive_.push_back({frames[i], cam, mask, clip_index_ + 1});
  }
}

std::vector<Image> Session::step(const StepRequest& req, const ClipGenerator& generator) {
  validate_request(req);
  Session next = *this;
  for (const EditOp& e : req.edits) next.memory_.apply(e);
  const ClipRequest cr = next.prepare(req);
  std::vector<Image> frames = generator.generate(cr);
  if (frames.size() != req.trajectory.size()) throw std::runtime_error("step: generator returned wrong clip length");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Intrinsics& k = req.trajectory[i].intrinsics;
    if (frames[i].width != k.width || frames[i].height != k.height || frames[i].channels != 3) {
      throw std::runtime_error("step: generator returned a frame of the wrong size");
    }
    for (float v : frames[i].data) {
      if (!std::isfinite(v)) throw std::runtime_error("step: generator produced non-finite pixels");
    }
  }
  next.fuse_generated(frames, req.trajectory, next.memory_.snapshot(), next.archive_.size());
  next.clip_index_ += 1;
  *this = std::move(next);
  return frames;
}

void Session::edit(const EditOp& op) {
  op.validate();
  memory_.apply(op);
}

std::string Session::export_bundle() const {
  json header;
  header["config"] = json::parse(cfg_.to_json());
  header["mode"] = mode_ == SessionMode::Evaluation ? "evaluation" : "freeform";
  header["scene"] = scene_seed_ ? json{{"seed", *scene_seed_}, {"params", scene_params_json(scene_params_)}} : json();
  header["clip_index"] = clip_index_;
  json frames = json::array();
  for (const ArchiveFrame& f : archive_) {
    frames.push_back({{"camera", camera_json(f.camera)}, {"clip", f.clip}});
  }
  header["archive"] = frames;
  const std::string h = header.dump();

  std::ostringstream mem;
  memory_.write_binary(mem);
  const std::string m = mem.str();

  std::string out = "SMBN";
  put(out, kBundleVersion);
  put(out, static_cast<uint64_t>(h.size()));
  out += h;
  put(out, static_cast<uint64_t>(m.size()));
  out += m;
  for (const ArchiveFrame& f : archive_) {
    out.append(reinterpret_cast<const char*>(f.rgb.data.data()), f.rgb.data.size() * sizeof(float));
    out.append(reinterpret_cast<const char*>(f.dynamic_mask.data.data()), f.dynamic_mask.data.size());
  }
  put(out, fnv1a(out.data(), out.size()));
  return out;
}

uint64_t Session::checksum() const {
  const std::string b = export_bundle();
  uint64_t h;
  std::memcpy(&h, b.data() + b.size() - sizeof(h), sizeof(h));
  return h;
}

Session Session::import_bundle(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8 + 8) throw FormatError("corrupt bundle: truncated");
  if (bytes.compare(0, 4, "SMBN") != 0) throw FormatError("corrupt bundle: bad magic");
  const std::size_t body = bytes.size() - sizeof(uint64_t);
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (fnv1a(bytes.data(), body) != stored) throw FormatError("corrupt bundle: checksum mismatch");

  Reader r(bytes, body);
  char magic[4];
  r.read(magic, 4);
  if (r.get<uint32_t>() != kBundleVersion) throw FormatError("bundle version mismatch");
  const auto hlen = r.get<uint64_t>();
  if (hlen > body) throw FormatError("corrupt bundle: header length");
  std::string h(hlen, '\0');
  r.read(h.data(), hlen);
  Session s;
  try {
    const json header = json::parse(h);
    s.cfg_ = SessionConfig::from_json(header.at("config").dump());
    s.mode_ = header.at("mode").get<std::string>() == "evaluation" ? SessionMode::Evaluation : SessionMode::Freeform;
    if (!header.at("scene").is_null()) {
      s.scene_seed_ = header["scene"].at("seed").get<uint64_t>();
      s.scene_params_ = scene_params_from(header["scene"].at("params"));
      s.scene_ = std::make_shared<const SceneSpec>(generate_scene(*s.scene_seed_, s.scene_params_));
    }
    s.clip_index_ = header.at("clip_index").get<int>();
    for (const auto& f : header.at("archive")) {
      ArchiveFrame a;
      a.camera = camera_from(f.at("camera"), false);
      a.clip = f.at("clip").get<int>();
      a.rgb = Image(a.camera.intrinsics.width, a.camera.intrinsics.height, 3);
      a.dynamic_mask = Mask(a.camera.intrinsics.width, a.camera.intrinsics.height);
      s.archive_.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt bundle header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("corrupt bundle header: ") + e.what());
  }
  const auto mlen = r.get<uint64_t>();
  if (mlen > body - r.pos()) throw FormatError("corrupt bundle: memory length");
  std::string m(mlen, '\0');
  r.read(m.data(), mlen);
  std::istringstream mem(m);
  s.memory_ = SpatialMemory::read_binary(mem);
  for (ArchiveFrame& a : s.archive_) {
    r.read(a.rgb.data.data(), a.rgb.data.size() * sizeof(float));
    r.read(a.dynamic_mask.data.data(), a.dynamic_mask.data.size());
  }
  if (r.pos() != body) throw FormatError("corrupt bundle: trailing bytes");
  if (s.archive_.empty()) throw FormatError("corrupt bundle: empty archive");
  return s;
}

std::string trajectory_to_json(const Trajectory& traj) { return trajectory_json(traj).dump(); }

Trajectory trajectory_from_json(const std::string& text) {
  try {
    return trajectory_from(json::parse(text), true);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("trajectory: ") + e.what());
  }
}

StepRequest parse_step_request(const std::string& text) {
  try {
    const json j = json::parse(text);
    StepRequest req;
    req.trajectory = trajectory_from(j.at("trajectory"), true);
    if (j.contains("instruction")) {
      const auto& ins = j["instruction"];
      req.instruction = ins.is_string() ? instruction_id(ins.get<std::string>()) : ins.get<int>();
    }
    if (j.contains("edits")) {
      for (const auto& e : j["edits"]) req.edits.push_back(parse_edit(e.dump()));
    }
    return req;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("step request: ") + e.what());
  }
}

std::string step_request_to_json(const StepRequest& req) {
  json edits = json::array();
  for (const EditOp& e : req.edits) edits.push_back(json::parse(edit_to_json(e)));
  return json{{"trajectory", trajectory_json(req.trajectory)}, {"instruction", req.instruction}, {"edits", edits}}
      .dump();
}

std::string scene_params_to_json(const SceneParams& p) { return scene_params_json(p).dump(); }

SceneParams scene_params_from_json(const std::string& text) { return scene_params_from(json::parse(text)); }

}  // namespace scenemem
