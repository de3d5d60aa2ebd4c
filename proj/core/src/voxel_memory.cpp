// SPDX-License-Identifier: Apache-2.0

#include "scenemem/voxel_memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scenemem/io.hpp"

namespace scenemem {

using json = nlohmann::json;

namespace {

using CellMap = std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash>;

constexpr uint32_t kMemoryVersion = 1;

void check_side(double d) {
  if (!(d > 0) || !std::isfinite(d)) throw std::invalid_argument("cube side must be positive");
}

void stage_point(CellMap& staged, const Vec3& p, const Eigen::Vector3d& c, double d) {
  VoxelCell& cell = staged[voxel_key(p, d)];
  cell.position_sum += p;
  cell.color_sum += c;
  cell.count += 1;
}

std::vector<std::pair<VoxelKey, const VoxelCell*>> sorted_cells(const CellMap& cells) {
  std::vector<std::pair<VoxelKey, const VoxelCell*>> out;
  out.reserve(cells.size());
  for (const auto& [k, c] : cells) out.emplace_back(k, &c);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json color_json(const Color& c) { return json::array({c.x(), c.y(), c.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("edit: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Color json_color(const json& j) {
  const Vec3 v = json_vec(j);
  return v.cast<float>();
}

json region_json(const EditOp::Region& region) {
  if (const auto* box = std::get_if<AxisBox>(&region)) {
    return {{"min", vec_json(box->min)}, {"max", vec_json(box->max)}};
  }
  json keys = json::array();
  for (const VoxelKey& k : std::get<std::vector<VoxelKey>>(region)) keys.push_back({k.x, k.y, k.z});
  return {{"keys", keys}};
}

EditOp::Region json_region(const json& j) {
  if (j.contains("keys")) {
    std::vector<VoxelKey> keys;
    for (const auto& k : j.at("keys")) {
      if (!k.is_array() || k.size() != 3) throw std::invalid_argument("edit: voxel key must be [i,j,k]");
      keys.push_back({k[0].get<int32_t>(), k[1].get<int32_t>(), k[2].get<int32_t>()});
    }
    return keys;
  }
  return AxisBox{json_vec(j.at("min")), json_vec(j.at("max"))};
}

bool in_region(const EditOp::Region& region, const VoxelKey& key, const Vec3& centroid,
               const std::vector<VoxelKey>* sorted_keys) {
  if (const auto* box = std::get_if<AxisBox>(&region)) return box->contains(centroid);
  return std::binary_search(sorted_keys->begin(), sorted_keys->end(), key);
}

}  // namespace

VoxelKey voxel_key(const Vec3& point, double d) {
  check_side(d);
  return {static_cast<int32_t>(std::floor(point.x() / d)), static_cast<int32_t>(std::floor(point.y() / d)),
          static_cast<int32_t>(std::floor(point.z() / d))};
}

void Primitive::validate() const {
  if (shape == Shape::Box) {
    if (!(half_extents.minCoeff() > 0)) throw std::invalid_argument("primitive: box sizes must be positive");
  } else if (!(radius > 0)) {
    throw std::invalid_argument("primitive: sphere radius must be positive");
  }
  if (!(color.minCoeff() >= 0.0f && color.maxCoeff() <= 1.0f)) {
    throw std::invalid_argument("primitive: color outside [0,1]");
  }
}

PointCloud Primitive::sample_surface(double spacing) const {
  validate();
  if (!(spacing > 0)) throw std::invalid_argument("sample_surface: spacing must be positive");
  PointCloud out;
  if (shape == Shape::Box) {
    // Each face is covered by a regular grid including its border.
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const int nu = std::max(1, static_cast<int>(std::ceil(2 * half_extents[u] / spacing)));
      const int nv = std::max(1, static_cast<int>(std::ceil(2 * half_extents[v] / spacing)));
      for (int side : {-1, 1}) {
        for (int i = 0; i <= nu; ++i) {
          for (int j = 0; j <= nv; ++j) {
            Vec3 local;
            local[axis] = side * half_extents[axis];
            local[u] = -half_extents[u] + 2 * half_extents[u] * i / nu;
            local[v] = -half_extents[v] + 2 * half_extents[v] * j / nv;
            out.push_back(pose.apply(local), color);
          }
        }
      }
    }
  } else {
    constexpr double kPi = 3.14159265358979323846;
    const double area = 4 * kPi * radius * radius;
    const int n = std::max(8, static_cast<int>(std::ceil(area / (spacing * spacing))));
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * i;
      out.push_back(pose.apply(radius * Vec3(r * std::cos(phi), r * std::sin(phi), z)), color);
    }
  }
  return out;
}

void EditOp::validate() const {
  if (kind == Kind::AddPrimitive) {
    primitive.validate();
    return;
  }
  if (const auto* box = std::get_if<AxisBox>(&region)) {
    if (!(box->min.array() <= box->max.array()).all()) throw std::invalid_argument("edit: empty region box");
  } else if (std::get<std::vector<VoxelKey>>(region).empty()) {
    throw std::invalid_argument("edit: empty voxel-key region");
  }
  if (kind == Kind::RecolorRegion && !(color.minCoeff() >= 0.0f && color.maxCoeff() <= 1.0f)) {
    throw std::invalid_argument("edit: recolor target outside [0,1]");
  }
}

EditOp parse_edit(const std::string& json_text) {
  EditOp op;
  try {
    const json j = json::parse(json_text);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "delete-region") {
      op.kind = EditOp::Kind::DeleteRegion;
      op.region = json_region(j.at("region"));
    } else if (kind == "recolor-region") {
      op.kind = EditOp::Kind::RecolorRegion;
      op.region = json_region(j.at("region"));
      op.color = json_color(j.at("color"));
    } else if (kind == "add-primitive") {
      op.kind = EditOp::Kind::AddPrimitive;
      const json& p = j.at("primitive");
      const std::string shape = p.at("shape").get<std::string>();
      if (shape == "box") {
        op.primitive.shape = Primitive::Shape::Box;
        op.primitive.half_extents = 0.5 * json_vec(p.at("size"));
      } else if (shape == "sphere") {
        op.primitive.shape = Primitive::Shape::Sphere;
        op.primitive.radius = p.at("radius").get<double>();
      } else {
        throw std::invalid_argument("edit: unknown primitive shape '" + shape + "'");
      }
      if (p.contains("color")) op.primitive.color = json_color(p.at("color"));
      if (p.contains("pose")) {
        const json& pj = p.at("pose");
        Mat3 r = Mat3::Identity();
        if (pj.contains("rotation")) {
          const auto& rv = pj.at("rotation");
          if (!rv.is_array() || rv.size() != 9) throw std::invalid_argument("edit: rotation must have 9 entries");
          for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rv[i].get<double>();
        }
        const Vec3 t = pj.contains("translation") ? json_vec(pj.at("translation")) : Vec3::Zero();
        op.primitive.pose = Pose(r, t);
      }
    } else {
      throw std::invalid_argument("edit: unknown kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("edit: malformed document: ") + e.what());
  }
  op.validate();
  return op;
}

std::string edit_to_json(const EditOp& op) {
  json j;
  switch (op.kind) {
    case EditOp::Kind::DeleteRegion:
      j = {{"kind", "delete-region"}, {"region", region_json(op.region)}};
      break;
    case EditOp::Kind::RecolorRegion:
      j = {{"kind", "recolor-region"}, {"region", region_json(op.region)}, {"color", color_json(op.color)}};
      break;
    case EditOp::Kind::AddPrimitive: {
      const Primitive& p = op.primitive;
      json pj = {{"color", color_json(p.color)}};
      if (p.shape == Primitive::Shape::Box) {
        pj["shape"] = "box";
        pj["size"] = vec_json(2 * p.half_extents);
      } else {
        pj["shape"] = "sphere";
        pj["radius"] = p.radius;
      }
      json rot = json::array();
      for (int i = 0; i < 9; ++i) rot.push_back(p.pose.rotation()(i / 3, i % 3));
      pj["pose"] = {{"rotation", rot}, {"translation", vec_json(p.pose.translation())}};
      j = {{"kind", "add-primitive"}, {"primitive", pj}};
      break;
    }
  }
  return j.dump();
}

SpatialMemory::SpatialMemory(double cube_side) : cube_side_(cube_side) { check_side(cube_side); }

const VoxelCell* SpatialMemory::find(const VoxelKey& key) const {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

void SpatialMemory::merge_cells(const CellMap& staged) {
  // Per-frame sums are merged as a whole so that re-fusing an identical
  // frame doubles sums and counts exactly.
  for (const auto& [key, add] : staged) {
    VoxelCell& cell = cells_[key];
    cell.position_sum += add.position_sum;
    cell.color_sum += add.color_sum;
    cell.count += add.count;
  }
}

PointCloud back_project_frame(const PosedFrame& frame, const FusionOptions& opts) {
  const Image& rgb = frame.rgb;
  const Image& depth = frame.depth;
  if (rgb.channels != 3 || depth.channels != 1) throw std::invalid_argument("fuse: expected RGB + 1-channel depth");
  if (rgb.width != depth.width || rgb.height != depth.height) {
    throw std::invalid_argument("fuse: depth and image dimensions differ");
  }
  if (frame.dynamic_mask && (frame.dynamic_mask->width != rgb.width || frame.dynamic_mask->height != rgb.height)) {
    throw std::invalid_argument("fuse: mask and image dimensions differ");
  }
  if (frame.intrinsics.width != rgb.width || frame.intrinsics.height != rgb.height) {
    throw std::invalid_argument("fuse: intrinsics do not match image size");
  }
  frame.intrinsics.validate();
  const int stride = std::max(1, opts.pixel_stride);
  PointCloud out;
  for (int y = 0; y < rgb.height; y += stride) {
    for (int x = 0; x < rgb.width; x += stride) {
      if (frame.dynamic_mask && frame.dynamic_mask->at(x, y)) continue;
      const double z = depth.at(x, y);
      if (!(z > opts.epsilon_z) || !(z < opts.max_range)) continue;
      out.push_back(back_project(Vec2(x, y), z, frame.pose, frame.intrinsics), rgb.rgb(x, y));
    }
  }
  return out;
}

void SpatialMemory::fuse(const PosedFrame& frame, const FusionOptions& opts) {
  const PointCloud pts = back_project_frame(frame, opts);
  fuse_points(pts);
}

void SpatialMemory::fuse(std::span<const PosedFrame> frames, const FusionOptions& opts) {
  // Validate everything first so a bad frame leaves the memory untouched.
  std::vector<PointCloud> clouds;
  clouds.reserve(frames.size());
  for (const PosedFrame& f : frames) clouds.push_back(back_project_frame(f, opts));
  for (const PointCloud& c : clouds) fuse_points(c);
}

void SpatialMemory::fuse_points(const PointCloud& cloud) {
  CellMap staged;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    stage_point(staged, cloud.positions[i], cloud.colors[i].cast<double>(), cube_side_);
  }
  merge_cells(staged);
}

void SpatialMemory::apply(const EditOp& edit) {
  edit.validate();
  if (edit.kind == EditOp::Kind::AddPrimitive) {
    // Grid spacing d/2 gives at least 4 samples per voxel face area.
    fuse_points(edit.primitive.sample_surface(0.5 * cube_side_));
    return;
  }
  std::vector<VoxelKey> keys;
  if (const auto* k = std::get_if<std::vector<VoxelKey>>(&edit.region)) {
    keys = *k;
    std::sort(keys.begin(), keys.end());
  }
  for (auto it = cells_.begin(); it != cells_.end();) {
    if (!in_region(edit.region, it->first, it->second.centroid(), &keys)) {
      ++it;
      continue;
    }
    if (edit.kind == EditOp::Kind::DeleteRegion) {
      it = cells_.erase(it);
    } else {
      it->second.color_sum = edit.color.cast<double>() * static_cast<double>(it->second.count);
      ++it;
    }
  }
}

std::vector<VoxelKey> SpatialMemory::sorted_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(cells_.size());
  for (const auto& kv : cells_) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  return keys;
}

PointCloud SpatialMemory::snapshot() const {
  PointCloud out;
  out.reserve(cells_.size());
  for (const auto& [key, cell] : sorted_cells(cells_)) {
    out.push_back(cell->centroid(), cell->mean_color().cwiseMax(0.0f).cwiseMin(1.0f));
  }
  return out;
}

void SpatialMemory::write_binary(std::ostream& out) const {
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write("SMEM", 4);
  put(kMemoryVersion);
  put(cube_side_);
  put(static_cast<uint64_t>(cells_.size()));
  for (const auto& [key, cell] : sorted_cells(cells_)) {
    put(key.x);
    put(key.y);
    put(key.z);
    for (int i = 0; i < 3; ++i) put(cell->position_sum[i]);
    for (int i = 0; i < 3; ++i) put(cell->color_sum[i]);
    put(cell->count);
  }
}

SpatialMemory SpatialMemory::read_binary(std::istream& in) {
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw FormatError("memory: truncated data");
  };
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "SMEM") throw FormatError("memory: bad magic");
  uint32_t version = 0;
  get(version);
  if (version != kMemoryVersion) throw FormatError("memory: unsupported version");
  double d = 0;
  get(d);
  if (!(d > 0)) throw FormatError("memory: bad cube side");
  uint64_t n = 0;
  get(n);
  SpatialMemory mem(d);
  for (uint64_t i = 0; i < n; ++i) {
    VoxelKey k;
    VoxelCell c;
    get(k.x);
    get(k.y);
    get(k.z);
    for (int j = 0; j < 3; ++j) get(c.position_sum[j]);
    for (int j = 0; j < 3; ++j) get(c.color_sum[j]);
    get(c.count);
    if (c.count < 1) throw FormatError("memory: cell with non-positive count");
    mem.cells_.emplace(k, c);
  }
  return mem;
}

void SpatialMemory::save(const std::filesystem::path& spcl_path) const {
  write_spcl(spcl_path, snapshot());
  json counts = json::array();
  for (const auto& [key, cell] : sorted_cells(cells_)) counts.push_back(cell->count);
  const json side = {{"d", cube_side_}, {"cell_count", cells_.size()}, {"version", kMemoryVersion}, {"counts", counts}};
  std::filesystem::path sidecar = spcl_path;
  sidecar += ".json";
  std::ofstream out(sidecar);
  if (!out) throw std::runtime_error("cannot write " + sidecar.string());
  out << side.dump(2) << '\n';
}

SpatialMemory SpatialMemory::load(const std::filesystem::path& spcl_path) {
  std::filesystem::path sidecar = spcl_path;
  sidecar += ".json";
  std::ifstream in(sidecar);
  if (!in) throw std::runtime_error("cannot read " + sidecar.string());
  json side;
  try {
    side = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("memory sidecar: ") + e.what());
  }
  if (side.value("version", 0u) != kMemoryVersion) throw FormatError("memory sidecar: unsupported version");
  const PointCloud cloud = read_spcl(spcl_path);
  const auto& counts = side.at("counts");
  if (counts.size() != cloud.size() || side.at("cell_count").get<std::size_t>() != cloud.size()) {
    throw FormatError("memory sidecar: cell count does not match point data");
  }
  SpatialMemory mem(side.at("d").get<double>());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int64_t n = counts[i].get<int64_t>();
    VoxelCell& c = mem.cells_[voxel_key(cloud.positions[i], mem.cube_side_)];
    c.position_sum += cloud.positions[i] * static_cast<double>(n);
    c.color_sum += cloud.colors[i].cast<double>() * static_cast<double>(n);
    c.count += n;
  }
  return mem;
}

bool SpatialMemory::operator==(const SpatialMemory& other) const {
  if (cube_side_ != other.cube_side_ || cells_.size() != other.cells_.size()) return false;
  for (const auto& [k, c] : cells_) {
    const VoxelCell* o = other.find(k);
    if (!o || o->count != c.count || o->position_sum != c.position_sum || o->color_sum != c.color_sum) return false;
  }
  return true;
}

SpatialMemory fuse_frames(SpatialMemory mem, std::span<const PosedFrame> frames, const FusionOptions& opts) {
  mem.fuse(frames, opts);
  return mem;
}

SpatialMemory apply_edit(SpatialMemory mem, const EditOp& edit) {
  mem.apply(edit);
  return mem;
}

PointCloud snapshot(const SpatialMemory& mem) { return mem.snapshot(); }

PointCloud downsample(const PointCloud& cloud, double d) {
  check_side(d);
  CellMap staged;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    stage_point(staged, cloud.positions[i], cloud.colors[i].cast<double>(), d);
  }
  PointCloud out;
  out.reserve(staged.size());
  for (const auto& [key, cell] : sorted_cells(staged)) {
    out.push_back(cell->centroid(), cell->mean_color().cwiseMax(0.0f).cwiseMin(1.0f));
  }
  return out;
}

}  // namespace scenemem
