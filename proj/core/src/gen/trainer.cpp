// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace scenemem::gen {

namespace {

Mat tokenize_frames(const Tokenizer& tok, const std::vector<int>& ids, const std::vector<Image>& pool) {
  std::vector<Image> frames;
  for (int i : ids) frames.push_back(pool[i]);
  if (frames.empty()) return Mat(0, tok.config().channels());
  return tok.tokenize(frames);
}

void adamw_step(Param& p, const TrainConfig& cfg, int step, double grad_scale) {
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
  const Mat g = grad_scale * p.grad;
  p.m = b1 * p.m + (1 - b1) * g;
  p.v = b2 * p.v + (1 - b2) * g.cwiseProduct(g);
  p.value *= 1.0 - cfg.lr * cfg.weight_decay;
  p.value.array() -= cfg.lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + cfg.adam_eps);
}

}  // namespace

Example make_example(const TrainingSample& sample, const Tokenizer& tok, int max_refs) {
  std::vector<Image> rgb, proj;
  for (const GtFrame& f : sample.frames) rgb.push_back(f.rgb);
  for (const ProjectionImage& p : sample.projections) proj.push_back(p.rgb);
  std::vector<int> refs = sample.references;
  if (static_cast<int>(refs.size()) > max_refs) refs.resize(max_refs);
  Example e;
  e.target = tokenize_frames(tok, sample.split.target, rgb);
  e.preceding = tokenize_frames(tok, sample.split.preceding, rgb);
  e.scene_p = tokenize_frames(tok, sample.split.preceding, proj);
  e.scene_t = tokenize_frames(tok, sample.split.target, proj);
  e.refs = tokenize_frames(tok, refs, rgb);
  e.instruction = sample.instruction;
  return e;
}

std::vector<Example> build_dataset(const DatasetConfig& cfg, const Tokenizer& tok) {
  if (cfg.samples < 1) throw std::invalid_argument("build_dataset: need at least one sample");
  std::vector<Example> out;
  std::mt19937_64 rng(cfg.seed);
  const Intrinsics intr = Intrinsics::from_fov(tok.config().width, tok.config().height, cfg.fov_deg);
  for (int i = 0; i < cfg.samples; ++i) {
    const SceneSpec scene = generate_scene(rng(), cfg.scene);
    const Pose start = random_start_pose(scene, rng);
    const SweepParams sweep = random_sweep(rng);
    const Trajectory traj = palindromic_sweep(start, intr, sweep, cfg.video_length);
    const TrainingSample s = assemble_sample(scene, traj, cfg.sample, rng);
    out.push_back(make_example(s, tok, cfg.max_refs));
  }
  return out;
}

ParamGroup stage_group(Stage s) {
  switch (s) {
    case Stage::Pretrain: return ParamGroup::Backbone;
    case Stage::ControlNet: return ParamGroup::ControlNet;
    case Stage::Lora: return ParamGroup::Lora;
  }
  throw std::invalid_argument("unknown stage");
}

void TrainConfig::validate() const {
  if (steps < 0 || batch < 1) throw std::invalid_argument("train: need steps >= 0 and batch >= 1");
  if (!(lr > 0)) throw std::invalid_argument("train: learning rate must be positive");
  if (drop_refs < 0 || drop_refs > 1 || drop_scene < 0 || drop_scene > 1) {
    throw std::invalid_argument("train: dropout probabilities must lie in [0,1]");
  }
  augment_schedule.validate();
}

TrainReport train(Model& model, const std::vector<Example>& data, const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.stage == Stage::Lora && !model.config().lora) throw std::invalid_argument("train: model has no LoRA adapters");
  TrainReport rep;
  if (cfg.stage == Stage::ControlNet && cfg.init_control) model.init_controlnet_from_backbone();
  for (int g = 0; g < 3; ++g) rep.checksum_before[g] = model.params().checksum(static_cast<ParamGroup>(g));

  const ParamGroup group = stage_group(cfg.stage);
  model.set_trainable(group);
  for (const auto& p : model.params().all()) {
    p->m.setZero();
    p->v.setZero();
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::bernoulli_distribution drop_refs(cfg.drop_refs), drop_scene(cfg.drop_scene);

  for (int step = 1; step <= cfg.steps; ++step) {
    model.params().zero_grad();
    double loss = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const Example& ex = data[pick(rng)];
      Conditioning cond;
      cond.instruction = ex.instruction;
      cond.refs = drop_refs(rng) ? Mat(0, ex.target.cols()) : ex.refs;
      cond.preceding = cfg.augment ? augment_preceding(ex.preceding, cfg.augment_schedule, rng) : ex.preceding;
      cond.use_scene = cfg.stage != Stage::Pretrain && !drop_scene(rng);
      if (cond.use_scene) {
        cond.scene_p = ex.scene_p;
        cond.scene_t = ex.scene_t;
      }
      ModelCache cache;
      const LossResult r = fm_loss(model, cond, ex.target, rng, &cache);
      model.backward(fm_loss_grad(r) / cfg.batch, cache);
      loss += r.loss / cfg.batch;
    }
    if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
      throw std::runtime_error("train: loss diverged at step " + std::to_string(step) + " (" + std::to_string(loss) +
                               ")");
    }
    double scale = 1.0;
    if (cfg.grad_clip > 0) {
      double sq = 0;
      for (const auto& p : model.params().all()) {
        if (p->group == group) sq += p->grad.squaredNorm();
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }
    for (const auto& p : model.params().all()) {
      if (p->group == group) adamw_step(*p, cfg, step, scale);
    }
    rep.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  model.set_all_trainable();
  for (int g = 0; g < 3; ++g) rep.checksum_after[g] = model.params().checksum(static_cast<ParamGroup>(g));
  return rep;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss\n";
  out.precision(9);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i + 1 << ',' << losses[i] << '\n';
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& metadata_json) {
  nlohmann::json header;
  header["model"] = nlohmann::json::parse(model.config().to_json());
  header["metadata"] = nlohmann::json::parse(metadata_json);
  header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.params().all()) {
    header["tensors"].push_back(
        {{"name", p->name}, {"group", group_name(p->group)}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const uint32_t version = kCheckpointVersion;
  const uint64_t len = h.size();
  out.write("SMCK", 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& p : model.params().all()) {
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = p->value.cast<float>();
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(sizeof(float) * f.size()));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, "SMCK", 4) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  if (len > (1u << 26)) throw std::runtime_error("checkpoint header too large");
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(h);
  Model model(ModelConfig::from_json(header["model"].dump()));
  for (const auto& t : header["tensors"]) {
    Param& p = model.params().at(t["name"].get<std::string>());
    const auto rows = t["rows"].get<Eigen::Index>(), cols = t["cols"].get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols() || parse_group(t["group"]) != p.group) {
      throw std::runtime_error("checkpoint tensor '" + p.name + "' does not match the model");
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(sizeof(float) * f.size()));
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
    p.value = f.cast<double>();
  }
  return model;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Pretrain: return "pretrain";
    case Stage::ControlNet: return "controlnet";
    case Stage::Lora: return "lora";
  }
  throw std::invalid_argument("unknown stage");
}

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::Pretrain;
  if (name == "controlnet") return Stage::ControlNet;
  if (name == "lora") return Stage::Lora;
  throw std::invalid_argument("unknown stage '" + name + "'");
}

void Recipe::validate() const {
  model.validate();
  if (dataset.samples < 1 || dataset.max_refs < 0) throw std::invalid_argument("recipe: bad dataset size");
  if (dataset.video_length < dataset.sample.n_target + dataset.sample.m_preceding) {
    throw std::invalid_argument("recipe: videos shorter than target plus preceding clip");
  }
  for (const TrainConfig& t : stages) t.validate();
}

std::string Recipe::to_json() const {
  using json = nlohmann::json;
  json st = json::array();
  for (const TrainConfig& t : stages) {
    st.push_back({{"stage", stage_name(t.stage)},
                  {"steps", t.steps},
                  {"batch", t.batch},
                  {"lr", t.lr},
                  {"weight_decay", t.weight_decay},
                  {"grad_clip", t.grad_clip},
                  {"drop_refs", t.drop_refs},
                  {"drop_scene", t.drop_scene},
                  {"augment", t.augment},
                  {"init_control", t.init_control},
                  {"seed", t.seed}});
  }
  const json j = {{"model", json::parse(model.to_json())},
                  {"dataset",
                   {{"samples", dataset.samples},
                    {"video_length", dataset.video_length},
                    {"fov_deg", dataset.fov_deg},
                    {"max_refs", dataset.max_refs},
                    {"seed", dataset.seed},
                    {"n_target", dataset.sample.n_target},
                    {"m_preceding", dataset.sample.m_preceding},
                    {"fuse_all_candidates", dataset.sample.fuse_all_candidates},
                    {"scene", json::parse(scene_params_to_json(dataset.scene))}}},
                  {"stages", st}};
  return j.dump(2);
}

Recipe Recipe::from_json(const std::string& text) {
  using json = nlohmann::json;
  Recipe r;
  try {
    const json j = json::parse(text);
    if (j.contains("model")) r.model = ModelConfig::from_json(j["model"].dump());
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      r.dataset.samples = d.value("samples", r.dataset.samples);
      r.dataset.video_length = d.value("video_length", r.dataset.video_length);
      r.dataset.fov_deg = d.value("fov_deg", r.dataset.fov_deg);
      r.dataset.max_refs = d.value("max_refs", r.dataset.max_refs);
      r.dataset.seed = d.value("seed", r.dataset.seed);
      r.dataset.sample.n_target = d.value("n_target", r.dataset.sample.n_target);
      r.dataset.sample.m_preceding = d.value("m_preceding", r.dataset.sample.m_preceding);
      r.dataset.sample.fuse_all_candidates = d.value("fuse_all_candidates", r.dataset.sample.fuse_all_candidates);
      if (d.contains("scene")) r.dataset.scene = scene_params_from_json(d["scene"].dump());
    }
    if (j.contains("stages")) {
      for (const json& s : j["stages"]) {
        TrainConfig t;
        t.stage = parse_stage(s.at("stage").get<std::string>());
        t.steps = s.value("steps", t.steps);
        t.batch = s.value("batch", t.batch);
        t.lr = s.value("lr", t.lr);
        t.weight_decay = s.value("weight_decay", t.weight_decay);
        t.grad_clip = s.value("grad_clip", t.grad_clip);
        t.drop_refs = s.value("drop_refs", t.drop_refs);
        t.drop_scene = s.value("drop_scene", t.drop_scene);
        t.augment = s.value("augment", t.augment);
        t.init_control = s.value("init_control", t.init_control);
        t.seed = s.value("seed", t.seed);
        r.stages.push_back(t);
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("recipe: ") + e.what());
  }
  r.validate();
  return r;
}

Recipe Recipe::toy() {
  Recipe r;
  // Patch means sit near 0.5 with a spread of about 0.15; AC terms are smaller.
  r.model.tokenizer = {8, 4, false, 32, 32, 0.5, 12.0};
  r.model.blocks = 4;
  r.model.control_every = 4;
  r.model.dim = 64;
  r.model.heads = 4;
  r.model.lora_rank = 8;
  r.model.lora_alpha = 8;
  r.model.max_frames = 16;
  r.dataset.samples = 64;
  r.dataset.video_length = 24;
  r.dataset.max_refs = 3;
  // Inference memories hold the whole archive, so training memories hold every candidate.
  r.dataset.sample.fuse_all_candidates = true;
  TrainConfig pre;
  pre.stage = Stage::Pretrain;
  pre.steps = 800;
  TrainConfig ctl;
  ctl.stage = Stage::ControlNet;
  ctl.steps = 3000;
  ctl.drop_scene = 0.0;
  ctl.seed = 8;
  TrainConfig lora;
  lora.stage = Stage::Lora;
  lora.steps = 800;
  lora.seed = 9;
  r.stages = {pre, ctl, lora};
  return r;
}

RecipeResult run_recipe(const Recipe& recipe, const StageCallback& on_step) {
  recipe.validate();
  const Tokenizer tok(recipe.model.tokenizer);
  const std::vector<Example> data = build_dataset(recipe.dataset, tok);
  RecipeResult out{Model(recipe.model), {}};
  for (std::size_t i = 0; i < recipe.stages.size(); ++i) {
    StepCallback cb;
    if (on_step) cb = [&, i](int step, double loss) { on_step(static_cast<int>(i), step, loss); };
    out.reports.push_back(train(out.model, data, recipe.stages[i], cb));
  }
  return out;
}

}  // namespace scenemem::gen
