// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace scenemem::gen {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void ModelConfig::validate() const {
  tokenizer.validate();
  if (blocks < 1 || control_every < 1 || blocks % control_every != 0) {
    throw std::invalid_argument("model: block count must be a positive multiple of the ControlNet grouping");
  }
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("model: dim must be even and >= 2");
  if (heads < 1 || dim % heads != 0) throw std::invalid_argument("model: dim must be divisible by heads");
  if (ffn_mult < 1) throw std::invalid_argument("model: ffn_mult must be >= 1");
  if (lora && lora_rank < 1) throw std::invalid_argument("model: lora_rank must be >= 1 when LoRA is enabled");
  if (text_vocab < 1 || text_len < 1) throw std::invalid_argument("model: empty text embedding");
  if (max_frames < 1) throw std::invalid_argument("model: max_frames must be >= 1");
}

std::string ModelConfig::to_json() const {
  const nlohmann::json j = {
      {"tokenizer",
       {{"patch", tokenizer.patch},
        {"coeffs", tokenizer.coeffs},
        {"identity", tokenizer.identity},
        {"width", tokenizer.width},
        {"height", tokenizer.height},
        {"shift", tokenizer.shift},
        {"scale", tokenizer.scale}}},
      {"blocks", blocks},
      {"control_every", control_every},
      {"dim", dim},
      {"heads", heads},
      {"ffn_mult", ffn_mult},
      {"lora", lora},
      {"lora_rank", lora_rank},
      {"lora_alpha", lora_alpha},
      {"text_vocab", text_vocab},
      {"text_len", text_len},
      {"max_frames", max_frames},
      {"seed", seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  if (j.contains("tokenizer")) {
    const auto& t = j["tokenizer"];
    c.tokenizer.patch = t.value("patch", c.tokenizer.patch);
    c.tokenizer.coeffs = t.value("coeffs", c.tokenizer.coeffs);
    c.tokenizer.identity = t.value("identity", c.tokenizer.identity);
    c.tokenizer.width = t.value("width", c.tokenizer.width);
    c.tokenizer.height = t.value("height", c.tokenizer.height);
    c.tokenizer.shift = t.value("shift", c.tokenizer.shift);
    c.tokenizer.scale = t.value("scale", c.tokenizer.scale);
  }
  c.blocks = j.value("blocks", c.blocks);
  c.control_every = j.value("control_every", c.control_every);
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.lora = j.value("lora", c.lora);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.text_vocab = j.value("text_vocab", c.text_vocab);
  c.text_len = j.value("text_len", c.text_len);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
}

Model::Model(const Model& other) : cfg_(other.cfg_) {
  build();
  *this = other;
}

Model& Model::operator=(const Model& other) {
  if (this == &other) return *this;
  if (!(cfg_ == other.cfg_)) {
    cfg_ = other.cfg_;
    store_ = ParamStore();
    main_.clear();
    control_.clear();
    proj_.clear();
    build();
  }
  for (const auto& p : other.store_.all()) {
    Param& d = store_.at(p->name);
    d.value = p->value;
    d.grad = p->grad;
    d.m = p->m;
    d.v = p->v;
    d.requires_grad = p->requires_grad;
  }
  return *this;
}

void Model::build() {
  std::mt19937_64 rng(cfg_.seed);
  const int d = cfg_.dim, c = cfg_.tokenizer.channels(), hidden = cfg_.ffn_mult * d;
  const auto bb = ParamGroup::Backbone, cn = ParamGroup::ControlNet;

  time1_ = Linear::create(store_, "time.fc1", bb, d, d);
  time2_ = Linear::create(store_, "time.fc2", bb, d, d);
  time1_.init(rng, 1.0 / std::sqrt(double(d)));
  time2_.init(rng, 1.0 / std::sqrt(double(d)));
  in_proj_ = Linear::create(store_, "embed.in", bb, c, d);
  in_proj_.init(rng, 1.0 / std::sqrt(double(c)));
  pos_ = store_.add("embed.pos", bb, cfg_.tokenizer.tokens_per_frame(), d);
  temporal_ = store_.add("embed.temporal", bb, cfg_.max_frames, d);
  seg_video_ = store_.add("embed.segment", bb, 3, d);
  text_table_ = store_.add("embed.text", bb, cfg_.text_vocab, cfg_.text_len * d);
  init_normal(pos_->value, 0.3, rng);
  init_normal(temporal_->value, 0.3, rng);
  init_normal(seg_video_->value, 0.3, rng);
  init_normal(text_table_->value, 0.3, rng);
  for (int b = 0; b < cfg_.blocks; ++b) {
    main_.push_back(Block::create(store_, "main." + std::to_string(b), bb, d, cfg_.heads, hidden));
    main_.back().init(rng, d);
  }
  head_ = Linear::create(store_, "head", bb, d, c);
  head_.init(rng, 0.1 / std::sqrt(double(d)));

  cn_in_ = Linear::create(store_, "control.embed.in", cn, c, d);
  seg_scene_ = store_.add("control.embed.segment", cn, 2, d);
  init_normal(seg_scene_->value, 0.3, rng);
  for (int g = 0; g < cfg_.groups(); ++g) {
    control_.push_back(Block::create(store_, "control." + std::to_string(g), cn, d, cfg_.heads, hidden));
    // Projector stays at zero so the control path starts as an exact no-op.
    proj_.push_back(Linear::create(store_, "control.proj." + std::to_string(g), cn, d, d));
  }
  init_controlnet_from_backbone();

  if (cfg_.lora) {
    for (int b = 0; b < cfg_.blocks; ++b) {
      main_[b].attach_lora(store_, "main." + std::to_string(b), cfg_.lora_rank, cfg_.lora_alpha, rng);
    }
  }
}

void Model::init_controlnet_from_backbone() {
  for (int g = 0; g < cfg_.groups(); ++g) copy_block_weights(main_[g * cfg_.control_every], control_[g]);
  cn_in_.w->value = in_proj_.w->value;
  cn_in_.b->value = in_proj_.b->value;
}

void Model::set_trainable(ParamGroup group) {
  for (const auto& p : store_.all()) p->requires_grad = p->group == group;
}

void Model::set_all_trainable() {
  for (const auto& p : store_.all()) p->requires_grad = true;
}

Eigen::VectorXd Model::timestep_features(double t, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd f(dim);
  for (int i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * i / half);
    f[i] = std::sin(1000.0 * t * w);
    f[half + i] = std::cos(1000.0 * t * w);
  }
  return f;
}

Mat Model::time_embedding(double t, ModelCache* cache) const {
  const Eigen::VectorXd f = timestep_features(t, cfg_.dim);
  const Mat in = f.transpose();
  Mat pre = time1_.forward(in, cache ? &cache->time1 : nullptr);
  const Mat act = pre.unaryExpr([](double x) { return x * sigmoid(x); });
  Mat out = time2_.forward(act, cache ? &cache->time2 : nullptr);
  if (cache) {
    cache->time_in = f;
    cache->time_pre = std::move(pre);
  }
  return out;
}

Mat Model::embed_instruction(int id) const {
  if (id < 0 || id >= cfg_.text_vocab) throw std::out_of_range("instruction id outside the vocabulary");
  const RowVec row = text_table_->value.row(id);
  return Eigen::Map<const Mat>(row.data(), cfg_.text_len, cfg_.dim);
}

Mat Model::forward(const Conditioning& cond, const Mat& x_t, double t, ModelCache* cache) const {
  const int per = cfg_.tokenizer.tokens_per_frame(), c = cfg_.tokenizer.channels();
  const auto n_ref = cond.refs.rows(), n_pre = cond.preceding.rows(), n_tgt = x_t.rows();
  if (n_tgt == 0) throw std::invalid_argument("forward: empty target");
  for (const Mat* m : {&cond.refs, &cond.preceding, &x_t}) {
    if (m->rows() % per != 0 || (m->rows() > 0 && m->cols() != c)) {
      throw std::invalid_argument("forward: token block does not match tokenizer geometry");
    }
  }
  if (cond.use_scene && (cond.scene_p.rows() != n_pre || cond.scene_t.rows() != n_tgt ||
                         (n_pre > 0 && cond.scene_p.cols() != c) || cond.scene_t.cols() != c)) {
    throw std::invalid_argument("forward: scene tokens must align with preceding and target rows");
  }
  const int f_pre = static_cast<int>(n_pre / per), f_tgt = static_cast<int>(n_tgt / per);
  if (f_pre + f_tgt > cfg_.max_frames) throw std::invalid_argument("forward: too many frames for temporal table");

  const Mat text = embed_instruction(cond.instruction);
  const Mat te = time_embedding(t, cache);
  const Eigen::Index len = n_ref + n_pre + n_tgt;

  Mat tokens(len, c);
  if (n_ref) tokens.topRows(n_ref) = cond.refs;
  if (n_pre) tokens.middleRows(n_ref, n_pre) = cond.preceding;
  tokens.bottomRows(n_tgt) = x_t;
  Mat h = in_proj_.forward(tokens, cache ? &cache->in_proj : nullptr);
  for (Eigen::Index r = 0; r < len; ++r) {
    const int seg = r < n_ref ? kSegRef : (r < n_ref + n_pre ? kSegPreceding : kSegTarget);
    h.row(r) += pos_->value.row(r % per) + seg_video_->value.row(seg) + te.row(0);
    if (seg != kSegRef) h.row(r) += temporal_->value.row((r - n_ref) / per);
  }

  Mat s;
  if (cond.use_scene) {
    Mat scene(n_pre + n_tgt, c);
    if (n_pre) scene.topRows(n_pre) = cond.scene_p;
    scene.bottomRows(n_tgt) = cond.scene_t;
    s = cn_in_.forward(scene, cache ? &cache->cn_in : nullptr);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      s.row(r) += pos_->value.row(r % per) + seg_scene_->value.row(r < n_pre ? 0 : 1) + te.row(0) +
                  temporal_->value.row(r / per);
    }
  }

  if (cache) {
    cache->n_ref = static_cast<int>(n_ref);
    cache->n_pre = static_cast<int>(n_pre);
    cache->n_tgt = static_cast<int>(n_tgt);
    cache->use_scene = cond.use_scene;
    cache->instruction = cond.instruction;
    cache->text = text;
    cache->main.assign(cfg_.blocks, {});
    cache->control.assign(cond.use_scene ? cfg_.groups() : 0, {});
    cache->proj.assign(cond.use_scene ? cfg_.groups() : 0, {});
  }
  // Each ControlNet block runs beside the first main block of its group; the
  // projected output joins that block's output before the rest of the group.
  for (int g = 0; g < cfg_.groups(); ++g) {
    for (int i = 0; i < cfg_.control_every; ++i) {
      const int b = g * cfg_.control_every + i;
      h = main_[b].forward(h, text, cache ? &cache->main[b] : nullptr);
      if (i == 0 && cond.use_scene) {
        s = control_[g].forward(s, text, cache ? &cache->control[g] : nullptr);
        h.bottomRows(n_pre + n_tgt) += proj_[g].forward(s, cache ? &cache->proj[g] : nullptr);
      }
    }
  }
  const Mat n = layer_norm(h.bottomRows(n_tgt), cache ? &cache->final_ln : nullptr);
  Mat v = head_.forward(n, cache ? &cache->head : nullptr);
  if (!v.allFinite()) throw std::runtime_error("forward: non-finite velocity (diverged parameters or inputs)");
  return v;
}

void Model::backward(const Mat& dv, const ModelCache& c) {
  const int per = cfg_.tokenizer.tokens_per_frame(), d = cfg_.dim;
  const int n_ref = c.n_ref, n_pre = c.n_pre, n_tgt = c.n_tgt;
  const int len = n_ref + n_pre + n_tgt;
  Mat dh = Mat::Zero(len, d);
  dh.bottomRows(n_tgt) = layer_norm_backward(head_.backward(dv, c.head), c.final_ln);
  Mat dtext = Mat::Zero(cfg_.text_len, d);
  Mat ds;
  if (c.use_scene) ds = Mat::Zero(n_pre + n_tgt, d);

  for (int g = cfg_.groups() - 1; g >= 0; --g) {
    for (int i = cfg_.control_every - 1; i >= 0; --i) {
      const int b = g * cfg_.control_every + i;
      if (i == 0 && c.use_scene) {
        ds += proj_[g].backward(dh.bottomRows(n_pre + n_tgt), c.proj[g]);
        ds = control_[g].backward(ds, c.control[g], dtext);
      }
      dh = main_[b].backward(dh, c.main[b], dtext);
    }
  }

  RowVec dte = RowVec::Zero(d);
  for (int r = 0; r < len; ++r) {
    const int seg = r < n_ref ? kSegRef : (r < n_ref + n_pre ? kSegPreceding : kSegTarget);
    if (pos_->requires_grad) pos_->grad.row(r % per) += dh.row(r);
    if (seg_video_->requires_grad) seg_video_->grad.row(seg) += dh.row(r);
    if (seg != kSegRef && temporal_->requires_grad) temporal_->grad.row((r - n_ref) / per) += dh.row(r);
    dte += dh.row(r);
  }
  in_proj_.backward(dh, c.in_proj);
  if (c.use_scene) {
    for (int r = 0; r < n_pre + n_tgt; ++r) {
      if (pos_->requires_grad) pos_->grad.row(r % per) += ds.row(r);
      if (seg_scene_->requires_grad) seg_scene_->grad.row(r < n_pre ? 0 : 1) += ds.row(r);
      if (temporal_->requires_grad) temporal_->grad.row(r / per) += ds.row(r);
      dte += ds.row(r);
    }
    cn_in_.backward(ds, c.cn_in);
  }

  const Mat dact = time2_.backward(dte, c.time2);
  const Mat dpre = dact.array() * c.time_pre.unaryExpr([](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  }).array();
  time1_.backward(dpre, c.time1);

  if (text_table_->requires_grad) {
    text_table_->grad.row(c.instruction) += Eigen::Map<const RowVec>(dtext.data(), dtext.size());
  }
}

}  // namespace scenemem::gen
