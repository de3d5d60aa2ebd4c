// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace scenemem::gen {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluB = 0.044715;

}  // namespace

Linear Linear::create(ParamStore& store, const std::string& name, ParamGroup group, int in, int out) {
  Linear l;
  l.w = store.add(name + ".w", group, in, out);
  l.b = store.add(name + ".b", group, 1, out);
  return l;
}

void Linear::init(std::mt19937_64& rng, double stddev) {
  init_normal(w->value, stddev, rng);
  b->value.setZero();
}

void Linear::attach_lora(ParamStore& store, const std::string& name, int rank, double alpha, std::mt19937_64& rng) {
  if (rank < 1) throw std::invalid_argument("lora rank must be >= 1");
  lora_a = store.add(name + ".lora_a", ParamGroup::Lora, in_dim(), rank);
  lora_b = store.add(name + ".lora_b", ParamGroup::Lora, rank, out_dim());
  init_normal(lora_a->value, 1.0 / std::sqrt(double(in_dim())), rng);
  lora_scale = alpha / rank;
}

Mat Linear::forward(const Mat& x, LinearCache* cache) const {
  if (x.cols() != w->value.rows()) throw std::invalid_argument("linear: input width mismatch");
  Mat y = x * w->value;
  y.rowwise() += b->value.row(0);
  if (lora_a) {
    Mat xa = x * lora_a->value;
    y.noalias() += lora_scale * (xa * lora_b->value);
    if (cache) cache->xa = std::move(xa);
  }
  if (cache) cache->x = x;
  return y;
}

Mat Linear::backward(const Mat& dy, const LinearCache& c) const {
  if (w->requires_grad) w->grad.noalias() += c.x.transpose() * dy;
  if (b->requires_grad) b->grad += dy.colwise().sum();
  Mat dx = dy * w->value.transpose();
  if (lora_a) {
    const Mat dxa = lora_scale * (dy * lora_b->value.transpose());
    if (lora_b->requires_grad) lora_b->grad.noalias() += lora_scale * (c.xa.transpose() * dy);
    if (lora_a->requires_grad) lora_a->grad.noalias() += c.x.transpose() * dxa;
    dx.noalias() += dxa * lora_a->value.transpose();
  }
  return dx;
}

Mat layer_norm(const Mat& x, LayerNormCache* cache) {
  const double n = static_cast<double>(x.cols());
  Mat y(x.rows(), x.cols());
  Eigen::VectorXd inv(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mu).square().sum() / n;
    inv[r] = 1.0 / std::sqrt(var + kLnEps);
    y.row(r) = (x.row(r).array() - mu) * inv[r];
  }
  if (cache) {
    cache->y = y;
    cache->inv_std = inv;
  }
  return y;
}

Mat layer_norm_backward(const Mat& dy, const LayerNormCache& c) {
  const double n = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mdy = dy.row(r).sum() / n;
    const double mdyy = dy.row(r).dot(c.y.row(r)) / n;
    dx.row(r) = c.inv_std[r] * (dy.row(r).array() - mdy - c.y.row(r).array() * mdyy);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluA * (x + kGeluB * x * x * x))); }

double gelu_grad(double x) {
  const double th = std::tanh(kGeluA * (x + kGeluB * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluA * (1.0 + 3.0 * kGeluB * x * x);
}

Attention Attention::create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int heads) {
  if (heads < 1 || dim % heads != 0) throw std::invalid_argument("attention: dim must be divisible by heads");
  Attention a;
  a.q = Linear::create(store, name + ".q", group, dim, dim);
  a.k = Linear::create(store, name + ".k", group, dim, dim);
  a.v = Linear::create(store, name + ".v", group, dim, dim);
  a.o = Linear::create(store, name + ".o", group, dim, dim);
  a.heads = heads;
  return a;
}

Mat Attention::forward(const Mat& xq, const Mat& xkv, AttentionCache* cache) const {
  const int dim = q.out_dim(), dh = dim / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  Mat Q = q.forward(xq, cache ? &cache->q : nullptr);
  Mat K = k.forward(xkv, cache ? &cache->k : nullptr);
  Mat V = v.forward(xkv, cache ? &cache->v : nullptr);
  Mat concat(xq.rows(), dim);
  if (cache) cache->probs.resize(heads);
  for (int h = 0; h < heads; ++h) {
    Mat s = scale * (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    concat.middleCols(h * dh, dh).noalias() = s * V.middleCols(h * dh, dh);
    if (cache) cache->probs[h] = std::move(s);
  }
  Mat out = o.forward(concat, cache ? &cache->o : nullptr);
  if (cache) {
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->concat = std::move(concat);
  }
  return out;
}

Mat Attention::backward(const Mat& dy, const AttentionCache& c, Mat& dxkv) const {
  const int dim = q.out_dim(), dh = dim / heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  const Mat dconcat = o.backward(dy, c.o);
  Mat dQ(c.Q.rows(), dim), dK(c.K.rows(), dim), dV(c.V.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const Mat& P = c.probs[h];
    const auto dO = dconcat.middleCols(h * dh, dh);
    dV.middleCols(h * dh, dh).noalias() = P.transpose() * dO;
    Mat dP = dO * c.V.middleCols(h * dh, dh).transpose();
    // Softmax backward, row by row.
    for (Eigen::Index r = 0; r < dP.rows(); ++r) {
      const double dot = dP.row(r).dot(P.row(r));
      dP.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
    }
    dQ.middleCols(h * dh, dh).noalias() = scale * (dP * c.K.middleCols(h * dh, dh));
    dK.middleCols(h * dh, dh).noalias() = scale * (dP.transpose() * c.Q.middleCols(h * dh, dh));
  }
  dxkv += k.backward(dK, c.k);
  dxkv += v.backward(dV, c.v);
  return q.backward(dQ, c.q);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int hidden) {
  FeedForward f;
  f.l1 = Linear::create(store, name + ".fc1", group, dim, hidden);
  f.l2 = Linear::create(store, name + ".fc2", group, hidden, dim);
  return f;
}

Mat FeedForward::forward(const Mat& x, FeedForwardCache* cache) const {
  Mat pre = l1.forward(x, cache ? &cache->l1 : nullptr);
  const Mat act = pre.unaryExpr([](double v) { return gelu(v); });
  Mat out = l2.forward(act, cache ? &cache->l2 : nullptr);
  if (cache) cache->pre = std::move(pre);
  return out;
}

Mat FeedForward::backward(const Mat& dy, const FeedForwardCache& c) const {
  const Mat dact = l2.backward(dy, c.l2);
  const Mat dpre = dact.array() * c.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  return l1.backward(dpre, c.l1);
}

Block Block::create(ParamStore& store, const std::string& name, ParamGroup group, int dim, int heads, int hidden) {
  Block b;
  b.self_attn = Attention::create(store, name + ".sa", group, dim, heads);
  b.cross_attn = Attention::create(store, name + ".ca", group, dim, heads);
  b.ffn = FeedForward::create(store, name + ".ffn", group, dim, hidden);
  return b;
}

std::vector<Linear*> Block::linears() {
  return {&self_attn.q,  &self_attn.k,  &self_attn.v,  &self_attn.o, &cross_attn.q,
          &cross_attn.k, &cross_attn.v, &cross_attn.o, &ffn.l1,      &ffn.l2};
}

std::vector<const Linear*> Block::linears() const {
  return {&self_attn.q,  &self_attn.k,  &self_attn.v,  &self_attn.o, &cross_attn.q,
          &cross_attn.k, &cross_attn.v, &cross_attn.o, &ffn.l1,      &ffn.l2};
}

void Block::init(std::mt19937_64& rng, int dim) {
  for (Linear* l : linears()) l->init(rng, 1.0 / std::sqrt(double(l->in_dim())));
  // Residual branches start small so a deep stack stays close to identity.
  const double out_std = 0.5 / std::sqrt(double(dim));
  init_normal(self_attn.o.w->value, out_std, rng);
  init_normal(cross_attn.o.w->value, out_std, rng);
  init_normal(ffn.l2.w->value, out_std / 2, rng);
}

void Block::attach_lora(ParamStore& store, const std::string& name, int rank, double alpha, std::mt19937_64& rng) {
  const char* names[] = {"sa.q", "sa.k", "sa.v", "sa.o", "ca.q", "ca.k", "ca.v", "ca.o", "ffn.fc1", "ffn.fc2"};
  auto ls = linears();
  for (std::size_t i = 0; i < ls.size(); ++i) ls[i]->attach_lora(store, name + "." + names[i], rank, alpha, rng);
}

Mat Block::forward(const Mat& h, const Mat& text, BlockCache* c) const {
  Mat x = h;
  {
    const Mat n = layer_norm(x, c ? &c->ln1 : nullptr);
    x += self_attn.forward(n, n, c ? &c->sa : nullptr);
  }
  {
    const Mat n = layer_norm(x, c ? &c->ln2 : nullptr);
    x += cross_attn.forward(n, text, c ? &c->ca : nullptr);
  }
  {
    const Mat n = layer_norm(x, c ? &c->ln3 : nullptr);
    x += ffn.forward(n, c ? &c->ff : nullptr);
  }
  return x;
}

Mat Block::backward(const Mat& dy, const BlockCache& c, Mat& dtext) const {
  Mat dx = dy;
  dx += layer_norm_backward(ffn.backward(dx, c.ff), c.ln3);
  dx += layer_norm_backward(cross_attn.backward(dx, c.ca, dtext), c.ln2);
  {
    Mat dn_kv = Mat::Zero(dx.rows(), dx.cols());
    Mat dn = self_attn.backward(dx, c.sa, dn_kv);
    dn += dn_kv;
    dx += layer_norm_backward(dn, c.ln1);
  }
  return dx;
}

void copy_block_weights(const Block& from, Block& to) {
  const auto src = from.linears();
  auto dst = to.linears();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->w->value = src[i]->w->value;
    dst[i]->b->value = src[i]->b->value;
  }
}

}  // namespace scenemem::gen
