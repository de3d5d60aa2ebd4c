// SPDX-License-Identifier: Apache-2.0

#include "scenemem/gen/params.hpp"

#include <stdexcept>

namespace scenemem::gen {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::ControlNet: return "controlnet";
    case ParamGroup::Lora: return "lora";
  }
  return "?";
}

ParamGroup parse_group(const std::string& name) {
  if (name == "backbone") return ParamGroup::Backbone;
  if (name == "controlnet") return ParamGroup::ControlNet;
  if (name == "lora") return ParamGroup::Lora;
  throw std::invalid_argument("unknown parameter group '" + name + "'");
}

ParamStore::ParamStore(const ParamStore& other) { *this = other; }

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_.clear();
  for (const auto& p : other.params_) {
    params_.push_back(std::make_unique<Param>(*p));
    index_[p->name] = params_.back().get();
  }
  return *this;
}

Param* ParamStore::add(const std::string& name, ParamGroup group, int rows, int cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Param>(name, group, rows, cols));
  index_[name] = params_.back().get();
  return params_.back().get();
}

Param* ParamStore::find(const std::string& name) {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

Param& ParamStore::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw std::out_of_range("no parameter '" + name + "'");
  return *p;
}

const Param& ParamStore::at(const std::string& name) const {
  const Param* p = find(name);
  if (!p) throw std::out_of_range("no parameter '" + name + "'");
  return *p;
}

std::size_t ParamStore::scalar_count(ParamGroup g) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->group == g) n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

uint64_t ParamStore::checksum(ParamGroup g) const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params_) {
    if (p->group != g) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(p->value.size()); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

void init_normal(Mat& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
}

}  // namespace scenemem::gen
