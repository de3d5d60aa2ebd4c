// SPDX-License-Identifier: Apache-2.0
//
// Parameter storage for the generator: named double-precision tensors with
// gradients and AdamW moments, partitioned into training groups.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace scenemem::gen {

/// Tokens are rows.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class ParamGroup : int { Backbone = 0, ControlNet = 1, Lora = 2 };

const char* group_name(ParamGroup g);
ParamGroup parse_group(const std::string& name);

struct Param {
  std::string name;
  ParamGroup group = ParamGroup::Backbone;
  Mat value;
  Mat grad;
  Mat m, v;  // AdamW moments
  /// Frozen parameters still propagate input gradients but skip their own.
  bool requires_grad = true;

  Param(std::string n, ParamGroup g, int rows, int cols)
      : name(std::move(n)), group(g), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)),
        m(Mat::Zero(rows, cols)), v(Mat::Zero(rows, cols)) {}
};

class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Throws std::invalid_argument on a duplicate name.
  Param* add(const std::string& name, ParamGroup group, int rows, int cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
  std::size_t scalar_count(ParamGroup g) const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// FNV-1a over the raw bytes of every value in the group, in insertion order.
  uint64_t checksum(ParamGroup g) const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, Param*> index_;
};

void init_normal(Mat& m, double stddev, std::mt19937_64& rng);

}  // namespace scenemem::gen
