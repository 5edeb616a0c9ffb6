// Copyright 2026 The compexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "compexp/tensor.hpp"

namespace compexp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable parameters plus adaptive-moment optimizer state.
///
/// Entries keep insertion order, which fixes the serialized layout. The file
/// format ("CXPARAMS", version 1, little-endian) is:
///   magic "CXPARAMS" | u32 version | u64 tensor count
///   per tensor: u32 name length | name bytes | u8 dtype (0 = float64)
///               | u8 rank | u64 dims[rank] | raw float64 data
/// Optimizer state is not serialized; loading starts a fresh optimizer.
class ParamStore {
 public:
  /// Registers a new leaf parameter. Throws if the name already exists.
  Tensor create(const std::string& name, Shape shape, std::vector<double> values);
  Tensor create_zeros(const std::string& name, Shape shape);

  Tensor get(const std::string& name) const;  // throws on unknown name
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t total_elements() const;

  void zero_grads();
  double grad_norm() const;  // global L2 norm across every parameter
  /// Scales all gradients so the global norm is at most max_norm.
  void clip_grads(double max_norm);

  /// One adaptive-moment-estimation update with bias correction over all
  /// parameters. Any non-finite gradient aborts before touching state.
  void adam_step(const AdamConfig& cfg);
  std::uint64_t step_count() const { return step_; }
  void reset_optimizer();

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static ParamStore load(std::istream& in);
  static ParamStore load_file(const std::string& path);

  /// Deep copy: fresh tensors with identical values, fresh optimizer state.
  ParamStore clone() const;

  /// Value-only snapshot/restore. Restore writes into the existing tensors,
  /// so handles bound to them stay valid.
  std::map<std::string, std::vector<double>> snapshot_values() const;
  void restore_values(const std::map<std::string, std::vector<double>>& snapshot);

 private:
  struct Slot {
    Tensor tensor;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
  };

  std::map<std::string, Slot> slots_;
  std::vector<std::string> order_;
  std::uint64_t step_ = 0;
};

}  // namespace compexp
