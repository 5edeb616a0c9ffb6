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

#include "compexp/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "compexp/io.hpp"

namespace compexp {

namespace {
constexpr char kMagic[] = "CXPARAMS";
constexpr std::uint32_t kVersion = 1;
}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, std::vector<double> values) {
  if (slots_.count(name))
    throw std::invalid_argument("ParamStore: duplicate parameter \"" + name + "\"");
  Tensor t = Tensor::leaf(std::move(values), std::move(shape));
  slots_.emplace(name, Slot{t, {}, {}});
  order_.push_back(name);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
  std::vector<double> zeros(shape_numel(shape), 0.0);
  return create(name, std::move(shape), std::move(zeros));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end())
    throw std::out_of_range("ParamStore: unknown parameter \"" + name + "\"");
  return it->second.tensor;
}

bool ParamStore::contains(const std::string& name) const { return slots_.count(name) != 0; }

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, slot] : slots_) n += slot.tensor.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, slot] : slots_) slot.tensor.zero_grad();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, slot] : slots_)
    for (double g : slot.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

void ParamStore::clip_grads(double max_norm) {
  const double norm = grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const double factor = max_norm / norm;
  for (auto& [name, slot] : slots_) {
    if (!slot.tensor.has_grad()) continue;
    auto node = slot.tensor.node();
    for (double& g : node->grad) g *= factor;
  }
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  for (const auto& name : order_) {
    const Slot& slot = slots_.at(name);
    for (double g : slot.tensor.grad())
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in \"" + name +
                                 "\", step aborted");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (const auto& name : order_) {
    Slot& slot = slots_.at(name);
    auto node = slot.tensor.node();
    const std::size_t n = node->value.size();
    if (slot.m.size() != n) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
    }
    node->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = node->grad[i];
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      node->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void ParamStore::reset_optimizer() {
  step_ = 0;
  for (auto& [name, slot] : slots_) {
    slot.m.clear();
    slot.v.clear();
  }
}

void ParamStore::save(std::ostream& out) const {
  out.write(kMagic, 8);
  io::write_u32(out, kVersion);
  io::write_u64(out, order_.size());
  for (const auto& name : order_) {
    const Slot& slot = slots_.at(name);
    io::write_string(out, name);
    out.put(static_cast<char>(0));  // dtype float64
    const Shape& shape = slot.tensor.shape();
    out.put(static_cast<char>(shape.size()));
    for (std::size_t d : shape) io::write_u64(out, d);
    io::write_f64_array(out, slot.tensor.values());
  }
  if (!out) throw io::FormatError("ParamStore::save: write failed");
}

void ParamStore::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ParamStore: cannot open \"" + path + "\" for writing");
  save(out);
}

ParamStore ParamStore::load(std::istream& in) {
  io::expect_magic(in, kMagic, "parameter file");
  const std::uint32_t version = io::read_u32(in, "version");
  if (version != kVersion)
    throw io::FormatError("parameter file: unsupported version " + std::to_string(version));
  const std::uint64_t count = io::read_u64(in, "tensor count");
  ParamStore store;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = io::read_string(in, "tensor name");
    const int dtype = in.get();
    if (dtype != 0)
      throw io::FormatError("parameter file: unsupported dtype " + std::to_string(dtype) +
                            " for \"" + name + "\"");
    const int rank = in.get();
    if (rank < 0 || rank > 8) throw io::FormatError("parameter file: bad rank for \"" + name + "\"");
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = io::read_u64(in, "dim");
    std::vector<double> data(shape_numel(shape));
    io::read_f64_array(in, data, name.c_str());
    store.create(name, std::move(shape), std::move(data));
  }
  return store;
}

ParamStore ParamStore::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ParamStore: cannot open \"" + path + "\"");
  return load(in);
}

std::map<std::string, std::vector<double>> ParamStore::snapshot_values() const {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& [name, slot] : slots_) snap[name] = slot.tensor.values();
  return snap;
}

void ParamStore::restore_values(const std::map<std::string, std::vector<double>>& snapshot) {
  for (const auto& [name, values] : snapshot) {
    auto it = slots_.find(name);
    if (it == slots_.end() || it->second.tensor.numel() != values.size())
      throw std::invalid_argument("restore_values: snapshot does not match store at \"" + name +
                                  "\"");
    it->second.tensor.node()->value = values;
  }
}

ParamStore ParamStore::clone() const {
  ParamStore copy;
  for (const auto& name : order_) {
    const Slot& slot = slots_.at(name);
    copy.create(name, slot.tensor.shape(), slot.tensor.values());
  }
  return copy;
}

}  // namespace compexp
