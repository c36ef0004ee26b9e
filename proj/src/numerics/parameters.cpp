// SPDX-License-Identifier: Apache-2.0
#include "tsed/numerics/parameters.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace tsed {

Var ParamStore::add_param(const std::string& name, Tensor init) {
  for (const auto& n : param_names_) {
    if (n == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  Var v(std::move(init), true);
  params_.push_back(v);
  param_names_.push_back(name);
  return v;
}

void ParamStore::add_buffer(const std::string& name, Tensor* buffer) { buffers_.emplace_back(name, buffer); }

std::size_t ParamStore::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<NamedTensor> ParamStore::state() const {
  std::vector<NamedTensor> out;
  out.reserve(params_.size() + buffers_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({param_names_[i], params_[i].value()});
  for (const auto& [name, buf] : buffers_) out.push_back({name, *buf});
  return out;
}

void ParamStore::load_state(const std::vector<NamedTensor>& state, bool allow_extra) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : state) by_name[e.name] = &e.value;
  std::set<std::string> used;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing entry '" + name + "'");
    if (it->second->shape() != shape) {
      throw std::runtime_error("checkpoint entry '" + name + "' has shape " + shape_str(it->second->shape()) +
                               ", model expects " + shape_str(shape));
    }
    used.insert(name);
    return *it->second;
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i].mutable_value() = fetch(param_names_[i], params_[i].shape());
  }
  for (auto& [name, buf] : buffers_) {
    // Buffers such as batch-norm statistics may still be unallocated.
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint is missing entry '" + name + "'");
    if (!buf->empty() && buf->shape() != it->second->shape()) {
      throw std::runtime_error("checkpoint entry '" + name + "' has shape " + shape_str(it->second->shape()) +
                               ", model expects " + shape_str(buf->shape()));
    }
    *buf = *it->second;
    used.insert(name);
  }
  if (!allow_extra && used.size() != by_name.size()) {
    for (const auto& [name, _] : by_name) {
      if (!used.count(name)) throw std::runtime_error("checkpoint has unexpected entry '" + name + "'");
    }
  }
}

void ParamStore::copy_from(const ParamStore& other) {
  if (other.params_.size() != params_.size() || other.buffers_.size() != buffers_.size()) {
    throw std::invalid_argument("copy_from: parameter layouts differ");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].shape() != other.params_[i].shape()) throw std::invalid_argument("copy_from: shape mismatch");
    params_[i].mutable_value() = other.params_[i].value();
  }
  for (std::size_t i = 0; i < buffers_.size(); ++i) *buffers_[i].second = *other.buffers_[i].second;
}

}  // namespace tsed
