// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsed/numerics/autograd.hpp"

namespace tsed {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered registry of a model's trainable parameters and non-trainable
/// buffers (batch-norm statistics, feature scaler). Buffers are referenced
/// by pointer, so the owning object must not move after registration.
class ParamStore {
 public:
  Var add_param(const std::string& name, Tensor init);
  void add_buffer(const std::string& name, Tensor* buffer);

  std::vector<Var>& params() { return params_; }
  const std::vector<Var>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return param_names_; }

  std::size_t param_count() const;
  void zero_grad();

  /// Parameters followed by buffers, in registration order.
  std::vector<NamedTensor> state() const;

  /// Copies values by name. Every entry of the store must be present in
  /// `state` with a matching shape; extra entries in `state` are an error
  /// unless `allow_extra` is set.
  void load_state(const std::vector<NamedTensor>& state, bool allow_extra = false);

  /// Copies every value from a store with identical layout.
  void copy_from(const ParamStore& other);

 private:
  std::vector<Var> params_;
  std::vector<std::string> param_names_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
};

}  // namespace tsed
