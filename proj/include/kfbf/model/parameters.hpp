#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kfbf/autodiff/tensor.hpp"

namespace kfbf::model {

/// How a parameter is initialized; see training::he_init.
enum class ParamRole {
  kWeight,      // N(0, 2 / fan_in)
  kBias,        // zero
  kKanBase,     // beta, initialized like a weight
  kKanScale,    // gamma
  kKanSpline,   // spline coefficients
};

struct Parameter {
  std::string name;
  ParamRole role = ParamRole::kWeight;
  std::size_t fan_in = 0;
  ad::Tensor value;
  bool output_layer = false;  // belongs to the layer that emits beamformer entries
};

/// Ordered, named collection of every learnable tensor of a model.
class ParameterSet {
 public:
  ad::Tensor& add(std::string name, ad::Shape shape, ParamRole role, std::size_t fan_in,
                  bool output_layer = false);

  std::size_t size() const noexcept { return params_.size(); }
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;

  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& entries() noexcept { return params_; }
  const std::vector<Parameter>& entries() const noexcept { return params_; }

  void zero_grad();
  /// Deep copy, fresh tensors with requires_grad set.
  ParameterSet clone() const;
  /// Copies values (not gradients) from a set with identical layout.
  void assign_values(const ParameterSet& other);

 private:
  std::vector<Parameter> params_;
};

}  // namespace kfbf::model
