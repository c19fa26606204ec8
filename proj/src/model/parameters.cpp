#include "kfbf/model/parameters.hpp"

#include <algorithm>

#include "kfbf/error.hpp"

namespace kfbf::model {

ad::Tensor& ParameterSet::add(std::string name, ad::Shape shape, ParamRole role,
                              std::size_t fan_in, bool output_layer) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  params_.push_back({std::move(name), role, fan_in, ad::Tensor::zeros(shape, true), output_layer});
  return params_.back().value;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const ad::Tensor& ParameterSet::get(const std::string& name) const {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  if (it == params_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->value;
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  out.params_.reserve(params_.size());
  for (const auto& p : params_) out.params_.push_back({p.name, p.role, p.fan_in, p.value.clone(true), p.output_layer});
  return out;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.params_.size() != params_.size()) {
    throw ContractError("assign_values: parameter sets differ in length");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& dst = params_[i];
    const auto& src = other.params_[i];
    if (dst.name != src.name || dst.value.shape() != src.value.shape()) {
      throw ContractError("assign_values: layout mismatch at '" + dst.name + "'");
    }
    std::ranges::copy(src.value.data(), dst.value.mutable_data().begin());
  }
}

}  // namespace kfbf::model
