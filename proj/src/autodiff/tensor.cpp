#include "kfbf/autodiff/tensor.hpp"

#include <algorithm>

#include "kfbf/error.hpp"

namespace kfbf::ad {

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

std::span<double> detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(shape, 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape.size(), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (data.size() != shape.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape().str());
  return node_->data[0];
}

void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_data() {
  if (node_->tape_id >= 0) throw ContractError("mutable_data() on a tape-produced tensor");
  return node_->data;
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(shape(), node_->data, requires_grad);
}

Tensor Tape::record(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                    BackwardFn backward) {
  return record(shape, std::move(data), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tape::record(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                    BackwardFn backward) {
  const bool needs_grad =
      recording() && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = Tensor::from(shape, std::move(data), needs_grad);
  if (!needs_grad) return out;

  Entry entry;
  entry.out = out.node_;
  entry.inputs.reserve(inputs.size());
  for (const auto& in : inputs) entry.inputs.push_back(in.node_);
  entry.backward = std::move(backward);
  out.node_->tape_id = static_cast<std::int64_t>(entries_.size());
  entries_.push_back(std::move(entry));
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  loss.node_->ensure_grad()[0] += 1.0;

  std::vector<detail::Node*> raw;
  const auto last = loss.node_->tape_id;
  for (auto i = last; i >= 0; --i) {
    auto& entry = entries_[static_cast<std::size_t>(i)];
    if (entry.out->grad.empty()) continue;
    raw.clear();
    for (auto& in : entry.inputs) raw.push_back(in.get());
    entry.backward(*entry.out, raw);
  }
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace kfbf::ad
