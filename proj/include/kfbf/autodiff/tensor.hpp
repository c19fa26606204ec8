#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kfbf::ad {

/// Dense row-major 2-D shape. Scalars are 1x1, vectors are 1xn or nx1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::int64_t tape_id = -1;  // index of the producing tape entry, -1 for leaves

  std::span<double> ensure_grad();
};

}  // namespace detail

/// Handle to an autodiff value. Copies share the same underlying node, so a
/// tensor captured by the tape and the one held by the caller see the same
/// gradient slot.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  std::int64_t tape_id() const { return node_->tape_id; }

  /// Write access for leaf tensors only (parameters updated by an optimizer
  /// between tapes). Throws ContractError for tape-produced tensors.
  std::span<double> mutable_data();

  /// Deep copy with a fresh node (grad dropped).
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend class Tape;
};

/// Backward rule: receives the output node (data and grad) and the input
/// nodes. Must accumulate into `inputs[i]->ensure_grad()` only for inputs
/// with `requires_grad` set.
using BackwardFn =
    std::function<void(const detail::Node& out, std::span<detail::Node* const> inputs)>;

/// Ordered record of differentiable operations. Entries are appended in
/// execution order, so inputs always precede the operations consuming them.
/// A tape built in inference mode records nothing and produces tensors that
/// never require gradients.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::kRecord; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Creates the output tensor of an operation. The backward rule is stored
  /// only when recording and at least one input requires a gradient.
  Tensor record(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                BackwardFn backward);
  Tensor record(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                BackwardFn backward);

  /// Reverse sweep from a scalar loss. Each entry is visited at most once, in
  /// reverse recorded order; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::shared_ptr<detail::Node> out;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn backward;
  };

  Mode mode_;
  std::vector<Entry> entries_;
};

/// Free-function form of Tape::backward.
void backward(const Tensor& loss, Tape& tape);

}  // namespace kfbf::ad
