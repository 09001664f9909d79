#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace percmap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// Accumulates d(loss)/d(input_i) into *grad_in[i]; grad_in[i] is null when
// input i does not require a gradient.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> grad_in)>;

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

}  // namespace detail

// Dense row-major double tensor with an optional gradient buffer. Copies are
// shallow (handles share storage); use detach() for a value copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Leaves only: op results are immutable.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return impl_->data[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node == nullptr; }
  std::span<const double> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  // Value copy with no history; requires_grad is off.
  Tensor detach() const;
  std::string op_name() const;

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op_result(std::string op, Shape shape, std::vector<double> data,
                               std::vector<Tensor> inputs, detail::BackwardFn backward);
};

// Builds the output of a differentiable op. Every forward result is checked
// for NaN/Inf (NumericalError). History is recorded only when an input
// requires a gradient.
Tensor make_op_result(std::string op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs, detail::BackwardFn backward);

// Topologically ordered op nodes reachable from a root tensor.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t num_nodes() const { return order_.size(); }
  const std::vector<detail::TensorImpl*>& order() const { return order_; }
  const Tensor& root() const { return root_; }

  // Reverse sweep; leaf gradients accumulate across calls.
  void backward() const;

 private:
  Tensor root_;
  std::vector<detail::TensorImpl*> order_;  // inputs before outputs
};

// Throws ContractError if `loss` is not a scalar.
void backward(const Tensor& loss);

}  // namespace percmap
