#include "percmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "percmap/errors.hpp"

namespace percmap {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << ']';
  return ss.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  PERCMAP_REQUIRE(shape_numel(shape) == data.size(),
                  "tensor data length " + std::to_string(data.size()) + " does not match shape " +
                      shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  PERCMAP_REQUIRE(axis < rank(), "axis " + std::to_string(axis) + " out of range for shape " +
                                     shape_str(shape()));
  return impl_->shape[axis];
}

std::span<double> Tensor::mutable_data() {
  PERCMAP_REQUIRE(is_leaf(), "cannot mutate the output of an op");
  return impl_->data;
}

double Tensor::item() const {
  PERCMAP_REQUIRE(numel() == 1, "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  PERCMAP_REQUIRE(is_leaf(), "requires_grad can only be set on leaves");
  impl_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(impl_->shape, impl_->data, false); }

std::string Tensor::op_name() const { return impl_->node ? impl_->node->op : std::string("leaf"); }

Tensor make_op_result(std::string op, Shape shape, std::vector<double> data,
                      std::vector<Tensor> inputs, detail::BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value produced by " + op);
  }
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (needs) {
    out.impl_->requires_grad = true;
    out.impl_->node = std::make_shared<detail::Node>(
        detail::Node{std::move(op), std::move(inputs), std::move(backward)});
  }
  return out;
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  g.root_ = root;
  if (!root.defined() || root.is_leaf()) return g;

  // Iterative post-order DFS.
  std::unordered_set<detail::TensorImpl*> done;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{root.impl(), 0}};
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->node->inputs;
    if (next < inputs.size()) {
      const Tensor& in = inputs[next++];
      if (in.defined() && !in.is_leaf() && in.requires_grad() && !done.count(in.impl())) {
        stack.emplace_back(in.impl(), 0);
      }
      continue;
    }
    if (done.insert(impl).second) g.order_.push_back(impl);
    stack.pop_back();
  }
  return g;
}

void Graph::backward() const {
  if (!root_.defined() || !root_.requires_grad()) return;
  if (root_.is_leaf()) {
    auto& grad = root_.impl()->grad;
    grad.resize(root_.numel(), 0.0);
    for (auto& v : grad) v += 1.0;
    return;
  }

  std::unordered_map<detail::TensorImpl*, std::vector<double>> pending;
  pending[root_.impl()] = std::vector<double>(root_.numel(), 1.0);

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    auto found = pending.find(impl);
    if (found == pending.end()) continue;
    const std::vector<double> grad_out = std::move(found->second);
    pending.erase(found);

    const auto& inputs = impl->node->inputs;
    std::vector<std::vector<double>*> grad_in(inputs.size(), nullptr);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor& in = inputs[i];
      if (!in.defined() || !in.requires_grad()) continue;
      std::vector<double>* buf = in.is_leaf() ? &in.impl()->grad : &pending[in.impl()];
      if (buf->size() != in.numel()) buf->assign(in.numel(), 0.0);
      grad_in[i] = buf;
    }
    impl->node->backward(grad_out, grad_in);
  }
}

void backward(const Tensor& loss) {
  PERCMAP_REQUIRE(loss.defined() && loss.numel() == 1,
                  "backward() needs a scalar loss, got shape " +
                      (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  Graph::trace(loss).backward();
}

}  // namespace percmap
