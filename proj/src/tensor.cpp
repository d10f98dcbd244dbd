#include "fscn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fscn {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  impl_->shape = shape;
  impl_->data.assign(shape.numel(), T(0));
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(shape);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1, 1, 1, 1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape().str());
  }
  return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (impl_->grad.empty() && !impl_->data.empty()) {
    impl_->grad.assign(impl_->data.size(), T(0));
  }
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(impl_->shape, impl_->data, impl_->requires_grad);
  return out;
}

template <typename T>
bool Graph<T>::wants(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t && t->defined() && t->requires_grad(); });
}

template <typename T>
void Graph<T>::record(std::string_view op, std::function<void()> backward_fn) {
  nodes_.push_back(Node{std::string(op), std::move(backward_fn)});
}

template <typename T>
std::vector<std::string> Graph<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& node : nodes_) names.push_back(node.op);
  return names;
}

template <typename T>
void Graph<T>::backward(Tensor<T>& loss) {
  if (consumed_) {
    throw std::logic_error("backward called twice on the same graph");
  }
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward on a loss that does not require grad");
  }
  loss.grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
  }
  consumed_ = true;
  nodes_.clear();
}

template <typename T>
void Graph<T>::clear() {
  nodes_.clear();
  consumed_ = false;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace fscn
