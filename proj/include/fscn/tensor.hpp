#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fscn {

/// Raised when operands disagree on a dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NCHW extents. Every tensor in the stack is 4-D; scalars are (1,1,1,1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense NCHW array with an optional gradient buffer.
///
/// A Tensor is a reference-counted handle: copying it aliases the same
/// storage, the way the autograd tape and the model share parameters. Use
/// clone() for an independent deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  T& at(int n, int c, int h, int w) { return impl_->data[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return impl_->data[offset(n, c, h, w)]; }
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<T> grad();
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad();
  void drop_grad() { impl_->grad = {}; }

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }

  std::shared_ptr<Impl> impl_;
};

enum class GradMode { kEnabled, kDisabled };

/// Tape of executed differentiable operations.
///
/// Ops append a node after computing their forward result, so the tape is
/// topologically ordered by construction. backward() replays it once in
/// reverse; the tape is consumed afterwards.
template <typename T>
class Graph {
 public:
  explicit Graph(GradMode mode = GradMode::kEnabled) : mode_(mode) {}

  bool recording() const { return mode_ == GradMode::kEnabled && !consumed_; }

  /// True when an op over these inputs must be taped.
  bool wants(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::string_view op, std::function<void()> backward_fn);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;

  void backward(Tensor<T>& loss);
  void clear();

  /// When set, relu appends one sign bit (input > 0) per element it sees.
  /// Used to tell whether a finite-difference stencil crossed a kink.
  void trace_relu(std::vector<std::uint8_t>* signs) { relu_signs_ = signs; }
  std::vector<std::uint8_t>* relu_trace() const { return relu_signs_; }

 private:
  struct Node {
    std::string op;
    std::function<void()> backward_fn;
  };
  GradMode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::vector<std::uint8_t>* relu_signs_ = nullptr;
};

/// Seeds d(loss)/d(loss) = 1 and propagates through the tape.
template <typename T>
void backward(Tensor<T>& loss, Graph<T>& graph) {
  graph.backward(loss);
}

template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace fscn
