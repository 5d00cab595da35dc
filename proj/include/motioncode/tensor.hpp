#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "motioncode/errors.hpp"

namespace motioncode {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_string(const Shape& dims);

/// Floating point width used by training front ends. Gradient checking
/// always instantiates the 64-bit path directly.
enum class Precision { Float32, Float64 };

void set_precision(Precision precision);
Precision precision();

/// Dense row-major tensor with an optional gradient buffer.
///
/// Copies share storage. Values are treated as immutable once an operation
/// has consumed the tensor; only optimizers and initializers write through
/// `mutable_values()`.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape dims, bool requires_grad = false);
  static Tensor from(Shape dims, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& dims() const { return impl_->dims; }
  std::size_t rank() const { return impl_->dims.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->dims.at(axis); }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const T> values() const { return impl_->values; }
  std::span<T> mutable_values() { return impl_->values; }
  T item() const;
  T at(std::size_t index) const { return impl_->values[index]; }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag) const { impl_->requires_grad = flag; }

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffers stay writable through const handles; values do not.
  std::span<T> mutable_grad() const { return impl_->grad; }
  /// Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }
  /// Stable address of the shared storage.
  const void* identity() const noexcept { return impl_.get(); }

 private:
  struct Impl {
    Shape dims;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

/// Records differentiable operations in execution order so that a single
/// reverse sweep can propagate gradients.
template <typename T>
class Tape {
 public:
  using Rule = std::function<void()>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A forward-only tape never records anything.
  static Tape inference() { return Tape(false); }

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// True when an operation over `inputs` must be recorded.
  bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, Rule rule);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradient
  /// buffers of every tensor touched by the tape are zeroed first. A tape
  /// can be replayed only once.
  void backward(Tensor<T> loss);

 private:
  struct Entry {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    Rule rule;
  };

  bool recording_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace motioncode
