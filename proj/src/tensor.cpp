#include "motioncode/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace motioncode {

namespace {
std::atomic<Precision> g_precision{Precision::Float32};
}

std::size_t shape_size(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_string(const Shape& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << 'x';
    out << dims[i];
  }
  out << ']';
  return out.str();
}

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape dims, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(shape_size(dims), T(0));
  impl->dims = std::move(dims);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape dims, std::vector<T> values, bool requires_grad) {
  if (shape_size(dims) != values.size()) {
    throw InvalidArgument("tensor of shape " + shape_string(dims) + " cannot hold " +
                          std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->dims = std::move(dims);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw InvalidArgument("item() on tensor of shape " + shape_string(dims()));
  }
  return impl_->values[0];
}

template <typename T>
void Tensor<T>::zero_grad() const {
  impl_->grad.assign(impl_->values.size(), T(0));
}

template <typename T>
bool Tape<T>::needs_grad(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T> output, Rule rule) {
  if (consumed_) throw InvalidArgument("tape already replayed; record a new step");
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(rule)});
}

template <typename T>
void Tape<T>::backward(Tensor<T> loss) {
  if (consumed_) throw InvalidArgument("backward called twice on the same tape");
  if (!loss.defined() || loss.size() != 1) {
    throw InvalidArgument("backward requires a scalar loss");
  }
  consumed_ = true;
  std::unordered_set<const void*> cleared;
  auto clear = [&cleared](const Tensor<T>& t) {
    if (cleared.insert(t.identity()).second) t.zero_grad();
  };
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in.requires_grad()) clear(in);
    }
    clear(e.output);
  }
  if (!loss.has_grad()) loss.zero_grad();
  loss.mutable_grad()[0] = T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->rule();
  entries_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace motioncode
