#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydra {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AxisError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Fixed alignment so vectorized kernels split every buffer the same way and
// results do not depend on where the allocator placed it.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

struct TensorStorage {
  Shape shape;
  AlignedBuffer data;
};

// Dense row-major double tensor with reference semantics. Copies of a Tensor
// share storage and identity; the tape keys gradients on that identity.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, AlignedBuffer data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
  static Tensor from(std::initializer_list<double> values);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writable view; only for filling freshly created tensors and optimizer updates.
  std::span<double> mutable_data() { return impl_->data; }
  const double* ptr() const { return impl_->data.data(); }
  double* mutable_ptr() { return impl_->data.data(); }

  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t i, std::size_t j) const { return impl_->data[i * impl_->shape[1] + j]; }
  double item() const;

  // Deep copy with a fresh identity.
  Tensor clone() const;

  const TensorStorage* id() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorStorage> impl_;
};

bool all_finite(std::span<const double> values);

}  // namespace hydra
