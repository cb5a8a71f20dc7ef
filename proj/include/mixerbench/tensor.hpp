#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mixerbench {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class MemoryBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Element types and shapes
// ---------------------------------------------------------------------------

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Calls fn(T{}) with T = float or double matching dtype.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f64) return fn(double{});
  return fn(float{});
}

// ---------------------------------------------------------------------------
// Allocation accounting
//
// Every tensor buffer is registered here. The budget simulates device memory:
// an allocation that would push live bytes over it throws
// MemoryBudgetExceeded before anything is allocated.
// ---------------------------------------------------------------------------

struct AllocStats {
  std::size_t current_bytes = 0;
  std::size_t peak_bytes = 0;
};

AllocStats alloc_stats();
// Sets the high-water mark to the current live byte count.
void reset_peak();
// 0 disables the budget.
void set_memory_budget(std::size_t bytes);
std::size_t memory_budget();

class MemoryBudgetScope {
 public:
  explicit MemoryBudgetScope(std::size_t bytes);
  ~MemoryBudgetScope();
  MemoryBudgetScope(const MemoryBudgetScope&) = delete;
  MemoryBudgetScope& operator=(const MemoryBudgetScope&) = delete;

 private:
  std::size_t previous_;
};

// Non-finite checks run after every primitive while enabled (default).
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

namespace detail {

class Storage {
 public:
  explicit Storage(std::size_t bytes);
  ~Storage();
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  std::byte* data() { return ptr_; }
  const std::byte* data() const { return ptr_; }
  std::size_t bytes() const { return bytes_; }

 private:
  std::byte* ptr_ = nullptr;
  std::size_t bytes_ = 0;
};

struct TensorImpl {
  std::shared_ptr<Storage> storage;
  Shape shape;
  DType dtype = DType::f32;
  bool requires_grad = false;
  std::uint64_t id = 0;
};

std::uint64_t next_tensor_id();

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
//
// A handle to a dense row-major buffer. Copies of a Tensor share the buffer.
// Primitives never write into their inputs; only parameter updates and
// initialisers go through mutable_data().
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;

  static Tensor empty(Shape shape, DType dtype = DType::f32);
  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from(std::span<const double> values, Shape shape, DType dtype = DType::f32);
  static Tensor from(std::initializer_list<double> values, Shape shape, DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;  // negative axes count from the back
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const;
  DType dtype() const;
  std::size_t nbytes() const { return static_cast<std::size_t>(numel()) * dtype_size(dtype()); }
  std::uint64_t id() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  template <class T>
  std::span<const T> data() const {
    check_type(dtype_of<T>());
    return {reinterpret_cast<const T*>(impl_->storage->data()), static_cast<std::size_t>(numel())};
  }
  template <class T>
  std::span<T> mutable_data() {
    check_type(dtype_of<T>());
    return {reinterpret_cast<T*>(impl_->storage->data()), static_cast<std::size_t>(numel())};
  }

  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;
  std::vector<double> to_vector() const;

  Tensor clone() const;
  Tensor detach() const;  // shares the buffer, drops gradient tracking
  Tensor to(DType dtype) const;
  // Same buffer, new shape. Not recorded; use reshape() for tracked values.
  Tensor view(Shape shape) const;

  // Overwrites this tensor's buffer with other's values (same shape).
  void assign(const Tensor& other);

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  void check_type(DType dtype) const;

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl>);
};

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);

// ---------------------------------------------------------------------------
// Reverse-mode tape
// ---------------------------------------------------------------------------

// Returns one gradient per recorded input (undefined where none is needed).
using Adjoint = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

class Gradients {
 public:
  // Gradient for a tracked leaf; zeros when the leaf was not reached.
  Tensor operator[](const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::uint64_t, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, const std::vector<const Tensor*>& inputs, const Tensor& output,
              Adjoint adjoint);

  // Replays adjoints in reverse order. A tape supports one backward pass;
  // saved intermediates are released as their entries are consumed.
  Gradients backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return entries_.size(); }

  // The tape that primitives record onto in this thread, or nullptr.
  static Tape* active();

 private:
  struct Entry {
    const char* op;
    std::vector<std::uint64_t> input_ids;  // 0 where the input is untracked
    std::uint64_t output_id;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;

  friend class TapeScope;
};

// Makes `tape` the active tape for this thread; nullptr pauses recording.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace mixerbench
