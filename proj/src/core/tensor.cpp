#include "mixerbench/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <new>
#include <sstream>

#include "mixerbench/ops.hpp"

namespace mixerbench {

std::size_t dtype_size(DType dtype) { return dtype == DType::f64 ? 8 : 4; }

const char* dtype_name(DType dtype) { return dtype == DType::f64 ? "float64" : "float32"; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Allocation accounting
// ---------------------------------------------------------------------------

namespace {

std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
std::atomic<std::size_t> g_budget{0};
std::atomic<bool> g_finite_checks{true};
std::atomic<std::uint64_t> g_next_id{1};

constexpr std::align_val_t kAlign{64};

}  // namespace

AllocStats alloc_stats() { return {g_current.load(), g_peak.load()}; }

void reset_peak() { g_peak.store(g_current.load()); }

void set_memory_budget(std::size_t bytes) { g_budget.store(bytes); }

std::size_t memory_budget() { return g_budget.load(); }

MemoryBudgetScope::MemoryBudgetScope(std::size_t bytes) : previous_(memory_budget()) {
  set_memory_budget(bytes);
}
MemoryBudgetScope::~MemoryBudgetScope() { set_memory_budget(previous_); }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }

FiniteCheckScope::FiniteCheckScope(bool enabled) : previous_(finite_checks_enabled()) {
  set_finite_checks(enabled);
}
FiniteCheckScope::~FiniteCheckScope() { set_finite_checks(previous_); }

namespace detail {

Storage::Storage(std::size_t bytes) : bytes_(bytes) {
  const std::size_t budget = g_budget.load();
  const std::size_t now = g_current.fetch_add(bytes) + bytes;
  if (budget != 0 && now > budget) {
    g_current.fetch_sub(bytes);
    throw MemoryBudgetExceeded("allocation of " + std::to_string(bytes) +
                               " bytes exceeds memory budget of " + std::to_string(budget) +
                               " bytes");
  }
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
  if (bytes > 0) {
    try {
      ptr_ = static_cast<std::byte*>(::operator new(bytes, kAlign));
    } catch (...) {
      g_current.fetch_sub(bytes);
      throw;
    }
  }
}

Storage::~Storage() {
  if (ptr_) ::operator delete(ptr_, kAlign);
  g_current.fetch_sub(bytes_);
}

std::uint64_t next_tensor_id() { return g_next_id.fetch_add(1); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::empty(Shape shape, DType dtype) {
  const auto n = shape_numel(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->storage = std::make_shared<detail::Storage>(static_cast<std::size_t>(n) * dtype_size(dtype));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->id = detail::next_tensor_id();
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  if (t.nbytes()) std::memset(t.impl_->storage->data(), 0, t.nbytes());
  return t;
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = empty(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from(std::span<const double> values, Shape shape, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  Tensor t = empty(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from(std::initializer_list<double> values, Shape shape, DType dtype) {
  return from(std::span<const double>(values.begin(), values.size()), std::move(shape), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

const Shape& Tensor::shape() const {
  if (!impl_) throw Error("use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

DType Tensor::dtype() const {
  if (!impl_) throw Error("use of undefined tensor");
  return impl_->dtype;
}

std::uint64_t Tensor::id() const { return impl_ ? impl_->id : 0; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!impl_) throw Error("use of undefined tensor");
  impl_->requires_grad = value;
  return *this;
}

void Tensor::check_type(DType dtype) const {
  if (!impl_) throw Error("use of undefined tensor");
  if (impl_->dtype != dtype)
    throw Error(std::string("dtype mismatch: tensor is ") + dtype_name(impl_->dtype) +
                ", accessed as " + dtype_name(dtype));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return dispatch(dtype(), [&](auto tag) -> double { return static_cast<double>(data<decltype(tag)>()[0]); });
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("at(): index rank mismatch for " + shape_str(s));
  std::int64_t flat = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= s[i]) throw ShapeError("at(): index out of range for " + shape_str(s));
    flat = flat * s[i] + v;
    ++i;
  }
  return dispatch(dtype(), [&](auto tag) -> double {
    return static_cast<double>(data<decltype(tag)>()[static_cast<std::size_t>(flat)]);
  });
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&](auto tag) {
    auto d = data<decltype(tag)>();
    return std::vector<double>(d.begin(), d.end());
  });
}

Tensor Tensor::clone() const {
  Tensor t = empty(shape(), dtype());
  if (nbytes()) std::memcpy(t.impl_->storage->data(), impl_->storage->data(), nbytes());
  return t;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>(*impl_);
  impl->requires_grad = false;
  impl->id = detail::next_tensor_id();
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor t = empty(shape(), target);
  dispatch(dtype(), [&](auto src_tag) {
    using S = decltype(src_tag);
    dispatch(target, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto src = data<S>();
      auto dst = t.mutable_data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return t;
}

Tensor Tensor::view(Shape new_shape) const {
  if (shape_numel(new_shape) != numel())
    throw ShapeError("view: cannot view " + shape_str(shape()) + " as " + shape_str(new_shape));
  auto impl = std::make_shared<detail::TensorImpl>(*impl_);
  impl->shape = std::move(new_shape);
  impl->requires_grad = false;
  impl->id = detail::next_tensor_id();
  return Tensor(std::move(impl));
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape() || other.dtype() != dtype())
    throw ShapeError("assign: " + shape_str(other.shape()) + " into " + shape_str(shape()));
  if (nbytes()) std::memcpy(impl_->storage->data(), other.impl_->storage->data(), nbytes());
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* t_active_tape = nullptr;
}

Tape* Tape::active() { return t_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(t_active_tape) { t_active_tape = tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

void Tape::record(const char* op, const std::vector<const Tensor*>& inputs, const Tensor& output,
                  Adjoint adjoint) {
  if (consumed_) throw Error("cannot record onto a consumed tape");
  Entry e;
  e.op = op;
  e.input_ids.reserve(inputs.size());
  for (const Tensor* in : inputs) e.input_ids.push_back(in && in->requires_grad() ? in->id() : 0);
  e.output_id = output.id();
  e.adjoint = std::move(adjoint);
  entries_.push_back(std::move(e));
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("tape already consumed by a previous backward pass");
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) throw Error("backward: loss is not on the tape");
  consumed_ = true;

  TapeScope pause(nullptr);
  Gradients out;
  auto& grads = out.grads_;
  grads.emplace(loss.id(), Tensor::full(loss.shape(), 1.0, loss.dtype()));

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = grads.find(it->output_id);
    if (found == grads.end()) {
      it->adjoint = nullptr;
      continue;
    }
    Tensor grad_out = std::move(found->second);
    grads.erase(found);
    std::vector<Tensor> gin = it->adjoint(grad_out);
    it->adjoint = nullptr;
    for (std::size_t i = 0; i < it->input_ids.size() && i < gin.size(); ++i) {
      const auto id = it->input_ids[i];
      if (id == 0 || !gin[i].defined()) continue;
      auto slot = grads.find(id);
      if (slot == grads.end())
        grads.emplace(id, std::move(gin[i]));
      else
        slot->second = add(slot->second, gin[i]);
    }
  }
  entries_.clear();
  return out;
}

Tensor Gradients::operator[](const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it != grads_.end()) return it->second;
  return Tensor::zeros(leaf.shape(), leaf.dtype());
}

bool Gradients::contains(const Tensor& leaf) const { return grads_.count(leaf.id()) != 0; }

}  // namespace mixerbench
