#include "mixerbench/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "mixerbench/fft.hpp"
#include "mixerbench/kernels.hpp"

namespace mixerbench {

namespace {

std::atomic<std::uint64_t> g_flops{0};

void count_flops(std::uint64_t f) { g_flops.fetch_add(f, std::memory_order_relaxed); }

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return a;
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw Error(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                dtype_name(b.dtype()) + ")");
}

void check_finite(const char* op, const Tensor& out) {
  if (!finite_checks_enabled()) return;
  const bool ok = dispatch(out.dtype(), [&](auto tag) {
    for (auto v : out.data<decltype(tag)>())
      if (!std::isfinite(v)) return false;
    return true;
  });
  if (!ok) throw NonFiniteError(std::string(op) + ": non-finite value in output");
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Marks `out` as tracked and records the adjoint on the active tape.
void record(const char* op, const std::vector<const Tensor*>& inputs, Tensor& out, Adjoint fn) {
  out.set_requires_grad(true);
  Tape::active()->record(op, inputs, out, std::move(fn));
}

// Applies f elementwise, untracked.
template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::int64_t n = static_cast<std::int64_t>(src.size());
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  });
  return out;
}

// Same-shape binary zip, untracked.
template <class F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape())
    throw ShapeError("zip: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::empty(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto dst = out.mutable_data<T>();
    const std::int64_t n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(x[i], y[i]);
  });
  return out;
}

// Strides of `shape` aligned to an output of rank `rank`, zero on broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::int64_t> strides(rank, 0);
  const std::size_t off = rank - shape.size();
  std::int64_t stride = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[off + i] = shape[i] == 1 && out[off + i] != 1 ? 0 : stride;
    stride *= shape[i];
  }
  return strides;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

template <class T, class F>
void broadcast_apply(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  auto x = a.data<T>();
  auto y = b.data<T>();
  auto dst = out.mutable_data<T>();
  const std::int64_t n = out.numel();
  const Shape& os = out.shape();
  if (a.shape() == os && b.shape() == os) {
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(x[i], y[i]);
    return;
  }
  if (a.shape() == os && is_suffix(b.shape(), os)) {
    const std::int64_t nb = std::max<std::int64_t>(1, b.numel());
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(x[i], y[i % nb]);
    return;
  }
  if (b.shape() == os && is_suffix(a.shape(), os)) {
    const std::int64_t na = std::max<std::int64_t>(1, a.numel());
#pragma omp parallel for schedule(static) if (n > (1 << 16))
    for (std::int64_t i = 0; i < n; ++i) dst[i] = f(x[i % na], y[i]);
    return;
  }
  const auto sa = broadcast_strides(a.shape(), os);
  const auto sb = broadcast_strides(b.shape(), os);
  const std::size_t rank = os.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    dst[i] = f(x[ia], y[ib]);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
      idx[d] = 0;
    }
  }
}

template <class F>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, F f) {
  require_same_dtype(a, b, "binary op");
  Tensor out = Tensor::empty(broadcast_shapes(a.shape(), b.shape()), a.dtype());
  dispatch(a.dtype(), [&](auto tag) { broadcast_apply<decltype(tag)>(a, b, out, f); });
  return out;
}

}  // namespace

std::uint64_t flop_counter() { return g_flops.load(); }
void reset_flop_counter() { g_flops.store(0); }

std::int64_t conv_fft_size(std::int64_t n) {
  return n <= 0 ? 0 : static_cast<std::int64_t>(fft::next_pow2(static_cast<std::size_t>(2 * n - 1)));
}

std::uint64_t fft_flops(std::int64_t size) {
  if (size <= 1) return 0;
  std::uint64_t lg = 0;
  while ((std::int64_t{1} << lg) < size) ++lg;
  // (m/2) log2 m butterflies; a complex multiply (6) plus two complex adds (4) each.
  return static_cast<std::uint64_t>(size / 2) * lg * 10;
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(shape, x.shape()) != x.shape())
    throw ShapeError("sum_to: " + shape_str(x.shape()) + " does not broadcast from " + shape_str(shape));
  Tensor out = Tensor::zeros(shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::int64_t n = x.numel();
    if (is_suffix(shape, x.shape())) {
      const std::int64_t nt = std::max<std::int64_t>(1, out.numel());
      for (std::int64_t i = 0; i < n; ++i) dst[i % nt] += src[i];
      return;
    }
    const Shape& xs = x.shape();
    const auto st = broadcast_strides(shape, xs);
    std::vector<std::int64_t> idx(xs.size(), 0);
    std::int64_t it = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      dst[it] += src[i];
      for (std::size_t d = xs.size(); d-- > 0;) {
        ++idx[d];
        it += st[d];
        if (idx[d] < xs[d]) break;
        it -= st[d] * xs[d];
        idx[d] = 0;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = broadcast_binary(a, b, [](auto x, auto y) { return x + y; });
  check_finite("add", out);
  if (tracking({&a, &b})) {
    record("add", {&a, &b}, out, [sa = a.shape(), sb = b.shape()](const Tensor& g) {
      return std::vector<Tensor>{sum_to(g, sa), sum_to(g, sb)};
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = broadcast_binary(a, b, [](auto x, auto y) { return x - y; });
  check_finite("sub", out);
  if (tracking({&a, &b})) {
    record("sub", {&a, &b}, out, [sa = a.shape(), sb = b.shape()](const Tensor& g) {
      return std::vector<Tensor>{sum_to(g, sa), sum_to(map(g, [](auto v) { return -v; }), sb)};
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = broadcast_binary(a, b, [](auto x, auto y) { return x * y; });
  check_finite("mul", out);
  if (tracking({&a, &b})) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    record("mul", {&a, &b}, out, [a, b, ga, gb](const Tensor& g) {
      std::vector<Tensor> r(2);
      if (ga) r[0] = sum_to(broadcast_binary(g, b, [](auto x, auto y) { return x * y; }), a.shape());
      if (gb) r[1] = sum_to(broadcast_binary(g, a, [](auto x, auto y) { return x * y; }), b.shape());
      return r;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double c) {
  Tensor out = map(x, [c](auto v) { return static_cast<decltype(v)>(v + c); });
  check_finite("add_scalar", out);
  if (tracking({&x})) record("add_scalar", {&x}, out, [](const Tensor& g) { return std::vector<Tensor>{g}; });
  return out;
}

Tensor mul_scalar(const Tensor& x, double c) {
  Tensor out = map(x, [c](auto v) { return static_cast<decltype(v)>(v * c); });
  check_finite("mul_scalar", out);
  if (tracking({&x})) {
    record("mul_scalar", {&x}, out, [c](const Tensor& g) {
      return std::vector<Tensor>{map(g, [c](auto v) { return static_cast<decltype(v)>(v * c); })};
    });
  }
  return out;
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor exp(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return std::exp(v); });
  check_finite("exp", out);
  if (tracking({&x})) {
    record("exp", {&x}, out, [y = out.detach()](const Tensor& g) {
      return std::vector<Tensor>{zip(g, y, [](auto gv, auto yv) { return gv * yv; })};
    });
  }
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return std::log(v); });
  check_finite("log", out);
  if (tracking({&x})) {
    record("log", {&x}, out, [x](const Tensor& g) {
      return std::vector<Tensor>{zip(g, x, [](auto gv, auto xv) { return gv / xv; })};
    });
  }
  return out;
}

Tensor sqrt(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return std::sqrt(v); });
  check_finite("sqrt", out);
  if (tracking({&x})) {
    record("sqrt", {&x}, out, [y = out.detach()](const Tensor& g) {
      return std::vector<Tensor>{
          zip(g, y, [](auto gv, auto yv) { return static_cast<decltype(gv)>(0.5) * gv / yv; })};
    });
  }
  return out;
}

Tensor reciprocal(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return static_cast<decltype(v)>(1) / v; });
  check_finite("reciprocal", out);
  if (tracking({&x})) {
    record("reciprocal", {&x}, out, [y = out.detach()](const Tensor& g) {
      return std::vector<Tensor>{zip(g, y, [](auto gv, auto yv) { return -gv * yv * yv; })};
    });
  }
  return out;
}

Tensor square(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return v * v; });
  check_finite("square", out);
  if (tracking({&x})) {
    record("square", {&x}, out, [x](const Tensor& g) {
      return std::vector<Tensor>{
          zip(g, x, [](auto gv, auto xv) { return static_cast<decltype(gv)>(2) * gv * xv; })};
    });
  }
  return out;
}

namespace {

template <class T>
T sigmoid_of(T v) {
  return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

}  // namespace

Tensor silu(const Tensor& x) {
  Tensor out = map(x, [](auto v) { return v * sigmoid_of(v); });
  check_finite("silu", out);
  if (tracking({&x})) {
    record("silu", {&x}, out, [x](const Tensor& g) {
      return std::vector<Tensor>{zip(g, x, [](auto gv, auto xv) {
        using T = decltype(xv);
        const T s = sigmoid_of(xv);
        return gv * s * (T(1) + xv * (T(1) - s));
      })};
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = map(x, [](auto v) {
    using T = decltype(v);
    return static_cast<T>(0.5) * v * (T(1) + std::erf(v * static_cast<T>(std::numbers::sqrt2 / 2)));
  });
  check_finite("gelu", out);
  if (tracking({&x})) {
    record("gelu", {&x}, out, [x](const Tensor& g) {
      return std::vector<Tensor>{zip(g, x, [](auto gv, auto xv) {
        using T = decltype(xv);
        const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(xv * static_cast<T>(std::numbers::sqrt2 / 2)));
        const T pdf = std::exp(static_cast<T>(-0.5) * xv * xv) *
                      static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
        return gv * (cdf + xv * pdf);
      })};
    });
  }
  return out;
}

Tensor softplus(const Tensor& x) {
  Tensor out = map(x, [](auto v) {
    using T = decltype(v);
    return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  check_finite("softplus", out);
  if (tracking({&x})) {
    record("softplus", {&x}, out, [x](const Tensor& g) {
      return std::vector<Tensor>{zip(g, x, [](auto gv, auto xv) { return gv * sigmoid_of(xv); })};
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

Tensor matmul_raw(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  require_same_dtype(a, b, "matmul");
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::int64_t m = ta ? a.dim(-1) : a.dim(-2);
  const std::int64_t ka = ta ? a.dim(-2) : a.dim(-1);
  const std::int64_t kb = tb ? b.dim(-1) : b.dim(-2);
  const std::int64_t n = tb ? b.dim(-2) : b.dim(-1);
  if (ka != kb)
    throw ShapeError("matmul: inner extents differ for " + shape_str(a.shape()) +
                     (ta ? "^T" : "") + " @ " + shape_str(b.shape()) + (tb ? "^T" : ""));
  const Shape ba(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  Shape batch_shape;
  std::int64_t stride_a = m * ka, stride_b = kb * n;
  if (ba == bb) {
    batch_shape = ba;
  } else if (bb.empty()) {
    batch_shape = ba;
    stride_b = 0;
  } else if (ba.empty()) {
    batch_shape = bb;
    stride_a = 0;
  } else {
    throw ShapeError("matmul: batch shapes differ for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::int64_t batch = shape_numel(batch_shape);
  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out = Tensor::empty(out_shape, a.dtype());
  count_flops(static_cast<std::uint64_t>(2 * batch * m * n * ka));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* pc = out.mutable_data<T>().data();
    if (!ta && stride_b == 0) {
      kernels::gemm<T>(false, tb, batch * m, n, ka, pa, pb, pc);
      return;
    }
    for (std::int64_t i = 0; i < batch; ++i)
      kernels::gemm<T>(ta, tb, m, n, ka, pa + i * stride_a, pb + i * stride_b, pc + i * m * n);
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  Tensor out = matmul_raw(a, b, ta, tb);
  check_finite("matmul", out);
  if (tracking({&a, &b})) {
    const bool ga = a.requires_grad(), gb = b.requires_grad();
    record("matmul", {&a, &b}, out, [a, b, ta, tb, ga, gb](const Tensor& g) {
      std::vector<Tensor> r(2);
      if (ga) {
        Tensor d = ta ? matmul_raw(b, g, tb, true) : matmul_raw(g, b, false, !tb);
        r[0] = sum_to(d, a.shape());
      }
      if (gb) {
        if (!ta && !tb && b.rank() == 2 && a.rank() > 2) {
          // shared weight: fold the batch into rows
          const std::int64_t k = a.dim(-1);
          r[1] = matmul_raw(a.view({a.numel() / k, k}), g.view({g.numel() / g.dim(-1), g.dim(-1)}),
                            true, false);
        } else {
          Tensor d = tb ? matmul_raw(g, a, true, ta) : matmul_raw(a, g, !ta, false);
          r[1] = sum_to(d, b.shape());
        }
      }
      return r;
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  return bias.defined() ? add(y, bias) : y;
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[static_cast<std::size_t>(infer)] = known ? x.numel() / known : 0;
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor out = x.view(shape);
  if (tracking({&x})) {
    record("reshape", {&x}, out, [s = x.shape()](const Tensor& g) {
      return std::vector<Tensor>{g.view(s)};
    });
  }
  return out;
}

Tensor gather(const Tensor& x, Shape out_shape, IndexMap index) {
  const std::int64_t n = shape_numel(out_shape);
  if (!index || static_cast<std::int64_t>(index->size()) != n)
    throw ShapeError("gather: index map size does not match output shape " + shape_str(out_shape));
  const std::int64_t limit = x.numel();
  Tensor out = Tensor::empty(std::move(out_shape), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const auto& idx = *index;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t j = idx[static_cast<std::size_t>(i)];
      if (j >= limit) throw ShapeError("gather: index out of range");
      dst[i] = j < 0 ? T(0) : src[j];
    }
  });
  if (tracking({&x})) {
    record("gather", {&x}, out, [index, in_shape = x.shape()](const Tensor& g) {
      Tensor gx = Tensor::zeros(in_shape, g.dtype());
      dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = g.data<T>();
        auto dst = gx.mutable_data<T>();
        const auto& idx = *index;
        for (std::size_t i = 0; i < idx.size(); ++i)
          if (idx[i] >= 0) dst[idx[i]] += src[i];
      });
      return std::vector<Tensor>{gx};
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int o : order) {
    if (o < 0 || o >= r || seen[static_cast<std::size_t>(o)]) throw ShapeError("permute: invalid order");
    seen[static_cast<std::size_t>(o)] = true;
  }
  const Shape& in = x.shape();
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
  for (int d = r - 2; d >= 0; --d)
    in_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(d + 1)] * in[static_cast<std::size_t>(d + 1)];
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> strides(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d) {
    out_shape[static_cast<std::size_t>(d)] = in[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
    strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(d)])];
  }
  const std::int64_t n = x.numel();
  auto index = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t src = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    (*index)[static_cast<std::size_t>(i)] = src;
    for (int d = r; d-- > 0;) {
      const auto du = static_cast<std::size_t>(d);
      ++idx[du];
      src += strides[du];
      if (idx[du] < out_shape[du]) break;
      src -= strides[du] * out_shape[du];
      idx[du] = 0;
    }
  }
  return gather(x, out_shape, std::move(index));
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const int r = x.rank();
  const int a0 = normalize_axis(axis0, r, "transpose");
  const int a1 = normalize_axis(axis1, r, "transpose");
  std::vector<int> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[static_cast<std::size_t>(a0)], order[static_cast<std::size_t>(a1)]);
  return permute(x, order);
}

namespace {

// outer x axis x inner decomposition of a contiguous tensor
struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int d = 0; d < axis; ++d) r.outer *= s[static_cast<std::size_t>(d)];
  r.len = s[static_cast<std::size_t>(axis)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

}  // namespace

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t end) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const auto sp = split_at(x.shape(), a);
  if (start < 0 || end > sp.len || start > end)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(end) +
                     ") invalid for extent " + std::to_string(sp.len));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = end - start;
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t l = start; l < end; ++l)
      for (std::int64_t i = 0; i < sp.inner; ++i) index->push_back((o * sp.len + l) * sp.inner + i);
  return gather(x, out_shape, std::move(index));
}

Tensor pad(const Tensor& x, int axis, std::int64_t before, std::int64_t after) {
  const int a = normalize_axis(axis, x.rank(), "pad");
  if (before < 0 || after < 0) throw ShapeError("pad: negative padding");
  const auto sp = split_at(x.shape(), a);
  Shape out_shape = x.shape();
  const std::int64_t len = sp.len + before + after;
  out_shape[static_cast<std::size_t>(a)] = len;
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t l = 0; l < len; ++l) {
      const std::int64_t src = l - before;
      for (std::int64_t i = 0; i < sp.inner; ++i)
        index->push_back(src < 0 || src >= sp.len ? -1 : (o * sp.len + src) * sp.inner + i);
    }
  return gather(x, out_shape, std::move(index));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int r = parts[0].rank();
  const int a = normalize_axis(axis, r, "concat");
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_same_dtype(parts[0], p, "concat");
    if (p.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != a && p.shape()[static_cast<std::size_t>(d)] != out_shape[static_cast<std::size_t>(d)])
        throw ShapeError("concat: extent mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
    total += p.dim(a);
  }
  out_shape[static_cast<std::size_t>(a)] = total;
  Tensor out = Tensor::empty(out_shape, parts[0].dtype());
  const auto sp = split_at(out_shape, a);
  std::vector<std::int64_t> lens;
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = out.mutable_data<T>();
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      const std::int64_t len = p.dim(a);
      lens.push_back(len);
      auto src = p.data<T>();
      for (std::int64_t o = 0; o < sp.outer; ++o)
        std::copy_n(src.data() + o * len * sp.inner, len * sp.inner,
                    dst.data() + (o * total + offset) * sp.inner);
      offset += len;
    }
  });
  std::vector<const Tensor*> ins;
  bool any = false;
  for (const auto& p : parts) {
    ins.push_back(&p);
    any = any || p.requires_grad();
  }
  if (any && Tape::active()) {
    record("concat", ins, out, [lens, a](const Tensor& g) {
      std::vector<Tensor> r;
      std::int64_t offset = 0;
      for (auto len : lens) {
        r.push_back(slice(g, a, offset, offset + len));
        offset += len;
      }
      return r;
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> indices) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V, d]");
  const std::int64_t vocab = table.dim(0), d = table.dim(1);
  auto index = std::make_shared<std::vector<std::int64_t>>();
  index->reserve(indices.size() * static_cast<std::size_t>(d));
  for (auto row : indices) {
    if (row < 0 || row >= vocab) throw ShapeError("embedding: index " + std::to_string(row) + " out of range");
    for (std::int64_t j = 0; j < d; ++j) index->push_back(row * d + j);
  }
  return gather(table, {static_cast<std::int64_t>(indices.size()), d}, std::move(index));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::empty({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0;
    for (auto v : x.data<T>()) acc += v;
    out.mutable_data<T>()[0] = static_cast<T>(acc);
  });
  check_finite("sum", out);
  if (tracking({&x})) {
    record("sum", {&x}, out, [s = x.shape()](const Tensor& g) {
      return std::vector<Tensor>{Tensor::full(s, g.item(), g.dtype())};
    });
  }
  return out;
}

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const int a = normalize_axis(axis, x.rank(), "sum");
  const auto sp = split_at(x.shape(), a);
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[static_cast<std::size_t>(a)] = 1;
  else
    out_shape.erase(out_shape.begin() + a);
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t l = 0; l < sp.len; ++l)
        for (std::int64_t i = 0; i < sp.inner; ++i)
          dst[o * sp.inner + i] += src[(o * sp.len + l) * sp.inner + i];
  });
  check_finite("sum", out);
  if (tracking({&x})) {
    record("sum_axis", {&x}, out, [sp, s = x.shape()](const Tensor& g) {
      Tensor gx = Tensor::empty(s, g.dtype());
      dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = g.data<T>();
        auto dst = gx.mutable_data<T>();
        for (std::int64_t o = 0; o < sp.outer; ++o)
          for (std::int64_t l = 0; l < sp.len; ++l)
            for (std::int64_t i = 0; i < sp.inner; ++i)
              dst[(o * sp.len + l) * sp.inner + i] = src[o * sp.inner + i];
      });
      return std::vector<Tensor>{gx};
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const auto len = x.dim(axis);
  if (len == 0) throw ShapeError("mean: empty axis");
  return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

// ---------------------------------------------------------------------------
// Network primitives
// ---------------------------------------------------------------------------

namespace {

Tensor softmax_last(const Tensor& x, const char* op) {
  const std::int64_t len = x.dim(-1);
  if (len == 0) throw ShapeError(std::string(op) + ": empty axis");
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::softmax_rows<T>(x.data<T>().data(), out.mutable_data<T>().data(), x.numel() / len, len);
  });
  return out;
}

Tensor softmax_backward(const Tensor& y, const Tensor& g) {
  Tensor gx = Tensor::empty(y.shape(), y.dtype());
  const std::int64_t len = y.dim(-1);
  dispatch(y.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::softmax_rows_backward<T>(y.data<T>().data(), g.data<T>().data(),
                                      gx.mutable_data<T>().data(), y.numel() / len, len);
  });
  return gx;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  if (a != x.rank() - 1) return transpose(softmax(transpose(x, a, -1), -1), a, -1);
  Tensor out = softmax_last(x, "softmax");
  check_finite("softmax", out);
  if (tracking({&x})) {
    record("softmax", {&x}, out, [y = out.detach()](const Tensor& g) {
      return std::vector<Tensor>{softmax_backward(y, g)};
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& x, const Tensor& bias) {
  require_same_dtype(x, bias, "masked_softmax");
  if (broadcast_shapes(x.shape(), bias.shape()) != x.shape())
    throw ShapeError("masked_softmax: bias " + shape_str(bias.shape()) + " does not broadcast to " +
                     shape_str(x.shape()));
  Tensor shifted = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    broadcast_apply<decltype(tag)>(x, bias, shifted, [](auto a, auto b) { return a + b; });
  });
  Tensor out = softmax_last(shifted, "masked_softmax");
  shifted = Tensor();
  check_finite("masked_softmax", out);
  if (tracking({&x})) {
    record("masked_softmax", {&x}, out, [y = out.detach()](const Tensor& g) {
      return std::vector<Tensor>{softmax_backward(y, g)};
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "log_softmax");
  if (a != x.rank() - 1) return transpose(log_softmax(transpose(x, a, -1), -1), a, -1);
  const std::int64_t len = x.dim(-1);
  if (len == 0) throw ShapeError("log_softmax: empty axis");
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::int64_t rows = x.numel() / len;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = src.data() + r * len;
      T mx = xr[0];
      for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, xr[j]);
      double total = 0;
      for (std::int64_t j = 0; j < len; ++j) total += std::exp(static_cast<double>(xr[j] - mx));
      const T lse = mx + static_cast<T>(std::log(total));
      for (std::int64_t j = 0; j < len; ++j) dst[r * len + j] = xr[j] - lse;
    }
  });
  check_finite("log_softmax", out);
  if (tracking({&x})) {
    record("log_softmax", {&x}, out, [y = out.detach(), len](const Tensor& g) {
      Tensor gx = Tensor::empty(y.shape(), y.dtype());
      dispatch(y.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto yv = y.data<T>();
        auto gv = g.data<T>();
        auto dst = gx.mutable_data<T>();
        const std::int64_t rows = y.numel() / len;
        for (std::int64_t r = 0; r < rows; ++r) {
          T total = 0;
          for (std::int64_t j = 0; j < len; ++j) total += gv[r * len + j];
          for (std::int64_t j = 0; j < len; ++j)
            dst[r * len + j] = gv[r * len + j] - std::exp(yv[r * len + j]) * total;
        }
      });
      return std::vector<Tensor>{gx};
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::int64_t len = x.dim(-1);
  if (len == 0) throw ShapeError("layer_norm: last axis has extent 0");
  if (eps < 0) throw Error("layer_norm: eps must be non-negative");
  if (gamma.numel() != len || beta.numel() != len)
    throw ShapeError("layer_norm: gamma/beta extent does not match last axis " + std::to_string(len));
  require_same_dtype(x, gamma, "layer_norm");
  require_same_dtype(x, beta, "layer_norm");
  const std::int64_t rows = x.numel() / len;
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  Tensor mu = Tensor::empty({rows}, x.dtype());
  Tensor rs = Tensor::empty({rows}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::layer_norm_rows<T>(x.data<T>().data(), gamma.data<T>().data(), beta.data<T>().data(),
                                out.mutable_data<T>().data(), mu.mutable_data<T>().data(),
                                rs.mutable_data<T>().data(), rows, len, eps);
  });
  check_finite("layer_norm", out);
  if (tracking({&x, &gamma, &beta})) {
    record("layer_norm", {&x, &gamma, &beta}, out,
           [x, gamma, mu, rs, rows, len, gshape = gamma.shape(), bshape = beta.shape()](const Tensor& g) {
             Tensor gx = Tensor::empty(x.shape(), x.dtype());
             Tensor gg = Tensor::empty(gshape, x.dtype());
             Tensor gb = Tensor::empty(bshape, x.dtype());
             dispatch(x.dtype(), [&](auto tag) {
               using T = decltype(tag);
               kernels::layer_norm_rows_backward<T>(
                   x.data<T>().data(), gamma.data<T>().data(), mu.data<T>().data(), rs.data<T>().data(),
                   g.data<T>().data(), gx.mutable_data<T>().data(), gg.mutable_data<T>().data(),
                   gb.mutable_data<T>().data(), rows, len);
             });
             return std::vector<Tensor>{gx, gg, gb};
           });
  }
  return out;
}

namespace {

struct SeqDims {
  std::int64_t batch, n, c;
};

SeqDims seq_dims(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw ShapeError(std::string(op) + ": expected [B, n, c] or [n, c], got " + shape_str(x.shape()));
}

}  // namespace

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const auto d = seq_dims(x, "depthwise_conv1d");
  if (w.rank() != 2 || w.dim(0) != d.c || w.dim(1) % 2 == 0)
    throw ShapeError("depthwise_conv1d: weight must be [c, odd k], got " + shape_str(w.shape()));
  if (bias.defined() && bias.numel() != d.c) throw ShapeError("depthwise_conv1d: bias must be [c]");
  require_same_dtype(x, w, "depthwise_conv1d");
  const std::int64_t k = w.dim(1);
  Tensor out = Tensor::empty(x.shape(), x.dtype());
  count_flops(static_cast<std::uint64_t>(2 * d.batch * d.n * d.c * k));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::depthwise_conv1d<T>(x.data<T>().data(), w.data<T>().data(),
                                 bias.defined() ? bias.data<T>().data() : nullptr,
                                 out.mutable_data<T>().data(), d.batch, d.n, d.c, k);
  });
  check_finite("depthwise_conv1d", out);
  if (tracking({&x, &w, &bias})) {
    record("depthwise_conv1d", {&x, &w, &bias}, out, [x, w, d, k, has_bias = bias.defined(),
                                                      bshape = bias.defined() ? bias.shape() : Shape{}](const Tensor& g) {
      Tensor gx = Tensor::empty(x.shape(), x.dtype());
      Tensor gw = Tensor::empty(w.shape(), x.dtype());
      Tensor gb = has_bias ? Tensor::empty(bshape, x.dtype()) : Tensor();
      dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::depthwise_conv1d_backward<T>(x.data<T>().data(), w.data<T>().data(), g.data<T>().data(),
                                              gx.mutable_data<T>().data(), gw.mutable_data<T>().data(),
                                              has_bias ? gb.mutable_data<T>().data() : nullptr, d.batch,
                                              d.n, d.c, k);
      });
      return std::vector<Tensor>{gx, gw, gb};
    });
  }
  return out;
}

Tensor causal_conv(const Tensor& u, const Tensor& h) {
  const auto d = seq_dims(u, "causal_conv");
  if (h.rank() != 2 || h.dim(0) != d.n || h.dim(1) != d.c)
    throw ShapeError("causal_conv: filter " + shape_str(h.shape()) + " does not match sequence " +
                     shape_str(u.shape()));
  require_same_dtype(u, h, "causal_conv");
  Tensor out = Tensor::empty(u.shape(), u.dtype());
  const std::int64_t m = conv_fft_size(d.n);
  const std::uint64_t per_transform = fft_flops(m);
  count_flops(static_cast<std::uint64_t>(d.c) *
              (per_transform + static_cast<std::uint64_t>(d.batch) * (2 * per_transform + 6 * static_cast<std::uint64_t>(m))));
  dispatch(u.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::causal_conv_fft<T>(u.data<T>().data(), h.data<T>().data(), out.mutable_data<T>().data(),
                                d.batch, d.n, d.c);
  });
  check_finite("causal_conv", out);
  if (tracking({&u, &h})) {
    record("causal_conv", {&u, &h}, out, [u, h, d](const Tensor& g) {
      Tensor gu = Tensor::empty(u.shape(), u.dtype());
      Tensor gh = Tensor::empty(h.shape(), u.dtype());
      dispatch(u.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::causal_conv_fft_backward<T>(u.data<T>().data(), h.data<T>().data(), g.data<T>().data(),
                                             gu.mutable_data<T>().data(), gh.mutable_data<T>().data(),
                                             d.batch, d.n, d.c);
      });
      return std::vector<Tensor>{gu, gh};
    });
  }
  return out;
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm,
                      const Tensor& Cm, std::int64_t chunk_len) {
  const auto d = seq_dims(u, "selective_scan");
  if (delta.shape() != u.shape())
    throw ShapeError("selective_scan: delta " + shape_str(delta.shape()) + " must match u " + shape_str(u.shape()));
  if (A.rank() != 2 || A.dim(0) != d.c)
    throw ShapeError("selective_scan: A must be [c, s], got " + shape_str(A.shape()));
  const std::int64_t s = A.dim(1);
  const Shape bc_shape = u.rank() == 2 ? Shape{d.n, s} : Shape{d.batch, d.n, s};
  if (Bm.shape() != bc_shape || Cm.shape() != bc_shape)
    throw ShapeError("selective_scan: B and C must be " + shape_str(bc_shape));
  for (const Tensor* t : {&delta, &A, &Bm, &Cm}) require_same_dtype(u, *t, "selective_scan");
  const bool stable = dispatch(A.dtype(), [&](auto tag) {
    for (auto v : A.data<decltype(tag)>())
      if (!(v < 0)) return false;
    return true;
  });
  if (!stable) throw Error("selective_scan: A must be strictly negative");

  const kernels::ScanDims dims{d.batch, d.n, d.c, s};
  if (chunk_len == 0) chunk_len = kernels::auto_scan_chunk(dims);
  const bool track = tracking({&u, &delta, &A, &Bm, &Cm});
  Tensor out = Tensor::empty(u.shape(), u.dtype());
  Tensor states = track ? Tensor::empty({d.batch, d.n, d.c, s}, u.dtype()) : Tensor();
  count_flops(static_cast<std::uint64_t>(4 * d.batch * d.n * d.c * s));
  dispatch(u.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::selective_scan<T>(dims, u.data<T>().data(), delta.data<T>().data(), A.data<T>().data(),
                               Bm.data<T>().data(), Cm.data<T>().data(), out.mutable_data<T>().data(),
                               track ? states.mutable_data<T>().data() : nullptr, chunk_len);
  });
  check_finite("selective_scan", out);
  if (track) {
    record("selective_scan", {&u, &delta, &A, &Bm, &Cm}, out,
           [u, delta, A, Bm, Cm, states, dims](const Tensor& g) {
             Tensor gu = Tensor::empty(u.shape(), u.dtype());
             Tensor gd = Tensor::empty(u.shape(), u.dtype());
             Tensor ga = Tensor::empty(A.shape(), u.dtype());
             Tensor gb = Tensor::empty(Bm.shape(), u.dtype());
             Tensor gc = Tensor::empty(Cm.shape(), u.dtype());
             dispatch(u.dtype(), [&](auto tag) {
               using T = decltype(tag);
               kernels::selective_scan_backward<T>(
                   dims, u.data<T>().data(), delta.data<T>().data(), A.data<T>().data(), Bm.data<T>().data(),
                   Cm.data<T>().data(), states.data<T>().data(), g.data<T>().data(), gu.mutable_data<T>().data(),
                   gd.mutable_data<T>().data(), ga.mutable_data<T>().data(), gb.mutable_data<T>().data(),
                   gc.mutable_data<T>().data());
             });
             return std::vector<Tensor>{gu, gd, ga, gb, gc};
           });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N, K]");
  const std::int64_t rows = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != rows)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  if (rows == 0 || k == 0) throw ShapeError("cross_entropy: empty logits");
  for (auto l : labels)
    if (l < 0 || l >= k) throw ShapeError("cross_entropy: label " + std::to_string(l) + " out of range");
  Tensor probs = softmax_last(logits, "cross_entropy");
  Tensor out = Tensor::empty({}, logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto p = probs.data<T>();
    auto x = logits.data<T>();
    double acc = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * k;
      T mx = xr[0];
      for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
      double total = 0;
      for (std::int64_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(xr[j] - mx));
      acc += static_cast<double>(mx) + std::log(total) - static_cast<double>(xr[labels[static_cast<std::size_t>(r)]]);
    }
    (void)p;
    out.mutable_data<T>()[0] = static_cast<T>(acc / static_cast<double>(rows));
  });
  check_finite("cross_entropy", out);
  if (tracking({&logits})) {
    std::vector<std::int32_t> lab(labels.begin(), labels.end());
    record("cross_entropy", {&logits}, out, [probs, lab = std::move(lab), rows, k](const Tensor& g) {
      Tensor gx = probs.clone();
      const double scale = g.item() / static_cast<double>(rows);
      dispatch(gx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto dst = gx.mutable_data<T>();
        for (std::int64_t r = 0; r < rows; ++r) dst[r * k + lab[static_cast<std::size_t>(r)]] -= T(1);
        for (auto& v : dst) v = static_cast<T>(v * scale);
      });
      return std::vector<Tensor>{gx};
    });
  }
  return out;
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int j = -radius; j <= radius; ++j) {
    const double v = std::exp(-0.5 * j * j / (sigma * sigma));
    taps[static_cast<std::size_t>(j + radius)] = v;
    total += v;
  }
  for (auto& v : taps) v /= total;
  return taps;
}

// Zero-padded symmetric blur; it is its own adjoint.
Tensor blur_raw(const Tensor& x, const std::vector<double>& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  Tensor cur = x.clone();
  for (int axis = 1; axis < x.rank(); ++axis) {
    const auto sp = split_at(x.shape(), axis);
    Tensor next = Tensor::empty(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto src = cur.data<T>();
      auto dst = next.mutable_data<T>();
      for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t l = 0; l < sp.len; ++l)
          for (std::int64_t i = 0; i < sp.inner; ++i) {
            double acc = 0;
            for (int j = -radius; j <= radius; ++j) {
              const std::int64_t q = l + j;
              if (q < 0 || q >= sp.len) continue;
              acc += taps[static_cast<std::size_t>(j + radius)] * src[(o * sp.len + q) * sp.inner + i];
            }
            dst[(o * sp.len + l) * sp.inner + i] = static_cast<T>(acc);
          }
    });
    cur = next;
  }
  return cur;
}

}  // namespace

Tensor gaussian_blur(const Tensor& x, double sigma) {
  if (sigma <= 0) throw Error("gaussian_blur: sigma must be positive");
  if (x.rank() < 2) throw ShapeError("gaussian_blur: expected [C, spatial...]");
  auto taps = gaussian_taps(sigma);
  Tensor out = blur_raw(x, taps);
  check_finite("gaussian_blur", out);
  if (tracking({&x})) {
    record("gaussian_blur", {&x}, out, [taps](const Tensor& g) {
      return std::vector<Tensor>{blur_raw(g, taps)};
    });
  }
  return out;
}

}  // namespace mixerbench
