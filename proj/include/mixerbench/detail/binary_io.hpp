#pragma once

// Little-endian fixed-width helpers shared by the sample and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "mixerbench/tensor.hpp"

namespace mixerbench::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(std::string("truncated stream while reading ") + what);
  return value;
}

inline void put_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw Error(std::string("truncated stream while reading ") + what);
}

inline void put_tensor_data(std::ostream& out, const Tensor& t) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    put_bytes(out, d.data(), d.size_bytes());
  });
}

inline Tensor get_tensor_data(std::istream& in, Shape shape, DType dtype, const char* what) {
  auto t = Tensor::empty(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    get_bytes(in, d.data(), d.size_bytes(), what);
  });
  return t;
}

}  // namespace mixerbench::detail
