#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mixerbench/tensor.hpp"

namespace mixerbench {

// Seeded generator shared by initialisers and data generators.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

struct Parameter {
  std::string name;
  Tensor value;
};

// Ordered, named collection of trainable leaves. Modules register their
// tensors here at construction and keep handles to the same buffers, so an
// optimizer writing through the set updates the modules in place.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor value);
  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }
  const Tensor& get(const std::string& name) const;
  std::int64_t count() const;
  // Parameters whose name starts with prefix.
  std::int64_t count(const std::string& prefix) const;
  std::size_t size() const { return items_.size(); }

 private:
  std::vector<Parameter> items_;
};

// Initialisers. Linear weights are [in, out] ~ U(-1/sqrt(in), 1/sqrt(in)).
Tensor init_uniform(Rng& rng, Shape shape, double bound, DType dtype);
Tensor init_normal(Rng& rng, Shape shape, double stddev, DType dtype);

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out] or undefined
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
         DType dtype, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  std::int64_t in_features() const { return w.dim(0); }
  std::int64_t out_features() const { return w.dim(1); }
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::int64_t dim, DType dtype);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace mixerbench
