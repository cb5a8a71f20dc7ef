#include "mixerbench/params.hpp"

#include <cmath>

#include "mixerbench/ops.hpp"

namespace mixerbench {

Tensor ParameterSet::add(const std::string& name, Tensor value) {
  for (const auto& p : items_)
    if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  items_.push_back({name, value});
  return value;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return p.value;
  throw ConfigError("no parameter named '" + name + "'");
}

std::int64_t ParameterSet::count() const { return count(""); }

std::int64_t ParameterSet::count(const std::string& prefix) const {
  std::int64_t total = 0;
  for (const auto& p : items_)
    if (p.name.compare(0, prefix.size(), prefix) == 0) total += p.value.numel();
  return total;
}

Tensor init_uniform(Rng& rng, Shape shape, double bound, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(v, std::move(shape), dtype);
}

Tensor init_normal(Rng& rng, Shape shape, double stddev, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(v, std::move(shape), dtype);
}

Linear::Linear(ParameterSet& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
               DType dtype, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w = ps.add(name + ".weight", init_uniform(rng, {in, out}, bound, dtype));
  if (bias) b = ps.add(name + ".bias", init_uniform(rng, {out}, bound, dtype));
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, w, b); }

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, std::int64_t dim, DType dtype) {
  gamma = ps.add(name + ".gamma", Tensor::full({dim}, 1.0, dtype));
  beta = ps.add(name + ".beta", Tensor::zeros({dim}, dtype));
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

}  // namespace mixerbench
