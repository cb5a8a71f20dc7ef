#include <cmath>
#include <numbers>

#include "mixerbench/train.hpp"

namespace mixerbench {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamOptions& opt) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params but " + std::to_string(grads.size()) +
                     " gradients");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor::zeros(p.shape(), p.dtype()));
      state.v.push_back(Tensor::zeros(p.shape(), p.dtype()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match the parameters");
  ++state.step;
  const double bc1 = 1 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const auto& g = grads[k];
    if (g.shape() != p.shape() || state.m[k].shape() != p.shape())
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(k) + ": " +
                       shape_str(p.shape()) + " vs grad " + shape_str(g.shape()));
    const auto gd = g.dtype() == p.dtype() ? g : g.to(p.dtype());
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = p.mutable_data<T>();
      auto m = state.m[k].mutable_data<T>();
      auto v = state.v[k].mutable_data<T>();
      auto gs = gd.data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = gs[i];
        const double mi = opt.beta1 * m[i] + (1 - opt.beta1) * gi;
        const double vi = opt.beta2 * v[i] + (1 - opt.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] = static_cast<T>(w[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt.eps));
      }
    });
  }
}

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, double lr, const AdamOptions& opt) {
  std::vector<Tensor> ps, gs;
  for (auto& p : params.items()) {
    ps.push_back(p.value);
    gs.push_back(grads[p.value]);
  }
  adam_step(ps, gs, state, lr, opt);
}

void TrainConfig::validate() const {
  if (!(max_lr > 0)) throw ConfigError("max_lr must be positive");
  if (!(pct_warmup > 0 && pct_warmup < 1)) throw ConfigError("pct_warmup must lie in (0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_every < 0 || max_steps < 0) throw ConfigError("eval_every and max_steps must be non-negative");
}

double one_cycle_lr(std::int64_t step, std::int64_t total, const TrainConfig& config) {
  if (total < 1) throw ConfigError("one_cycle_lr: total_steps must be positive");
  if (step < 0 || step > total)
    throw ConfigError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  const double peak = config.max_lr;
  const double start = peak / 25, end = peak / 1e4;
  const double warm = config.pct_warmup * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s <= warm) return start + (peak - start) * 0.5 * (1 - std::cos(std::numbers::pi * s / warm));
  const double progress = (s - warm) / (static_cast<double>(total) - warm);
  return end + (peak - end) * 0.5 * (1 + std::cos(std::numbers::pi * progress));
}

}  // namespace mixerbench
