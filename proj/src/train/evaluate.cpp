#include <cmath>

#include "mixerbench/ops.hpp"
#include "mixerbench/train.hpp"

namespace mixerbench {

EvalReport evaluate(const ForwardFn& forward, const std::vector<TaskSample>& samples, std::size_t n_boot,
                    std::uint64_t seed) {
  if (samples.empty()) throw ConfigError("evaluate: no samples");
  TapeScope pause(nullptr);
  EvalReport r;
  r.kind = samples.front().kind;
  for (const auto& s : samples)
    if (s.kind != r.kind) throw ConfigError("evaluate: mixed task kinds");

  if (r.kind == TaskKind::classification) {
    r.metric = "auroc";
    for (const auto& s : samples) {
      const auto logits = forward(s.input);
      const auto p = softmax(reshape(logits, {logits.numel()}), 0).to_vector();
      if (p.size() < 2) throw ShapeError("evaluate: classification needs at least 2 logits");
      r.per_sample.push_back(p[1]);
      r.labels.push_back(s.label);
    }
    r.ci = bootstrap_ci(
        [&](std::span<const std::size_t> idx) {
          std::vector<double> sc;
          std::vector<std::int32_t> lb;
          for (auto i : idx) {
            sc.push_back(r.per_sample[i]);
            lb.push_back(r.labels[i]);
          }
          return auroc(sc, lb);
        },
        samples.size(), n_boot, 0.95, seed);
    return r;
  }

  if (r.kind == TaskKind::segmentation) {
    r.metric = "dice";
    for (const auto& s : samples) {
      const auto logits = forward(s.input);
      const auto pred = argmax_classes(logits);
      double total = 0;
      const auto K = logits.dim(0);
      for (std::int64_t k = 1; k < K; ++k) total += dice(pred, s.mask, static_cast<std::int32_t>(k));
      r.per_sample.push_back(total / static_cast<double>(K - 1));
    }
  } else {
    r.metric = "ssim";
    double base = 0;
    for (const auto& s : samples) {
      r.per_sample.push_back(ssim_image(forward(s.input), s.clean));
      base += ssim_image(s.input, s.clean);
    }
    r.baseline = base / static_cast<double>(samples.size());
  }
  r.ci = bootstrap_ci(
      [&](std::span<const std::size_t> idx) {
        double t = 0;
        for (auto i : idx) t += r.per_sample[i];
        return t / static_cast<double>(idx.size());
      },
      samples.size(), n_boot, 0.95, seed);
  return r;
}

}  // namespace mixerbench
