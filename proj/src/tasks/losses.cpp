#include <cmath>

#include "mixerbench/ops.hpp"
#include "mixerbench/tasks.hpp"

namespace mixerbench {

DenoiseLossParts denoise_loss_parts(const Tensor& pred, const Tensor& target, const DenoiseLossOptions& opt) {
  if (pred.shape() != target.shape())
    throw ShapeError("denoise_loss: pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  if (!(opt.charbonnier_eps > 0)) throw ConfigError("charbonnier eps must be positive");
  DenoiseLossParts out;
  const auto diff = sub(pred, target);
  const auto sq = square(diff);
  out.mse = mean(sq);
  out.charbonnier = mean(sqrt(add_scalar(sq, opt.charbonnier_eps * opt.charbonnier_eps)));
  out.total = add(out.mse, out.charbonnier);
  if (opt.gaussian == GaussianTerm::blurred_mse) {
    const auto blurred = sub(gaussian_blur(pred, opt.blur_sigma), gaussian_blur(target, opt.blur_sigma));
    out.gaussian = mean(square(blurred));
    out.total = add(out.total, out.gaussian);
  } else {
    out.gaussian = Tensor::scalar(0.0, pred.dtype());
  }
  return out;
}

Tensor denoise_loss(const Tensor& pred, const Tensor& target, const DenoiseLossOptions& opt) {
  return denoise_loss_parts(pred, target, opt).total;
}

Tensor segmentation_loss(const Tensor& logits, std::span<const std::int32_t> mask) {
  if (logits.rank() < 2) throw ShapeError("segmentation_loss: logits must be [K, spatial...]");
  const auto K = logits.dim(0);
  const auto P = logits.numel() / K;
  if (static_cast<std::int64_t>(mask.size()) != P)
    throw ShapeError("segmentation_loss: mask has " + std::to_string(mask.size()) + " pixels, logits " +
                     std::to_string(P));
  return cross_entropy(transpose(reshape(logits, {K, P}), 0, 1), mask);
}

std::vector<std::int32_t> argmax_classes(const Tensor& logits) {
  const auto K = logits.dim(0);
  const auto P = logits.numel() / K;
  const auto v = logits.to_vector();
  std::vector<std::int32_t> out(static_cast<std::size_t>(P), 0);
  for (std::int64_t p = 0; p < P; ++p) {
    double best = v[static_cast<std::size_t>(p)];
    for (std::int64_t k = 1; k < K; ++k) {
      const double x = v[static_cast<std::size_t>(k * P + p)];
      if (x > best) {
        best = x;
        out[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(k);
      }
    }
  }
  return out;
}

}  // namespace mixerbench
