#include <cmath>
#include <numbers>

#include "mixerbench/tasks.hpp"

namespace mixerbench {

AugmentConfig augment_defaults(TaskKind kind) {
  AugmentConfig c;
  if (kind == TaskKind::denoising) {
    c.jitter = false;
    c.snr_preserving = true;
  }
  return c;
}

AffineParams draw_affine(Rng& rng, const Shape& extents, const AugmentConfig& config) {
  AffineParams p;
  p.rotation_deg = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
  for (auto e : extents)
    p.translate.push_back(rng.uniform(-config.max_translate, config.max_translate) * static_cast<double>(e));
  p.scale = 1.0 + rng.uniform(-config.max_scale, config.max_scale);
  p.jitter = (config.jitter && !config.snr_preserving) ? rng.uniform(config.jitter_lo, config.jitter_hi) : 1.0;
  return p;
}

namespace {

// Maps each output pixel back to its source coordinate.
struct InverseMap {
  std::size_t rank;
  double center[3], shift[3];
  double cos_t, sin_t, inv_scale;

  InverseMap(const Shape& extents, const AffineParams& p) : rank(extents.size()) {
    if (!(p.scale > 0)) throw ConfigError("affine scale must be positive");
    for (std::size_t a = 0; a < rank; ++a) {
      center[a] = 0.5 * static_cast<double>(extents[a] - 1);
      shift[a] = a < p.translate.size() ? p.translate[a] : 0.0;
    }
    const double t = p.rotation_deg * std::numbers::pi / 180.0;
    cos_t = std::cos(t);
    sin_t = std::sin(t);
    inv_scale = 1.0 / p.scale;
  }

  void operator()(const double* q, double* src) const {
    double d[3];
    for (std::size_t a = 0; a < rank; ++a) d[a] = q[a] - center[a] - shift[a];
    // inverse rotation in the (0, 1) plane
    const double u = cos_t * d[0] + sin_t * d[1];
    const double v = -sin_t * d[0] + cos_t * d[1];
    d[0] = u;
    d[1] = v;
    for (std::size_t a = 0; a < rank; ++a) src[a] = center[a] + d[a] * inv_scale;
  }
};

template <class Sample>
void resample(const Shape& extents, std::int64_t channels, const InverseMap& map, bool nearest, Sample&& sample) {
  const auto rank = extents.size();
  const auto P = shape_numel(extents);
  double q[3], s[3];
  for (std::int64_t i = 0; i < P; ++i) {
    std::int64_t r = i;
    for (int a = static_cast<int>(rank) - 1; a >= 0; --a) {
      q[a] = static_cast<double>(r % extents[static_cast<std::size_t>(a)]);
      r /= extents[static_cast<std::size_t>(a)];
    }
    map(q, s);
    if (nearest) {
      std::int64_t src = 0;
      bool inside = true;
      for (std::size_t a = 0; a < rank; ++a) {
        const auto k = static_cast<std::int64_t>(std::llround(s[a]));
        if (k < 0 || k >= extents[a]) inside = false;
        src = src * extents[a] + k;
      }
      for (std::int64_t c = 0; c < channels; ++c) sample(c, i, inside ? src : -1, 1.0);
      continue;
    }
    // multilinear: 2^rank corners, corners outside contribute zero
    std::int64_t base[3];
    double frac[3];
    for (std::size_t a = 0; a < rank; ++a) {
      const double f = std::floor(s[a]);
      base[a] = static_cast<std::int64_t>(f);
      frac[a] = s[a] - f;
    }
    for (int corner = 0; corner < (1 << rank); ++corner) {
      double w = 1;
      std::int64_t src = 0;
      bool inside = true;
      for (std::size_t a = 0; a < rank; ++a) {
        const int bit = (corner >> a) & 1;
        const auto k = base[a] + bit;
        w *= bit ? frac[a] : 1 - frac[a];
        if (k < 0 || k >= extents[a]) inside = false;
        src = src * extents[a] + k;
      }
      if (w == 0 || !inside) continue;
      for (std::int64_t c = 0; c < channels; ++c) sample(c, i, src, w);
    }
  }
}

Tensor resample_image(const Tensor& img, const InverseMap& map, bool nearest, double gain) {
  const Shape extents(img.shape().begin() + 1, img.shape().end());
  const auto C = img.dim(0);
  const auto P = shape_numel(extents);
  const auto in = img.to_vector();
  std::vector<double> out(in.size(), 0.0);
  resample(extents, C, map, nearest, [&](std::int64_t c, std::int64_t dst, std::int64_t src, double w) {
    if (src >= 0) out[static_cast<std::size_t>(c * P + dst)] += w * in[static_cast<std::size_t>(c * P + src)];
  });
  if (gain != 1.0)
    for (auto& v : out) v *= gain;
  return Tensor::from(std::span<const double>(out), img.shape(), img.dtype());
}

}  // namespace

TaskSample apply_affine(const TaskSample& sample, const AffineParams& params, const AugmentConfig& config) {
  const auto& shape = sample.input.shape();
  if (shape.size() != 3 && shape.size() != 4) throw ShapeError("augment: expects [C, spatial...] with 2D/3D spatial");
  const Shape extents(shape.begin() + 1, shape.end());
  const InverseMap map(extents, params);
  const bool nearest = config.snr_preserving;
  const double gain = config.snr_preserving ? 1.0 : params.jitter;

  TaskSample out = sample;
  out.input = resample_image(sample.input, map, nearest, gain);
  if (sample.clean.defined()) out.clean = resample_image(sample.clean, map, nearest, gain);
  if (!sample.mask.empty()) {
    std::vector<std::int32_t> mask(sample.mask.size(), 0);
    resample(extents, 1, map, true, [&](std::int64_t, std::int64_t dst, std::int64_t src, double) {
      if (src >= 0) mask[static_cast<std::size_t>(dst)] = sample.mask[static_cast<std::size_t>(src)];
    });
    out.mask = std::move(mask);
  }
  return out;
}

TaskSample augment(const TaskSample& sample, const AugmentConfig& config, Rng& rng) {
  const Shape extents(sample.input.shape().begin() + 1, sample.input.shape().end());
  return apply_affine(sample, draw_affine(rng, extents, config), config);
}

}  // namespace mixerbench
