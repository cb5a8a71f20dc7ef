#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixerbench/tasks.hpp"

namespace mixerbench {

TaskKind parse_task(const std::string& name) {
  if (name == "segmentation" || name == "seg") return TaskKind::segmentation;
  if (name == "denoising" || name == "denoise") return TaskKind::denoising;
  if (name == "classification" || name == "cls") return TaskKind::classification;
  throw ConfigError("unknown task '" + name + "'");
}

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::segmentation: return "segmentation";
    case TaskKind::denoising: return "denoising";
    case TaskKind::classification: return "classification";
  }
  return "?";
}

namespace {

void check_extents(const Shape& extents, std::int64_t channels) {
  if (extents.size() != 2 && extents.size() != 3)
    throw ShapeError("task extents must be 2D or 3D, got " + shape_str(extents));
  for (auto e : extents)
    if (e < 8) throw ShapeError("task extents must be at least 8 per axis, got " + shape_str(extents));
  if (channels < 1) throw ShapeError("task needs at least one channel");
}

std::int64_t pixel_count(const Shape& extents) { return shape_numel(extents); }

// Coordinates of raster pixel i.
void unravel(std::int64_t i, const Shape& extents, double* coord) {
  for (int a = static_cast<int>(extents.size()) - 1; a >= 0; --a) {
    coord[a] = static_cast<double>(i % extents[a]);
    i /= extents[a];
  }
}

// A sum of a few low-frequency plane waves, roughly in [-1, 1].
struct SmoothField {
  struct Wave {
    double freq[3];
    double phase, amp;
  };
  std::vector<Wave> waves;

  SmoothField(Rng& rng, const Shape& extents, int count = 6, double max_cycles = 3.0) {
    for (int k = 0; k < count; ++k) {
      Wave w{};
      for (std::size_t a = 0; a < extents.size(); ++a)
        w.freq[a] = rng.uniform(-max_cycles, max_cycles) * 2 * std::numbers::pi / static_cast<double>(extents[a]);
      w.phase = rng.uniform(0, 2 * std::numbers::pi);
      w.amp = rng.uniform(0.5, 1.0) / count;
      waves.push_back(w);
    }
  }

  double operator()(const double* c, std::size_t rank) const {
    double v = 0;
    for (const auto& w : waves) {
      double arg = w.phase;
      for (std::size_t a = 0; a < rank; ++a) arg += w.freq[a] * c[a];
      v += w.amp * std::cos(arg);
    }
    return v;
  }
};

struct Ellipsoid {
  double center[3];
  double radius[3];
  double cos_t = 1, sin_t = 0;  // in-plane rotation of the first two axes
  bool box = false;

  bool contains(const double* c, std::size_t rank) const {
    double d[3];
    for (std::size_t a = 0; a < rank; ++a) d[a] = c[a] - center[a];
    const double u = cos_t * d[0] + sin_t * d[1];
    const double v = -sin_t * d[0] + cos_t * d[1];
    d[0] = u;
    d[1] = v;
    if (box) {
      for (std::size_t a = 0; a < rank; ++a)
        if (std::abs(d[a]) > radius[a]) return false;
      return true;
    }
    double s = 0;
    for (std::size_t a = 0; a < rank; ++a) s += (d[a] / radius[a]) * (d[a] / radius[a]);
    return s <= 1.0;
  }
};

Ellipsoid draw_shape(Rng& rng, const Shape& extents, double rmin, double rmax, bool allow_box) {
  const auto rank = extents.size();
  const double smallest = static_cast<double>(*std::min_element(extents.begin(), extents.end()));
  Ellipsoid e{};
  for (std::size_t a = 0; a < rank; ++a) {
    e.radius[a] = std::max(1.0, rng.uniform(rmin, rmax) * smallest);
    // integer centres guarantee the centre pixel is covered
    e.center[a] = static_cast<double>(rng.integer(0, extents[a] - 1));
  }
  const double theta = rng.uniform(0, std::numbers::pi);
  e.cos_t = std::cos(theta);
  e.sin_t = std::sin(theta);
  e.box = allow_box && rank == 2 && rng.bernoulli(0.3);
  return e;
}

Tensor to_tensor(const std::vector<double>& values, Shape shape) {
  return Tensor::from(std::span<const double>(values), std::move(shape), DType::f32);
}

Shape image_shape(std::int64_t channels, const Shape& extents) {
  Shape s{channels};
  s.insert(s.end(), extents.begin(), extents.end());
  return s;
}

}  // namespace

TaskSample gen_segmentation(std::uint64_t seed, const SegmentationSpec& spec) {
  check_extents(spec.extents, spec.channels);
  if (spec.num_shapes < 0) throw ConfigError("num_shapes must be non-negative");
  if (spec.num_classes < 2) throw ConfigError("segmentation needs at least 2 classes");
  if (!(spec.min_radius > 0 && spec.max_radius >= spec.min_radius))
    throw ConfigError("segmentation radii must satisfy 0 < min <= max");
  if (!(spec.min_foreground >= 0 && spec.max_foreground <= 1 && spec.min_foreground <= spec.max_foreground))
    throw ConfigError("foreground band must lie in [0, 1]");
  const double smallest = static_cast<double>(*std::min_element(spec.extents.begin(), spec.extents.end()));
  if (spec.num_shapes > 0 && spec.min_radius * smallest < 1.0)
    throw ShapeError("extents " + shape_str(spec.extents) + " too small for the requested shape radii");

  const auto rank = spec.extents.size();
  const auto P = pixel_count(spec.extents);
  Rng rng(seed);

  TaskSample out;
  out.kind = TaskKind::segmentation;
  out.seed = seed;
  out.mask.assign(static_cast<std::size_t>(P), 0);

  if (spec.num_shapes > 0) {
    constexpr int kAttempts = 200;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      std::vector<Ellipsoid> shapes;
      std::vector<std::int32_t> classes;
      for (std::int64_t k = 0; k < spec.num_shapes; ++k) {
        shapes.push_back(draw_shape(rng, spec.extents, spec.min_radius, spec.max_radius, true));
        classes.push_back(static_cast<std::int32_t>(rng.integer(1, spec.num_classes - 1)));
      }
      std::int64_t fg = 0;
      double c[3];
      for (std::int64_t i = 0; i < P; ++i) {
        unravel(i, spec.extents, c);
        std::int32_t cls = 0;
        for (std::size_t k = 0; k < shapes.size(); ++k)
          if (shapes[k].contains(c, rank)) cls = classes[k];  // later shapes on top
        out.mask[static_cast<std::size_t>(i)] = cls;
        fg += cls != 0;
      }
      const double frac = static_cast<double>(fg) / static_cast<double>(P);
      if (fg > 0 && frac >= spec.min_foreground && frac <= spec.max_foreground) break;
      if (attempt + 1 == kAttempts)
        throw ConfigError("could not satisfy the foreground band for extents " + shape_str(spec.extents));
    }
  }

  // Intensity per class with a per-channel gain, over a textured background.
  std::vector<double> level(static_cast<std::size_t>(spec.num_classes));
  for (std::int64_t k = 0; k < spec.num_classes; ++k)
    level[static_cast<std::size_t>(k)] = 0.8 * static_cast<double>(k) / static_cast<double>(spec.num_classes - 1);
  std::vector<double> values(static_cast<std::size_t>(spec.channels * P));
  for (std::int64_t ch = 0; ch < spec.channels; ++ch) {
    SmoothField texture(rng, spec.extents);
    const double gain = rng.uniform(0.8, 1.2);
    double c[3];
    for (std::int64_t i = 0; i < P; ++i) {
      unravel(i, spec.extents, c);
      const double base = level[static_cast<std::size_t>(out.mask[static_cast<std::size_t>(i)])];
      values[static_cast<std::size_t>(ch * P + i)] =
          gain * base + 0.15 * texture(c, rank) + rng.normal(0, 0.05);
    }
  }
  out.input = to_tensor(values, image_shape(spec.channels, spec.extents));
  return out;
}

void NoiseSpec::validate() const {
  if (!(snr_ratio_lo >= 1.0)) throw ConfigError("snr ratio range must start at >= 1");
  if (!(snr_ratio_hi >= snr_ratio_lo)) throw ConfigError("snr ratio range must satisfy hi >= lo");
  if (!(base_snr > 0)) throw ConfigError("base_snr must be positive");
  if (fixed_ratio && !(*fixed_ratio >= 1.0)) throw ConfigError("snr ratio must be >= 1");
}

TaskSample gen_denoising(std::uint64_t seed, const DenoisingSpec& spec) {
  check_extents(spec.extents, spec.channels);
  spec.noise.validate();
  const auto rank = spec.extents.size();
  const auto P = pixel_count(spec.extents);
  Rng rng(seed);

  // Clean image: smooth field plus a few bright structures, in [0, 1] roughly.
  std::vector<double> clean(static_cast<std::size_t>(spec.channels * P));
  const int structures = static_cast<int>(rng.integer(2, 5));
  std::vector<Ellipsoid> shapes;
  std::vector<double> brightness;
  for (int k = 0; k < structures; ++k) {
    shapes.push_back(draw_shape(rng, spec.extents, 0.06, 0.2, false));
    brightness.push_back(rng.uniform(0.2, 0.5));
  }
  for (std::int64_t ch = 0; ch < spec.channels; ++ch) {
    SmoothField field(rng, spec.extents, 6, 2.0);
    double c[3];
    for (std::int64_t i = 0; i < P; ++i) {
      unravel(i, spec.extents, c);
      double v = 0.4 + 0.25 * field(c, rank);
      for (std::size_t k = 0; k < shapes.size(); ++k)
        if (shapes[k].contains(c, rank)) v += brightness[k];
      clean[static_cast<std::size_t>(ch * P + i)] = v;
    }
  }
  double ms = 0;
  for (double v : clean) ms += v * v;
  const double rms = std::sqrt(ms / static_cast<double>(clean.size()));
  if (!(rms > 0)) throw Error("degenerate (all-zero) clean image");

  const double r = spec.noise.fixed_ratio ? *spec.noise.fixed_ratio
                                          : rng.uniform(spec.noise.snr_ratio_lo, spec.noise.snr_ratio_hi);
  const double sigma0 = rms / spec.noise.base_snr;
  const double sigma = sigma0 * std::sqrt(std::max(0.0, r * r - 1.0));
  std::vector<double> noisy(clean);
  if (sigma > 0)
    for (auto& v : noisy) v += rng.normal(0, sigma);

  TaskSample out;
  out.kind = TaskKind::denoising;
  out.seed = seed;
  out.snr_ratio = r;
  out.clean = to_tensor(clean, image_shape(spec.channels, spec.extents));
  out.input = to_tensor(noisy, image_shape(spec.channels, spec.extents));
  return out;
}

double measured_snr(const Tensor& clean, const Tensor& noisy) {
  if (clean.shape() != noisy.shape()) throw ShapeError("measured_snr: shape mismatch");
  const auto c = clean.to_vector();
  const auto y = noisy.to_vector();
  double ms = 0, mean_n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    ms += c[i] * c[i];
    mean_n += y[i] - c[i];
  }
  const double n = static_cast<double>(c.size());
  mean_n /= n;
  double var = 0;
  for (std::size_t i = 0; i < c.size(); ++i) var += (y[i] - c[i] - mean_n) * (y[i] - c[i] - mean_n);
  const double sigma = std::sqrt(var / (n - 1));
  return std::sqrt(ms / n) / sigma;
}

namespace {

void check_classification(const ClassificationSpec& spec) {
  check_extents(spec.extents, spec.channels);
  if (!(spec.positive_rate > 0 && spec.positive_rate < 1))
    throw ConfigError("positive_rate must lie in (0, 1)");
  if (!(spec.blob_radius > 0)) throw ConfigError("blob_radius must be positive");
}

}  // namespace

Tensor render_classification(std::uint64_t seed, const ClassificationSpec& spec, bool with_anomaly,
                             std::vector<std::uint8_t>* anomaly_mask) {
  check_classification(spec);
  const auto rank = spec.extents.size();
  const auto P = pixel_count(spec.extents);
  // Separate streams: the label draw must not shift the background.
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> values(static_cast<std::size_t>(spec.channels * P));
  std::vector<SmoothField> fields;
  for (std::int64_t ch = 0; ch < spec.channels; ++ch) fields.emplace_back(rng, spec.extents, 8, 4.0);
  for (std::int64_t ch = 0; ch < spec.channels; ++ch) {
    double c[3];
    for (std::int64_t i = 0; i < P; ++i) {
      unravel(i, spec.extents, c);
      values[static_cast<std::size_t>(ch * P + i)] = 0.5 + 0.3 * fields[static_cast<std::size_t>(ch)](c, rank) +
                                                     rng.normal(0, 0.05);
    }
  }

  // The blob is drawn whether or not it is used, so both twins share the stream.
  const double smallest = static_cast<double>(*std::min_element(spec.extents.begin(), spec.extents.end()));
  const double radius = std::max(1.5, spec.blob_radius * smallest);
  double center[3];
  for (std::size_t a = 0; a < rank; ++a)
    center[a] = rng.uniform(radius, static_cast<double>(spec.extents[a]) - 1 - radius);
  const double amp = spec.blob_amplitude * rng.uniform(0.8, 1.2);

  if (anomaly_mask) anomaly_mask->assign(static_cast<std::size_t>(P), 0);
  if (with_anomaly) {
    double c[3];
    for (std::int64_t i = 0; i < P; ++i) {
      unravel(i, spec.extents, c);
      double d2 = 0;
      for (std::size_t a = 0; a < rank; ++a) d2 += (c[a] - center[a]) * (c[a] - center[a]);
      const double d = std::sqrt(d2) / radius;
      if (d >= 1.0) continue;
      const double bump = amp * 0.5 * (1 + std::cos(std::numbers::pi * d));  // raised cosine
      for (std::int64_t ch = 0; ch < spec.channels; ++ch) values[static_cast<std::size_t>(ch * P + i)] += bump;
      if (anomaly_mask) (*anomaly_mask)[static_cast<std::size_t>(i)] = 1;
    }
  }
  return to_tensor(values, image_shape(spec.channels, spec.extents));
}

TaskSample gen_classification(std::uint64_t seed, const ClassificationSpec& spec) {
  check_classification(spec);
  Rng rng(seed);
  TaskSample out;
  out.kind = TaskKind::classification;
  out.seed = seed;
  out.label = rng.bernoulli(spec.positive_rate) ? 1 : 0;
  out.input = render_classification(seed, spec, out.label == 1);
  return out;
}

}  // namespace mixerbench
