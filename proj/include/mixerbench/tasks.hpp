#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixerbench/params.hpp"
#include "mixerbench/tensor.hpp"

namespace mixerbench {

enum class TaskKind : std::uint8_t { segmentation = 0, denoising = 1, classification = 2 };

TaskKind parse_task(const std::string& name);
const char* task_name(TaskKind kind);

struct TaskSample {
  TaskKind kind = TaskKind::segmentation;
  std::uint64_t seed = 0;
  Tensor input;                    // [C, spatial...]
  std::vector<std::int32_t> mask;  // segmentation: class per pixel, raster order
  Tensor clean;                    // denoising: [C, spatial...]
  std::int32_t label = -1;         // classification
  double snr_ratio = 1.0;          // denoising: the drawn r
};

// --- generators -------------------------------------------------------------
// All generators are pure functions of (seed, spec).

struct SegmentationSpec {
  Shape extents{64, 64};
  std::int64_t channels = 1;
  std::int64_t num_shapes = 3;
  std::int64_t num_classes = 3;  // background included
  double min_radius = 0.08;      // fractions of the smallest extent
  double max_radius = 0.25;
  // accepted foreground fraction; shapes are redrawn until it holds
  double min_foreground = 0.02;
  double max_foreground = 0.6;
};

struct NoiseSpec {
  double snr_ratio_lo = 1.0;
  double snr_ratio_hi = 40.0;
  // SNR (signal RMS / noise sigma) attributed to the clean image; the noise
  // already in it is sigma0 = rms / base_snr, and degrading by r adds
  // white Gaussian noise of sigma0 * sqrt(r^2 - 1).
  double base_snr = 40.0;
  std::optional<double> fixed_ratio;  // bypasses the draw when set
  void validate() const;
};

struct DenoisingSpec {
  Shape extents{64, 64};
  std::int64_t channels = 1;
  NoiseSpec noise;
};

struct ClassificationSpec {
  Shape extents{64, 64};
  std::int64_t channels = 1;
  double positive_rate = 0.15;
  double blob_radius = 0.08;  // fraction of the smallest extent
  double blob_amplitude = 0.6;
};

TaskSample gen_segmentation(std::uint64_t seed, const SegmentationSpec& spec);
TaskSample gen_denoising(std::uint64_t seed, const DenoisingSpec& spec);
TaskSample gen_classification(std::uint64_t seed, const ClassificationSpec& spec);
// The sample for `seed` rendered with or without its anomaly; the background
// is identical either way. `anomaly_mask` (optional) receives the blob support.
Tensor render_classification(std::uint64_t seed, const ClassificationSpec& spec, bool with_anomaly,
                             std::vector<std::uint8_t>* anomaly_mask = nullptr);

// signal RMS / noise sigma, both measured
double measured_snr(const Tensor& clean, const Tensor& noisy);

// --- serialization ------------------------------------------------------------
// Byte layout in docs/FORMATS.md.

void write_sample(std::ostream& out, const TaskSample& sample);
TaskSample read_sample(std::istream& in);
void save_sample(const std::string& path, const TaskSample& sample);
TaskSample load_sample(const std::string& path);

// --- metrics ----------------------------------------------------------------

// 2|P and T| / (|P| + |T|) for one class; 1 when both are empty.
double dice(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::int32_t class_id);

// Mean SSIM over all fully contained 7-wide uniform windows of a 2D or 3D
// array (the tensor's whole shape is spatial). C1 = (0.01 L)^2,
// C2 = (0.03 L)^2. Without L, L is the joint dynamic range of x and y.
double ssim(const Tensor& x, const Tensor& y);
double ssim(const Tensor& x, const Tensor& y, double dynamic_range);
// [C, spatial...] images: channel-averaged, L from the target's range.
double ssim_image(const Tensor& pred, const Tensor& target);

// Mann-Whitney AUROC, ties count 1/2.
double auroc(std::span<const double> scores, std::span<const std::int32_t> labels);

struct Interval {
  double lo = 0, hi = 0, point = 0;
};

// Percentile bootstrap. metric(indices) evaluates the statistic on a
// resample given as indices into the n samples; resamples where the metric
// throws (e.g. single-class AUROC) are redrawn.
Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n,
                      std::size_t n_boot = 1000, double level = 0.95, std::uint64_t seed = 0);

// --- losses -------------------------------------------------------------------

enum class GaussianTerm { blurred_mse, none };

struct DenoiseLossOptions {
  double charbonnier_eps = 1e-3;
  double blur_sigma = 1.5;
  GaussianTerm gaussian = GaussianTerm::blurred_mse;
};

struct DenoiseLossParts {
  Tensor total, mse, charbonnier, gaussian;
};

// MSE + mean sqrt((p - t)^2 + eps^2) + MSE(blur(p), blur(t)); p, t are [C, spatial...]
DenoiseLossParts denoise_loss_parts(const Tensor& pred, const Tensor& target,
                                    const DenoiseLossOptions& opt = {});
Tensor denoise_loss(const Tensor& pred, const Tensor& target, const DenoiseLossOptions& opt = {});

// per-pixel cross entropy; logits [K, spatial...]
Tensor segmentation_loss(const Tensor& logits, std::span<const std::int32_t> mask);
// argmax over the class axis of [K, spatial...]
std::vector<std::int32_t> argmax_classes(const Tensor& logits);

// --- augmentation -------------------------------------------------------------

struct AugmentConfig {
  double max_rotation_deg = 10.0;
  double max_translate = 0.05;  // fraction of each extent
  double max_scale = 0.10;
  double jitter_lo = 0.9, jitter_hi = 1.1;
  bool jitter = true;
  // Resamples with nearest neighbour and never jitters, so the noise level
  // in SNR-bearing (denoising) data is left as it is.
  bool snr_preserving = false;
};

struct AffineParams {
  double rotation_deg = 0;          // in the plane of the first two spatial axes
  std::vector<double> translate;    // pixels per spatial axis (empty = 0)
  double scale = 1;
  double jitter = 1;
};

// Default config for a task: denoising gets snr_preserving and no jitter.
AugmentConfig augment_defaults(TaskKind kind);
AffineParams draw_affine(Rng& rng, const Shape& extents, const AugmentConfig& config);
TaskSample apply_affine(const TaskSample& sample, const AffineParams& params, const AugmentConfig& config);
TaskSample augment(const TaskSample& sample, const AugmentConfig& config, Rng& rng);

}  // namespace mixerbench
