#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mixerbench/model.hpp"
#include "mixerbench/params.hpp"
#include "mixerbench/tasks.hpp"

namespace mixerbench {

// --- optimizer ------------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;  // one pair per parameter, created on the first step
  std::int64_t step = 0;
};

// Bias-corrected Adam without weight decay; updates params in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamOptions& opt = {});
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

enum class LossKind { cross_entropy, denoise };

struct TrainConfig {
  double max_lr = 1e-3;
  std::int64_t epochs = 20;
  std::int64_t batch_size = 1;
  double pct_warmup = 0.3;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::cross_entropy;
  std::int64_t eval_every = 0;  // steps; 0 = once per epoch
  std::int64_t max_steps = 0;   // caps the epoch budget; 0 = no cap
  bool augment = true;
  DenoiseLossOptions denoise;
  void validate() const;
};

// Cosine ramp max_lr/25 -> max_lr over pct_warmup*total steps, then cosine
// decay to max_lr/1e4 at step == total.
double one_cycle_lr(std::int64_t step, std::int64_t total, const TrainConfig& config);

// --- data -----------------------------------------------------------------------

struct Dataset {
  std::vector<TaskSample> train, val, test;
};

// n samples with seeds base_seed + i, split 60/20/20 in seed order.
Dataset make_dataset(const std::function<TaskSample(std::uint64_t)>& generator, std::size_t n,
                     std::uint64_t base_seed = 0);

// --- training -------------------------------------------------------------------

struct Checkpoint {
  std::vector<Parameter> params;  // deep copies
  double val_loss = 0;
  std::int64_t step = 0;
  std::uint64_t config_hash = 0;
};

struct CurvePoint {
  std::int64_t step = 0;
  double train_loss = 0;  // mean over the steps since the previous evaluation
  double val_loss = 0;
  double lr = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<CurvePoint> curve;
  std::int64_t total_steps = 0;
};

using ForwardFn = std::function<Tensor(const Tensor& input)>;

// Loss of one prediction against a sample's target, in the prediction's dtype.
Tensor sample_loss(const Tensor& pred, const TaskSample& sample, const TrainConfig& config);

// Trains params through `forward`, evaluating on data.val every eval_every
// steps. On return params hold the best (minimum validation loss) snapshot.
TrainResult train(ParameterSet& params, const ForwardFn& forward, const Dataset& data, const TrainConfig& config,
                  std::uint64_t config_hash = 0);
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config);

double mean_loss(const ForwardFn& forward, const std::vector<TaskSample>& samples, const TrainConfig& config);

// --- checkpoints and curves ---------------------------------------------------------

Checkpoint snapshot(const ParameterSet& params, double val_loss, std::int64_t step, std::uint64_t config_hash);
// Copies checkpoint values into params; names and shapes must match.
void restore(ParameterSet& params, const Checkpoint& checkpoint);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curve);

// --- evaluation -----------------------------------------------------------------

struct EvalReport {
  TaskKind kind = TaskKind::segmentation;
  std::string metric;               // "dice", "ssim" or "auroc"
  std::vector<double> per_sample;   // dice / ssim per sample; classification scores
  std::vector<std::int32_t> labels; // classification
  double baseline = 0;              // denoising: SSIM of the noisy input
  Interval ci;
};

// Segmentation: mean foreground Dice per sample. Denoising: SSIM against the
// clean image. Classification: AUROC of the positive-class probability.
EvalReport evaluate(const ForwardFn& forward, const std::vector<TaskSample>& samples, std::size_t n_boot = 1000,
                    std::uint64_t seed = 0);

}  // namespace mixerbench
