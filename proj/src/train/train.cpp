#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixerbench/ops.hpp"
#include "mixerbench/train.hpp"

namespace mixerbench {

Dataset make_dataset(const std::function<TaskSample(std::uint64_t)>& generator, std::size_t n,
                     std::uint64_t base_seed) {
  if (n < 5) throw ConfigError("a dataset needs at least 5 samples for a 60/20/20 split");
  const std::size_t n_train = n * 60 / 100;
  const std::size_t n_val = n * 20 / 100;
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = generator(base_seed + i);
    if (i < n_train) d.train.push_back(std::move(s));
    else if (i < n_train + n_val) d.val.push_back(std::move(s));
    else d.test.push_back(std::move(s));
  }
  return d;
}

Tensor sample_loss(const Tensor& pred, const TaskSample& sample, const TrainConfig& config) {
  if (config.loss_kind == LossKind::denoise) {
    if (!sample.clean.defined()) throw ConfigError("denoise loss needs samples with a clean target");
    return denoise_loss(pred, sample.clean.to(pred.dtype()), config.denoise);
  }
  switch (sample.kind) {
    case TaskKind::segmentation:
      return segmentation_loss(pred, sample.mask);
    case TaskKind::classification: {
      const std::int32_t label[1] = {sample.label};
      return cross_entropy(reshape(pred, {1, pred.numel()}), label);
    }
    case TaskKind::denoising:
      break;
  }
  throw ConfigError("cross entropy loss does not apply to denoising samples");
}

double mean_loss(const ForwardFn& forward, const std::vector<TaskSample>& samples, const TrainConfig& config) {
  if (samples.empty()) throw ConfigError("mean_loss: no samples");
  TapeScope pause(nullptr);
  double total = 0;
  for (const auto& s : samples) total += sample_loss(forward(s.input), s, config).item();
  return total / static_cast<double>(samples.size());
}

Checkpoint snapshot(const ParameterSet& params, double val_loss, std::int64_t step, std::uint64_t config_hash) {
  Checkpoint c;
  c.val_loss = val_loss;
  c.step = step;
  c.config_hash = config_hash;
  for (const auto& p : params.items()) c.params.push_back({p.name, p.value.clone()});
  return c;
}

void restore(ParameterSet& params, const Checkpoint& checkpoint) {
  if (checkpoint.params.size() != params.size())
    throw ShapeError("checkpoint has " + std::to_string(checkpoint.params.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& dst = params.items()[i];
    const auto& src = checkpoint.params[i];
    if (dst.name != src.name || dst.value.shape() != src.value.shape())
      throw ShapeError("checkpoint parameter " + src.name + " " + shape_str(src.value.shape()) +
                       " does not match " + dst.name + " " + shape_str(dst.value.shape()));
    dst.value.assign(src.value.dtype() == dst.value.dtype() ? src.value : src.value.to(dst.value.dtype()));
  }
}

TrainResult train(ParameterSet& params, const ForwardFn& forward, const Dataset& data, const TrainConfig& config,
                  std::uint64_t config_hash) {
  config.validate();
  if (data.train.empty() || data.val.empty()) throw ConfigError("train: empty train or validation split");

  const auto n_train = static_cast<std::int64_t>(data.train.size());
  const std::int64_t steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  std::int64_t total = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  const std::int64_t eval_every = config.eval_every > 0 ? config.eval_every : steps_per_epoch;

  Rng rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle on the first step

  AdamState state;
  TrainResult result;
  result.total_steps = total;
  result.best = snapshot(params, INFINITY, -1, config_hash);
  double running = 0;
  std::int64_t running_n = 0;

  for (std::int64_t step = 0; step < total; ++step) {
    const double lr = one_cycle_lr(step, total, config);
    Tape tape;
    Gradients grads;
    double loss_value = 0;
    try {
      TapeScope scope(&tape);
      Tensor loss;
      for (std::int64_t b = 0; b < config.batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng.engine());
          cursor = 0;
        }
        TaskSample sample = data.train[order[cursor++]];
        if (config.augment) sample = augment(sample, augment_defaults(sample.kind), rng);
        auto l = sample_loss(forward(sample.input), sample, config);
        loss = loss.defined() ? add(loss, l) : l;
      }
      loss = mul_scalar(loss, 1.0 / static_cast<double>(config.batch_size));
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw NonFiniteError("loss is " + std::to_string(loss_value));
      grads = tape.backward(loss);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("training diverged at step " + std::to_string(step) + " (lr " + std::to_string(lr) +
                           "): " + e.what());
    }
    adam_step(params, grads, state, lr);
    running += loss_value;
    ++running_n;

    if ((step + 1) % eval_every == 0 || step + 1 == total) {
      const double val = mean_loss(forward, data.val, config);
      result.curve.push_back({step + 1, running / static_cast<double>(running_n), val, lr});
      running = 0;
      running_n = 0;
      if (val < result.best.val_loss) result.best = snapshot(params, val, step + 1, config_hash);
    }
  }
  restore(params, result.best);
  return result;
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config) {
  const Model& m = model;
  const auto dtype = model.dtype();
  ForwardFn forward = [&m, dtype](const Tensor& input) {
    return m.forward(input.dtype() == dtype ? input : input.to(dtype));
  };
  return train(model.parameters(), forward, data, config, model.config().hash());
}

}  // namespace mixerbench
