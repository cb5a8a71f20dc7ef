#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mixerbench/config.hpp"
#include "mixerbench/mixers.hpp"
#include "mixerbench/params.hpp"

namespace mixerbench {

// One Swin mixing step on a token grid: pad to a multiple of the window,
// cyclically shift, split into windows, mix each window as a sequence, and
// undo all of it. `bias` (optional) goes to attention's scores.
Tensor window_mix(const Mixer& mixer, const Tensor& tokens, const Shape& grid, std::int64_t window,
                  std::int64_t shift, const Tensor& bias = {});

enum class HeadKind { none, classification, pixel };

struct HeadSpec {
  HeadKind kind = HeadKind::none;
  // pixel: output channels; classification: number of classes
  std::int64_t outputs = 1;
};

struct EncoderOutput {
  Tensor tokens;  // final tokens [n, channels]
  Shape grid;     // grid of `tokens`
  // vit: token maps after the tapped blocks (all on one grid);
  // swin: the output of every stage
  std::vector<Tensor> features;
  std::vector<Shape> grids;
};

// A ViT or Swin backbone with an optional task head, built for one image
// geometry ([channels, extents...]). Parameter names start with "backbone."
// or "head.".
class Model {
 public:
  Model(const ModelConfig& config, std::int64_t in_channels, const Shape& extents, HeadSpec head,
        std::uint64_t seed, DType dtype = DType::f32, const MixerOptions& mixer_options = {});
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;

  const ModelConfig& config() const;
  const Shape& extents() const;
  std::int64_t in_channels() const;
  DType dtype() const;
  const HeadSpec& head() const;

  EncoderOutput encode(const Tensor& image) const;
  // Backbone only: the final token map.
  Tensor backbone(const Tensor& image) const { return encode(image).tokens; }
  // Head output: [outputs, extents...] for pixel heads, [outputs] for
  // classification, backbone tokens when there is no head.
  Tensor forward(const Tensor& image) const;

  ParameterSet& parameters();
  const ParameterSet& parameters() const;
  struct ParamCounts {
    std::int64_t backbone = 0;
    std::int64_t head = 0;
  };
  ParamCounts param_count() const;

  // number of stages (1 for vit)
  int stages() const;
  // token grid and channel width seen by the blocks of a stage
  Shape stage_grid(int stage) const;
  std::int64_t stage_channels(int stage) const;
  // cyclic shift applied by block `block` of `stage` (swin)
  std::int64_t block_shift(int stage, int block) const;

  // Routes unshifted swin blocks through the shift path with shift 0 and an
  // all-zero mask instead of skipping it. Outputs must not change.
  void set_explicit_zero_shift(bool on);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mixerbench
