#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mixerbench/params.hpp"
#include "mixerbench/tensor.hpp"

namespace mixerbench {

enum class MixerKind { attention, hyena, mamba_vision };

MixerKind parse_mixer(const std::string& name);
const char* mixer_name(MixerKind kind);

// A token mixer maps [B, n, d] (or [n, d]) to the same shape.
class Mixer {
 public:
  virtual ~Mixer() = default;
  virtual MixerKind kind() const = 0;
  virtual std::int64_t dim() const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  // FLOPs of forward() on a [batch, n, d] input, counted the same way the
  // primitives count them (2 per multiply-accumulate).
  virtual std::uint64_t flop_count(std::int64_t n, std::int64_t batch = 1) const = 0;
};

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

class Attention : public Mixer {
 public:
  Attention(ParameterSet& ps, const std::string& name, std::int64_t dim, std::int64_t num_heads,
            Rng& rng, DType dtype);

  MixerKind kind() const override { return MixerKind::attention; }
  std::int64_t dim() const override { return wq_.dim(0); }
  std::int64_t num_heads() const { return heads_; }
  Tensor forward(const Tensor& x) const override { return forward(x, Tensor()); }
  // bias is added to the pre-softmax scores and must broadcast against
  // [B, heads, n, n]; a ShiftMask bias is [windows, 1, n, n].
  Tensor forward(const Tensor& x, const Tensor& bias) const;
  std::uint64_t flop_count(std::int64_t n, std::int64_t batch = 1) const override;

  const Tensor& wq() const { return wq_; }
  const Tensor& wk() const { return wk_; }
  const Tensor& wv() const { return wv_; }
  const Tensor& wo() const { return wo_; }

 private:
  Tensor wq_, wk_, wv_, wo_;
  std::int64_t heads_;
};

// Region labels and additive score bias for shifted-window attention.
struct ShiftMask {
  Shape grid;                         // token grid extents
  std::int64_t window = 0;
  std::int64_t shift = 0;
  std::vector<std::int32_t> labels;   // per token, raster order over the grid
  std::int64_t num_regions = 0;
  Tensor bias;                        // [windows, 1, window^rank, window^rank]
};

// Regions are the pieces the cyclic shift cuts the grid into. The bias is 0
// for same-region pairs and -inf (f64) or -1e9 (f32) otherwise, laid out in
// window_partition order.
ShiftMask build_shift_mask(const Shape& grid, std::int64_t window, std::int64_t shift,
                           DType dtype = DType::f32);

// ---------------------------------------------------------------------------
// Hyena
// ---------------------------------------------------------------------------

struct HyenaOptions {
  std::int64_t order = 2;
  std::int64_t filter_hidden = 32;
  std::int64_t frequencies = 8;
  double min_decay = 3.0;   // alpha range, in units of 1/sequence length
  double max_decay = 15.0;
};

class Hyena : public Mixer {
 public:
  Hyena(ParameterSet& ps, const std::string& name, std::int64_t dim, Rng& rng, DType dtype,
        const HyenaOptions& options = {});

  MixerKind kind() const override { return MixerKind::hyena; }
  std::int64_t dim() const override { return out_proj_.w.dim(1); }
  std::int64_t order() const { return options_.order; }
  Tensor forward(const Tensor& x) const override;
  // The recurrence with caller-supplied filters (one [n, d] tensor per step).
  Tensor forward(const Tensor& x, const std::vector<Tensor>& filters) const;
  // Implicit filters for sequence length n: FFN(positional features) times a
  // decaying envelope exp(-alpha t / n).
  std::vector<Tensor> filters(std::int64_t n) const;
  // The envelope alone, [order, n, d].
  Tensor decay(std::int64_t n) const;
  std::uint64_t flop_count(std::int64_t n, std::int64_t batch = 1) const override;

  const Linear& in_proj() const { return in_proj_; }
  const Linear& out_proj() const { return out_proj_; }

 private:
  Tensor positional_features(std::int64_t n) const;

  HyenaOptions options_;
  Linear in_proj_;     // d -> (order + 1) d
  Linear filter_in_;   // features -> hidden
  Linear filter_out_;  // hidden -> order * d
  Linear out_proj_;    // d -> d
  Tensor log_alpha_;   // [order, d]
};

// ---------------------------------------------------------------------------
// MambaVision
// ---------------------------------------------------------------------------

struct MambaOptions {
  std::int64_t state = 16;
  std::int64_t conv_kernel = 3;
  std::int64_t dt_rank = 0;  // 0: ceil(d / 16)
  std::int64_t scan_chunk = 0;
};

class MambaVision : public Mixer {
 public:
  MambaVision(ParameterSet& ps, const std::string& name, std::int64_t dim, Rng& rng, DType dtype,
              const MambaOptions& options = {});

  MixerKind kind() const override { return MixerKind::mamba_vision; }
  std::int64_t dim() const override { return out_proj_.w.dim(1); }
  std::int64_t state() const { return options_.state; }
  std::int64_t dt_rank() const { return dt_rank_; }
  Tensor forward(const Tensor& x) const override;
  std::uint64_t flop_count(std::int64_t n, std::int64_t batch = 1) const override;

  // A = -exp(A_log), [d/2, state]
  Tensor A() const;

 private:
  MambaOptions options_;
  std::int64_t dt_rank_;
  Linear in_x_, in_z_;     // d -> d/2, no bias
  Tensor conv_x_w_, conv_x_b_, conv_z_w_, conv_z_b_;
  Linear x_proj_;          // d/2 -> dt_rank + 2 state, no bias
  Linear dt_proj_;         // dt_rank -> d/2, with bias
  Tensor A_log_;
  Linear out_proj_;        // d -> d
};

struct MixerOptions {
  std::int64_t num_heads = 4;
  HyenaOptions hyena;
  MambaOptions mamba;
};

std::unique_ptr<Mixer> make_mixer(MixerKind kind, ParameterSet& ps, const std::string& name,
                                  std::int64_t dim, Rng& rng, DType dtype,
                                  const MixerOptions& options = {});

// FLOPs of one forward pass for a freshly built mixer of this kind.
std::uint64_t flop_count(MixerKind kind, std::int64_t n, std::int64_t d,
                         const MixerOptions& options = {});

}  // namespace mixerbench
