#include "mixerbench/model.hpp"

#include <cmath>

#include "mixerbench/layout.hpp"
#include "mixerbench/ops.hpp"

namespace mixerbench {

namespace {

struct Block {
  LayerNorm norm1, norm2;
  std::unique_ptr<Mixer> mixer;
  Linear fc1, fc2;

  Block(ParameterSet& ps, const std::string& name, std::int64_t dim, std::int64_t heads, MixerKind kind,
        Rng& rng, DType dtype, MixerOptions opt) {
    norm1 = LayerNorm(ps, name + ".norm1", dim, dtype);
    opt.num_heads = heads;
    mixer = make_mixer(kind, ps, name + ".mixer", dim, rng, dtype, opt);
    norm2 = LayerNorm(ps, name + ".norm2", dim, dtype);
    fc1 = Linear(ps, name + ".mlp.fc1", dim, 4 * dim, rng, dtype);
    fc2 = Linear(ps, name + ".mlp.fc2", 4 * dim, dim, rng, dtype);
  }

  Tensor mix(const Tensor& x, const Tensor& bias) const {
    if (bias.defined()) return static_cast<const Attention&>(*mixer).forward(x, bias);
    return mixer->forward(x);
  }
  Tensor mlp(const Tensor& x) const { return add(x, fc2(gelu(fc1(norm2(x))))); }
};

std::int64_t log2_exact(std::int64_t v) {
  std::int64_t k = 0;
  while ((std::int64_t{1} << k) < v) ++k;
  return k;
}

// Progressive x2 upsampling from patch resolution to pixels, then a 3^r
// "conv" over [features, input image] and a pointwise output layer.
struct UpsampleTail {
  std::vector<Linear> ups;
  Linear fuse, out;

  UpsampleTail() = default;
  UpsampleTail(ParameterSet& ps, const std::string& name, std::int64_t channels, std::int64_t patch,
               int rank, std::int64_t in_channels, std::int64_t outputs, Rng& rng, DType dtype) {
    const std::int64_t steps = log2_exact(patch);
    const std::int64_t fan = std::int64_t{1} << rank;
    std::int64_t c = channels;
    for (std::int64_t i = 0; i < steps; ++i) {
      const std::int64_t next = std::max<std::int64_t>(c / 2, 8);
      ups.emplace_back(ps, name + ".up" + std::to_string(i), c, fan * next, rng, dtype);
      c = next;
    }
    std::int64_t k = 1;
    for (int a = 0; a < rank; ++a) k *= 3;
    fuse = Linear(ps, name + ".fuse", k * (c + in_channels), c, rng, dtype);
    out = Linear(ps, name + ".out", c, outputs, rng, dtype);
  }

  Tensor operator()(Tensor t, Shape grid, const Tensor& image) const {
    for (const auto& up : ups) {
      t = gelu(pixel_shuffle(up(t), grid, 2));
      for (auto& g : grid) g *= 2;
    }
    t = concat({t, image_to_tokens(image)}, 1);
    t = gelu(fuse(unfold(t, grid)));
    return tokens_to_image(out(t), grid);
  }
};

Shape ceil_half(const Shape& g) {
  Shape r = g;
  for (auto& v : r) v = (v + 1) / 2;
  return r;
}

Shape round_up(const Shape& g, std::int64_t m) {
  Shape r = g;
  for (auto& v : r) v = (v + m - 1) / m * m;
  return r;
}

}  // namespace

Tensor window_mix(const Mixer& mixer, const Tensor& tokens, const Shape& grid, std::int64_t window,
                  std::int64_t shift, const Tensor& bias) {
  const Shape padded = round_up(grid, window);
  Tensor h = pad_grid(tokens, grid, padded);
  if (shift > 0 || bias.defined()) h = cyclic_shift(h, padded, shift);
  Tensor win = window_partition(h, padded, window);
  if (bias.defined()) {
    if (mixer.kind() != MixerKind::attention) throw ConfigError("window_mix: a mask needs an attention mixer");
    win = static_cast<const Attention&>(mixer).forward(win, bias);
  } else {
    win = mixer.forward(win);
  }
  h = window_reverse(win, padded, window);
  if (shift > 0 || bias.defined()) h = inverse_cyclic_shift(h, padded, shift);
  return crop_grid(h, padded, grid);
}

struct Model::Impl {
  ModelConfig config;
  Shape extents;
  std::int64_t in_channels;
  HeadSpec head;
  DType dtype;
  ParameterSet ps;
  bool explicit_zero_shift = false;

  // shared
  Linear patch_embed;
  LayerNorm embed_norm;  // swin
  Tensor pos;            // vit, learned
  Shape grid0;

  // vit
  std::vector<Block> blocks;
  std::vector<std::int64_t> taps;  // block counts after which features are kept

  // swin
  struct Stage {
    std::vector<Block> blocks;
    Shape grid, padded;
    std::int64_t channels;
    ShiftMask mask;  // for shifted blocks
    std::int64_t shift = 0;
    LayerNorm merge_norm;
    Linear merge;  // into the next stage
    bool merges = false;
  };
  std::vector<Stage> stages;

  // heads
  LayerNorm cls_norm;
  Linear cls;
  Linear vit_proj;
  std::vector<Linear> laterals;
  Linear fpn_fuse;
  UpsampleTail tail;

  Tensor embed(const Tensor& image) const {
    if (image.rank() != config.spatial_rank + 1 || image.dim(0) != in_channels ||
        spatial_extents(image) != extents)
      throw ShapeError("model built for image [" + std::to_string(in_channels) + ", " + shape_str(extents) +
                       "] got " + shape_str(image.shape()));
    Tensor t = patch_embed(patchify(image, config.patch_size));
    if (pos.defined()) t = add(t, pos);
    if (config.backbone == Backbone::swin) t = embed_norm(t);
    return t;
  }

  Tensor swin_block(const Block& b, const Stage& st, const Tensor& x, std::int64_t shift) const {
    Tensor bias;
    if (shift > 0)
      bias = st.mask.bias;
    else if (explicit_zero_shift && b.mixer->kind() == MixerKind::attention)
      bias = build_shift_mask(st.padded, config.window_size, 0, dtype).bias;
    Tensor h = window_mix(*b.mixer, b.norm1(x), st.grid, config.window_size, shift, bias);
    return b.mlp(add(x, h));
  }

  EncoderOutput encode(const Tensor& image) const {
    EncoderOutput out;
    Tensor t = embed(image);
    if (config.backbone == Backbone::vit) {
      std::size_t next_tap = 0;
      for (std::size_t i = 0; i <= blocks.size(); ++i) {
        while (next_tap < taps.size() && taps[next_tap] == static_cast<std::int64_t>(i)) {
          out.features.push_back(t);
          out.grids.push_back(grid0);
          ++next_tap;
        }
        if (i == blocks.size()) break;
        const Block& b = blocks[i];
        t = b.mlp(add(t, b.mix(b.norm1(t), Tensor())));
      }
      out.tokens = t;
      out.grid = grid0;
      return out;
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const Stage& st = stages[s];
      for (std::size_t j = 0; j < st.blocks.size(); ++j)
        t = swin_block(st.blocks[j], st, t, j % 2 == 1 ? st.shift : 0);
      out.features.push_back(t);
      out.grids.push_back(st.grid);
      if (st.merges) {
        const Shape even = round_up(st.grid, 2);
        t = st.merge(st.merge_norm(merge_neighbors(pad_grid(t, st.grid, even), even)));
      }
    }
    out.tokens = out.features.back();
    out.grid = out.grids.back();
    return out;
  }

  Tensor forward(const Tensor& image) const {
    EncoderOutput enc = encode(image);
    switch (head.kind) {
      case HeadKind::none:
        return enc.tokens;
      case HeadKind::classification:
        return reshape(cls(cls_norm(mean(enc.tokens, 0, true))), {head.outputs});
      case HeadKind::pixel:
        break;
    }
    Tensor t;
    if (config.backbone == Backbone::vit) {
      t = vit_proj(concat(enc.features, 1));
    } else {
      // top-down pathway, then every level upsampled to stage 0 and summed
      std::vector<Tensor> p(stages.size());
      for (std::size_t s = stages.size(); s-- > 0;) {
        p[s] = laterals[s](enc.features[s]);
        if (s + 1 < stages.size()) {
          Shape up = stages[s + 1].grid;
          for (auto& g : up) g *= 2;
          p[s] = add(p[s], crop_grid(upsample_nearest(p[s + 1], stages[s + 1].grid, 2), up, stages[s].grid));
        }
      }
      Tensor fused = p[0];
      for (std::size_t s = 1; s < stages.size(); ++s) {
        const std::int64_t f = std::int64_t{1} << s;
        Shape up = stages[s].grid;
        for (auto& g : up) g *= f;
        fused = add(fused, crop_grid(upsample_nearest(p[s], stages[s].grid, f), up, grid0));
      }
      t = gelu(fpn_fuse(unfold(fused, grid0)));
    }
    return tail(t, grid0, image);
  }
};

Model::Model(const ModelConfig& config, std::int64_t in_channels, const Shape& extents, HeadSpec head,
             std::uint64_t seed, DType dtype, const MixerOptions& mixer_options)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  if (static_cast<int>(extents.size()) != config.spatial_rank)
    throw ShapeError("image extents " + shape_str(extents) + " do not have rank " +
                     std::to_string(config.spatial_rank));
  if (in_channels <= 0) throw ConfigError("in_channels must be positive");
  Impl& m = *impl_;
  m.config = config;
  m.extents = extents;
  m.in_channels = in_channels;
  m.head = head;
  m.dtype = dtype;
  Rng rng(seed);
  ParameterSet& ps = m.ps;
  const int r = config.spatial_rank;
  const std::int64_t d = config.embed_dim;
  std::int64_t pv = 1;
  for (int a = 0; a < r; ++a) pv *= config.patch_size;
  m.grid0 = patch_grid(extents, config.patch_size);
  const std::int64_t n0 = shape_numel(m.grid0);

  m.patch_embed = Linear(ps, "backbone.patch_embed", in_channels * pv, d, rng, dtype);
  if (config.pos_embed == PosEmbed::learned)
    m.pos = ps.add("backbone.pos_embed", init_normal(rng, {n0, d}, 0.02, dtype));

  std::int64_t final_channels = d;
  if (config.backbone == Backbone::vit) {
    const std::int64_t depth = config.depth[0];
    for (std::int64_t i = 0; i < depth; ++i)
      m.blocks.emplace_back(ps, "backbone.blocks." + std::to_string(i), d, config.num_heads, config.mixer, rng,
                            dtype, mixer_options);
    m.taps = {(depth + 2) / 3, (2 * depth + 2) / 3, depth};
  } else {
    m.embed_norm = LayerNorm(ps, "backbone.embed_norm", d, dtype);
    Shape grid = m.grid0;
    const std::int64_t w = config.window_size;
    for (std::size_t s = 0; s < config.depth.size(); ++s) {
      for (auto g : grid)
        if (g < w)
          throw ShapeError("swin stage " + std::to_string(s) + " grid " + shape_str(grid) +
                           " is smaller than window " + std::to_string(w) + "; use a larger image or smaller window");
      Impl::Stage st;
      st.grid = grid;
      st.padded = round_up(grid, w);
      st.channels = d << s;
      const std::string name = "backbone.stages." + std::to_string(s);
      for (std::int64_t j = 0; j < config.depth[s]; ++j)
        st.blocks.emplace_back(ps, name + ".blocks." + std::to_string(j), st.channels, config.num_heads << s,
                               config.mixer, rng, dtype, mixer_options);
      bool fits = true;
      for (auto g : st.padded) fits = fits && g > w;
      if (config.shift_enabled && fits) {
        st.shift = w / 2;
        st.mask = build_shift_mask(st.padded, w, st.shift, dtype);
      }
      if (s + 1 < config.depth.size()) {
        st.merges = true;
        const std::int64_t fan = std::int64_t{1} << r;
        st.merge_norm = LayerNorm(ps, name + ".merge.norm", fan * st.channels, dtype);
        st.merge = Linear(ps, name + ".merge.reduce", fan * st.channels, 2 * st.channels, rng, dtype, false);
        grid = ceil_half(grid);
      }
      final_channels = st.channels;
      m.stages.push_back(std::move(st));
    }
  }

  switch (head.kind) {
    case HeadKind::none:
      break;
    case HeadKind::classification:
      if (head.outputs < 2) throw ConfigError("classification head needs at least 2 classes");
      m.cls_norm = LayerNorm(ps, "head.norm", final_channels, dtype);
      m.cls = Linear(ps, "head.fc", final_channels, head.outputs, rng, dtype);
      break;
    case HeadKind::pixel:
      if (head.outputs < 1) throw ConfigError("pixel head needs at least one output channel");
      if (config.backbone == Backbone::vit) {
        m.vit_proj = Linear(ps, "head.proj", 3 * d, d, rng, dtype);
      } else {
        for (std::size_t s = 0; s < m.stages.size(); ++s)
          m.laterals.emplace_back(ps, "head.lateral" + std::to_string(s), m.stages[s].channels, d, rng, dtype);
        std::int64_t k = 1;
        for (int a = 0; a < r; ++a) k *= 3;
        m.fpn_fuse = Linear(ps, "head.fpn_fuse", k * d, d, rng, dtype);
      }
      m.tail = UpsampleTail(ps, "head.tail", d, config.patch_size, r, in_channels, head.outputs, rng, dtype);
      break;
  }
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

const ModelConfig& Model::config() const { return impl_->config; }
const Shape& Model::extents() const { return impl_->extents; }
std::int64_t Model::in_channels() const { return impl_->in_channels; }
DType Model::dtype() const { return impl_->dtype; }
const HeadSpec& Model::head() const { return impl_->head; }
EncoderOutput Model::encode(const Tensor& image) const { return impl_->encode(image); }
Tensor Model::forward(const Tensor& image) const { return impl_->forward(image); }
ParameterSet& Model::parameters() { return impl_->ps; }
const ParameterSet& Model::parameters() const { return impl_->ps; }

Model::ParamCounts Model::param_count() const {
  return {impl_->ps.count("backbone."), impl_->ps.count("head.")};
}

int Model::stages() const {
  return impl_->config.backbone == Backbone::vit ? 1 : static_cast<int>(impl_->stages.size());
}

Shape Model::stage_grid(int stage) const {
  if (impl_->config.backbone == Backbone::vit) return impl_->grid0;
  return impl_->stages.at(static_cast<std::size_t>(stage)).grid;
}

std::int64_t Model::stage_channels(int stage) const {
  if (impl_->config.backbone == Backbone::vit) return impl_->config.embed_dim;
  return impl_->stages.at(static_cast<std::size_t>(stage)).channels;
}

std::int64_t Model::block_shift(int stage, int block) const {
  if (impl_->config.backbone == Backbone::vit) return 0;
  return block % 2 == 1 ? impl_->stages.at(static_cast<std::size_t>(stage)).shift : 0;
}

void Model::set_explicit_zero_shift(bool on) { impl_->explicit_zero_shift = on; }

}  // namespace mixerbench
