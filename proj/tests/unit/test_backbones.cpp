#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mixerbench/config.hpp"
#include "mixerbench/layout.hpp"
#include "mixerbench/model.hpp"
#include "mixerbench/ops.hpp"
#include "testing.hpp"

using namespace mixerbench;
using testing::random_tensor;

namespace {

ModelConfig vit(MixerKind mixer, std::int64_t patch, std::int64_t d = 8, std::int64_t depth = 1) {
  ModelConfig c;
  c.mixer = mixer;
  c.patch_size = patch;
  c.embed_dim = d;
  c.depth = {depth};
  c.num_heads = 2;
  return c;
}

ModelConfig swin(MixerKind mixer, std::int64_t window, std::vector<std::int64_t> depth, std::int64_t patch = 2,
                 std::int64_t d = 8) {
  ModelConfig c = default_swin_config();
  c.mixer = mixer;
  c.window_size = window;
  c.patch_size = patch;
  c.embed_dim = d;
  c.depth = std::move(depth);
  c.num_heads = 2;
  return c;
}

Shape shape_with_channels(std::int64_t c, const Shape& ext) {
  Shape s{c};
  s.insert(s.end(), ext.begin(), ext.end());
  return s;
}

}  // namespace

// --- layout --------------------------------------------------------------

TEST_CASE("token counts from patch size") {
  CHECK(shape_numel(patch_grid({1024, 1024}, 16)) == 4096);
  CHECK(shape_numel(patch_grid({256, 256, 64}, 8)) == 8192);
  CHECK_THROWS_AS(patch_grid({30, 32}, 8), ShapeError);
}

TEST_CASE("context length") {
  ModelConfig v = vit(MixerKind::attention, 32);
  CHECK(context_length(v, {1024, 1024}) == 1024);
  v.patch_size = 8;
  CHECK(context_length(v, {1024, 1024}) == 16384);
  ModelConfig s = swin(MixerKind::attention, 16, {2});
  CHECK(context_length(s, {1024, 1024}) == 256);
}

TEST_CASE("patchify round trip") {
  Tensor img = random_tensor({3, 8, 12}, 1);
  Tensor p = patchify(img, 4);
  CHECK(p.shape() == Shape{6, 48});
  CHECK(testing::max_abs_diff(unpatchify(p, {2, 3}, 3, 4), img) == 0);
  Tensor vol = random_tensor({2, 4, 4, 8}, 2);
  CHECK(testing::max_abs_diff(unpatchify(patchify(vol, 2), {2, 2, 4}, 2, 2), vol) == 0);
  // first token holds channel 0's top-left patch first
  CHECK(p.at({0, 0}) == img.at({0, 0, 0}));
  CHECK(p.at({0, 5}) == img.at({0, 1, 1}));
  CHECK(p.at({1, 16}) == img.at({1, 0, 4}));
}

TEST_CASE("window partition counts and round trip") {
  Tensor g = random_tensor({64, 5}, 3);
  Tensor w = window_partition(g, {8, 8}, 4);
  CHECK(w.shape() == Shape{4, 16, 5});
  CHECK(testing::max_abs_diff(window_reverse(w, {8, 8}, 4), g) == 0);
  // window 1 is the top-right 4x4 block
  CHECK(w.at({1, 0, 0}) == g.at({4, 0}));
  Tensor g3 = random_tensor({64, 3}, 4);
  Tensor w3 = window_partition(g3, {4, 4, 4}, 2);
  CHECK(w3.shape() == Shape{8, 8, 3});
  CHECK(testing::max_abs_diff(window_reverse(w3, {4, 4, 4}, 2), g3) == 0);
}

TEST_CASE("cyclic shift") {
  Tensor g = random_tensor({48, 2}, 5);
  CHECK(testing::max_abs_diff(cyclic_shift(g, {6, 8}, 0), g) == 0);
  Tensor s = cyclic_shift(g, {6, 8}, 2);
  CHECK(testing::max_abs_diff(inverse_cyclic_shift(s, {6, 8}, 2), g) == 0);
  CHECK(s.at({0, 1}) == g.at({2 * 8 + 2, 1}));
}

TEST_CASE("grid helpers") {
  Tensor g = random_tensor({6, 2}, 6);
  Tensor p = pad_grid(g, {2, 3}, {4, 4});
  CHECK(p.shape() == Shape{16, 2});
  CHECK(p.at({3, 0}) == 0);
  CHECK(testing::max_abs_diff(crop_grid(p, {4, 4}, {2, 3}), g) == 0);
  Tensor m = merge_neighbors(random_tensor({16, 3}, 7), {4, 4});
  CHECK(m.shape() == Shape{4, 12});
  Tensor u = upsample_nearest(g, {2, 3}, 2);
  CHECK(u.shape() == Shape{24, 2});
  CHECK(u.at({7, 1}) == g.at({0, 1}));
  Tensor f = unfold(random_tensor({9, 1}, 8), {3, 3});
  CHECK(f.shape() == Shape{9, 9});
  CHECK(f.at({0, 0}) == 0);
  CHECK(f.at({4, 4}) != 0);
}

// --- config ----------------------------------------------------------------

TEST_CASE("config validation") {
  CHECK_NOTHROW(vit(MixerKind::hyena, 16).validate());
  CHECK_THROWS_AS(vit(MixerKind::hyena, 2).validate(), ConfigError);
  ModelConfig s = swin(MixerKind::attention, 8, {2, 2});
  CHECK_NOTHROW(s.validate());
  s.window_size = 6;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = swin(MixerKind::attention, 8, {2, 2}, 8);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  for (auto kind : {MixerKind::hyena, MixerKind::mamba_vision}) {
    ModelConfig alt = swin(kind, 4, {2});
    alt.shift_enabled = true;
    CHECK_THROWS_AS(alt.validate(), ConfigError);
  }
}

TEST_CASE("config text round trip and file loading") {
  ModelConfig c = swin(MixerKind::mamba_vision, 16, {2, 2, 6, 2}, 4, 48);
  ModelConfig back = ModelConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.hash() == c.hash());
  const auto path = std::filesystem::temp_directory_path() / "mixerbench_cfg_test.txt";
  std::ofstream(path) << "# comment\nbackbone = vit\nmixer = hyena\npatch_size = 8\nembed_dim=32\n";
  ModelConfig f = ModelConfig::load(path.string());
  CHECK(f.mixer == MixerKind::hyena);
  CHECK(f.patch_size == 8);
  CHECK(f.embed_dim == 32);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ModelConfig::from_text("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_text("patch_size = big\n"), ConfigError);
}

// --- vit -------------------------------------------------------------------

TEST_CASE("vit preserves token count") {
  for (std::int64_t side : {16, 32, 64}) {
    Model m(vit(MixerKind::attention, 4, 8, 2), 1, {side, side}, {}, 1, DType::f64);
    Tensor t = m.backbone(random_tensor({1, side, side}, 9));
    CHECK(t.shape() == Shape{side * side / 16, 8});
  }
}

TEST_CASE("vit with depth 0 heads straight off the embedding") {
  ModelConfig c = vit(MixerKind::attention, 4, 8, 0);
  Model m(c, 1, {8, 8}, {HeadKind::classification, 3}, 2, DType::f64);
  Tensor img = random_tensor({1, 8, 8}, 10);
  const auto& ps = m.parameters();
  Tensor emb = add(linear(patchify(img, 4), ps.get("backbone.patch_embed.weight"), ps.get("backbone.patch_embed.bias")),
                   ps.get("backbone.pos_embed"));
  CHECK(testing::max_abs_diff(m.backbone(img), emb) < 1e-14);
  Tensor logits = linear(layer_norm(mean(emb, 0, true), ps.get("head.norm.gamma"), ps.get("head.norm.beta"), 1e-5),
                         ps.get("head.fc.weight"), ps.get("head.fc.bias"));
  CHECK(testing::max_abs_diff(m.forward(img), reshape(logits, {3})) < 1e-14);
}

TEST_CASE("vit attention without positions permutes with its patches") {
  ModelConfig c = vit(MixerKind::attention, 4, 8, 2);
  c.pos_embed = PosEmbed::none;
  Model m(c, 2, {16, 16}, {}, 3, DType::f64);
  Tensor img = random_tensor({2, 16, 16}, 11);
  std::vector<std::int64_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.begin() + 7);
  std::swap(perm[3], perm[12]);
  Tensor shuffled = unpatchify(embedding(patchify(img, 4), perm), {4, 4}, 2, 4);
  Tensor lhs = m.backbone(shuffled);
  Tensor rhs = embedding(m.backbone(img), perm);
  CHECK(testing::max_abs_diff(lhs, rhs) < 1e-10);
}

// --- swin ------------------------------------------------------------------

TEST_CASE("swin stage grids and channels") {
  Model m(swin(MixerKind::attention, 4, {1, 1, 1, 1}), 1, {64, 64}, {}, 4, DType::f32);
  CHECK(m.stages() == 4);
  for (int s = 0; s < 4; ++s) {
    const std::int64_t g = 32 >> s;
    CHECK(m.stage_grid(s) == Shape{g, g});
    CHECK(m.stage_channels(s) == (8 << s));
  }
  auto enc = m.encode(random_tensor({1, 64, 64}, 12, -1, 1, DType::f32));
  CHECK(enc.tokens.shape() == Shape{16, 64});
  CHECK(enc.features.size() == 4);
}

TEST_CASE("swin rejects a grid smaller than the window") {
  CHECK_THROWS_AS(Model(swin(MixerKind::hyena, 8, {1, 1, 1, 1}), 1, {64, 64}, {}, 1), ShapeError);
}

TEST_CASE("swin shift schedule alternates") {
  ModelConfig c = swin(MixerKind::attention, 4, {2, 2});
  c.shift_enabled = true;
  Model m(c, 1, {32, 32}, {}, 5);
  CHECK(m.block_shift(0, 0) == 0);
  CHECK(m.block_shift(0, 1) == 2);
  CHECK(m.block_shift(1, 0) == 0);
  CHECK(m.block_shift(1, 1) == 2);
  c.shift_enabled = false;
  Model off(c, 1, {32, 32}, {}, 5);
  CHECK(off.block_shift(0, 1) == 0);
}

TEST_CASE("two encodings of no shift agree") {
  Model m(swin(MixerKind::attention, 4, {2, 2}), 1, {32, 32}, {}, 6, DType::f64);
  Tensor img = random_tensor({1, 32, 32}, 13);
  Tensor bypass = m.backbone(img);
  m.set_explicit_zero_shift(true);
  CHECK(testing::max_abs_diff(m.backbone(img), bypass) == 0);
}

TEST_CASE("a window covering the grid is global mixing") {
  ParameterSet ps;
  Rng rng(14);
  Attention att(ps, "a", 8, 2, rng, DType::f64);
  Tensor x = random_tensor({64, 8}, 15);
  CHECK(testing::max_abs_diff(window_mix(att, x, {8, 8}, 8, 0), att.forward(x)) < 1e-6);
  // and a shifted, masked step differs from the unshifted one
  auto mask = build_shift_mask({8, 8}, 4, 2, DType::f64);
  Tensor plain = window_mix(att, x, {8, 8}, 4, 0);
  Tensor shifted = window_mix(att, x, {8, 8}, 4, 2, mask.bias);
  CHECK(testing::max_abs_diff(plain, shifted) > 1e-6);
}

TEST_CASE("shifted attention gives cross-region pairs zero weight") {
  auto mask = build_shift_mask({8, 8}, 4, 2, DType::f64);
  Tensor scores = random_tensor({4, 1, 16, 16}, 16, -3, 3);
  Tensor w = masked_softmax(scores, mask.bias);
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t i = 0; i < 16; ++i)
      for (std::int64_t j = 0; j < 16; ++j)
        if (mask.bias.at({k, 0, i, j}) != 0) CHECK(w.at({k, 0, i, j}) < 1e-30);
}

// --- parameter counts ------------------------------------------------------

TEST_CASE("swin alternative mixers do not depend on the window") {
  for (auto kind : {MixerKind::attention, MixerKind::hyena, MixerKind::mamba_vision}) {
    Model a(swin(kind, 4, {1, 1, 1}), 1, {64, 64}, {HeadKind::pixel, 1}, 1);
    Model b(swin(kind, 8, {1, 1, 1}), 1, {64, 64}, {HeadKind::pixel, 1}, 1);
    CHECK(a.param_count().backbone == b.param_count().backbone);
    CHECK(a.param_count().head == b.param_count().head);
  }
}

TEST_CASE("vit patch size changes only embedding-related parameters") {
  const std::int64_t d = 16, C = 1;
  Model p16(vit(MixerKind::hyena, 16, d, 2), C, {64, 64}, {HeadKind::pixel, 1}, 1);
  Model p32(vit(MixerKind::hyena, 32, d, 2), C, {64, 64}, {HeadKind::pixel, 1}, 1);
  const std::int64_t embed_diff = d * C * (16 * 16 - 32 * 32) + d * (16 - 4);
  CHECK(p16.param_count().backbone - p32.param_count().backbone == embed_diff);
  const auto blocks = [](const Model& m) { return m.parameters().count("backbone.blocks."); };
  CHECK(blocks(p16) == blocks(p32));
  CHECK(p16.param_count().head != p32.param_count().head);
}

TEST_CASE("doubling width roughly quadruples block parameters") {
  Model a(vit(MixerKind::attention, 16, 32, 2), 1, {64, 64}, {}, 1);
  Model b(vit(MixerKind::attention, 16, 64, 2), 1, {64, 64}, {}, 1);
  const auto blocks = [](const Model& m) { return static_cast<double>(m.parameters().count("backbone.blocks.")); };
  const double r = blocks(b) / blocks(a);
  CHECK(r > 3.8);
  CHECK(r <= 4.0);
  const auto proj = [](const Model& m) { return m.parameters().count("backbone.blocks.0.mixer.w"); };
  CHECK(proj(b) == 4 * proj(a));
}

// --- sweep grid at desk scale ----------------------------------------------

TEST_CASE("every sweep configuration runs forward and backward") {
  MemoryBudgetScope budget(std::size_t{1} << 30);
  int ran = 0, skipped = 0;
  for (auto kind : {MixerKind::attention, MixerKind::hyena, MixerKind::mamba_vision})
    for (auto [channels, rank] : {std::pair<std::int64_t, int>{1, 2}, {3, 2}, {1, 3}}) {
      std::vector<ModelConfig> cfgs;
      for (std::int64_t p : {4, 8, 16, 32}) cfgs.push_back(vit(kind, p, 8, 1));
      for (std::int64_t w : {4, 8, 16})
        for (std::int64_t p : {2, 4}) cfgs.push_back(swin(kind, w, {1, 1}, p, 8));
      for (auto c : cfgs) {
        c.spatial_rank = rank;
        if (rank == 3 && c.backbone == Backbone::swin && c.window_size > 4) continue;
        // smallest extents the configuration accepts
        const std::int64_t side = c.backbone == Backbone::vit ? 32 : c.patch_size * 2 * c.window_size;
        const Shape ext(static_cast<std::size_t>(rank), side);
        CAPTURE(c.to_text());
        try {
          Model m(c, channels, ext, {}, 1);
          Tensor img = random_tensor(shape_with_channels(channels, ext), 17, -1, 1, DType::f32);
          Tape tape;
          TapeScope scope(&tape);
          Tensor loss = sum(m.backbone(img));
          Gradients g = tape.backward(loss);
          CHECK(g.size() > 0);
          ++ran;
        } catch (const MemoryBudgetExceeded&) {
          ++skipped;
        }
      }
    }
  CHECK(ran > 0);
  MESSAGE("ran " << ran << ", over budget " << skipped);
}
