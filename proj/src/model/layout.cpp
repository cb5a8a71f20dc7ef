#include "mixerbench/layout.hpp"

#include <functional>

#include "mixerbench/ops.hpp"

namespace mixerbench {

namespace {

using Index = std::vector<std::int64_t>;

std::int64_t ipow(std::int64_t b, std::size_t e) {
  std::int64_t r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= b;
  return r;
}

// Visits every coordinate of `grid` in raster order.
void for_each_coord(const Shape& grid, const std::function<void(const Index&, std::int64_t)>& fn) {
  const std::int64_t n = shape_numel(grid);
  Index c(grid.size(), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    fn(c, i);
    for (std::size_t a = grid.size(); a-- > 0;) {
      if (++c[a] < grid[a]) break;
      c[a] = 0;
    }
  }
}

std::int64_t flat(const Index& c, const Shape& grid) {
  std::int64_t f = 0;
  for (std::size_t a = 0; a < grid.size(); ++a) f = f * grid[a] + c[a];
  return f;
}

void require_tokens(const Tensor& t, const Shape& grid, const char* who) {
  if (t.rank() != 2 || t.dim(0) != shape_numel(grid))
    throw ShapeError(std::string(who) + ": tokens " + shape_str(t.shape()) + " do not match grid " +
                     shape_str(grid));
}

IndexMap make_map(Index&& v) { return std::make_shared<const Index>(std::move(v)); }

Shape uniform_shape(std::size_t rank, std::int64_t v) { return Shape(rank, v); }

}  // namespace

Shape spatial_extents(const Tensor& image) {
  if (image.rank() < 2) throw ShapeError("image must be [C, spatial...], got " + shape_str(image.shape()));
  return Shape(image.shape().begin() + 1, image.shape().end());
}

Shape patch_grid(const Shape& extents, std::int64_t patch) {
  if (patch <= 0) throw ShapeError("patch size must be positive");
  Shape g;
  for (auto e : extents) {
    if (e % patch != 0)
      throw ShapeError("image extents " + shape_str(extents) + " are not divisible by patch size " +
                       std::to_string(patch));
    g.push_back(e / patch);
  }
  return g;
}

Tensor patchify(const Tensor& image, std::int64_t patch) {
  const Shape ext = spatial_extents(image);
  const Shape grid = patch_grid(ext, patch);
  const std::int64_t C = image.dim(0);
  const std::size_t r = ext.size();
  const std::int64_t pv = ipow(patch, r);
  const std::int64_t pixels = shape_numel(ext);
  const Shape local = uniform_shape(r, patch);
  Index map(static_cast<std::size_t>(shape_numel(grid) * C * pv));
  std::size_t o = 0;
  for_each_coord(grid, [&](const Index& g, std::int64_t) {
    for (std::int64_t c = 0; c < C; ++c)
      for_each_coord(local, [&](const Index& l, std::int64_t) {
        Index p(r);
        for (std::size_t a = 0; a < r; ++a) p[a] = g[a] * patch + l[a];
        map[o++] = c * pixels + flat(p, ext);
      });
  });
  return gather(image, {shape_numel(grid), C * pv}, make_map(std::move(map)));
}

Tensor pixel_shuffle(const Tensor& tokens, const Shape& grid, std::int64_t f) {
  require_tokens(tokens, grid, "pixel_shuffle");
  const std::size_t r = grid.size();
  const std::int64_t fv = ipow(f, r);
  if (tokens.dim(1) % fv != 0) throw ShapeError("pixel_shuffle: feature width not divisible by factor^rank");
  const std::int64_t C = tokens.dim(1) / fv;
  Shape fine = grid;
  for (auto& g : fine) g *= f;
  const Shape local = uniform_shape(r, f);
  Index map(static_cast<std::size_t>(shape_numel(fine) * C));
  for_each_coord(fine, [&](const Index& q, std::int64_t i) {
    Index g(r), l(r);
    for (std::size_t a = 0; a < r; ++a) {
      g[a] = q[a] / f;
      l[a] = q[a] % f;
    }
    const std::int64_t src = flat(g, grid) * tokens.dim(1);
    const std::int64_t off = flat(l, local);
    for (std::int64_t c = 0; c < C; ++c) map[static_cast<std::size_t>(i * C + c)] = src + c * fv + off;
  });
  return gather(tokens, {shape_numel(fine), C}, make_map(std::move(map)));
}

Tensor image_to_tokens(const Tensor& image) {
  const Shape ext = spatial_extents(image);
  return transpose(reshape(image, {image.dim(0), shape_numel(ext)}), 0, 1);
}

Tensor tokens_to_image(const Tensor& tokens, const Shape& grid) {
  require_tokens(tokens, grid, "tokens_to_image");
  Shape s{tokens.dim(1)};
  s.insert(s.end(), grid.begin(), grid.end());
  return reshape(transpose(tokens, 0, 1), s);
}

Tensor unpatchify(const Tensor& tokens, const Shape& grid, std::int64_t channels, std::int64_t patch) {
  if (tokens.rank() != 2 || tokens.dim(1) != channels * ipow(patch, grid.size()))
    throw ShapeError("unpatchify: token width does not match channels * patch^rank");
  Shape fine = grid;
  for (auto& g : fine) g *= patch;
  return tokens_to_image(pixel_shuffle(tokens, grid, patch), fine);
}

Tensor window_partition(const Tensor& tokens, const Shape& grid, std::int64_t w) {
  require_tokens(tokens, grid, "window_partition");
  const std::size_t r = grid.size();
  const Shape wgrid = patch_grid(grid, w);
  const Shape local = uniform_shape(r, w);
  const std::int64_t d = tokens.dim(1), per = ipow(w, r), nw = shape_numel(wgrid);
  Index map(static_cast<std::size_t>(nw * per * d));
  std::size_t o = 0;
  for_each_coord(wgrid, [&](const Index& wc, std::int64_t) {
    for_each_coord(local, [&](const Index& l, std::int64_t) {
      Index q(r);
      for (std::size_t a = 0; a < r; ++a) q[a] = wc[a] * w + l[a];
      const std::int64_t src = flat(q, grid) * d;
      for (std::int64_t c = 0; c < d; ++c) map[o++] = src + c;
    });
  });
  return gather(tokens, {nw, per, d}, make_map(std::move(map)));
}

Tensor window_reverse(const Tensor& windows, const Shape& grid, std::int64_t w) {
  const std::size_t r = grid.size();
  const Shape wgrid = patch_grid(grid, w);
  const std::int64_t per = ipow(w, r);
  if (windows.rank() != 3 || windows.dim(0) != shape_numel(wgrid) || windows.dim(1) != per)
    throw ShapeError("window_reverse: windows " + shape_str(windows.shape()) + " do not match grid " +
                     shape_str(grid));
  const std::int64_t d = windows.dim(2);
  Index map(static_cast<std::size_t>(shape_numel(grid) * d));
  for_each_coord(grid, [&](const Index& q, std::int64_t i) {
    Index wc(r), l(r);
    for (std::size_t a = 0; a < r; ++a) {
      wc[a] = q[a] / w;
      l[a] = q[a] % w;
    }
    const std::int64_t src = (flat(wc, wgrid) * per + flat(l, uniform_shape(r, w))) * d;
    for (std::int64_t c = 0; c < d; ++c) map[static_cast<std::size_t>(i * d + c)] = src + c;
  });
  return gather(windows, {shape_numel(grid), d}, make_map(std::move(map)));
}

namespace {

Tensor roll(const Tensor& tokens, const Shape& grid, std::int64_t shift, const char* who) {
  require_tokens(tokens, grid, who);
  if (shift == 0) return tokens;
  const std::size_t r = grid.size();
  const std::int64_t d = tokens.dim(1);
  Index map(static_cast<std::size_t>(tokens.numel()));
  for_each_coord(grid, [&](const Index& q, std::int64_t i) {
    Index s(r);
    for (std::size_t a = 0; a < r; ++a) s[a] = ((q[a] + shift) % grid[a] + grid[a]) % grid[a];
    const std::int64_t src = flat(s, grid) * d;
    for (std::int64_t c = 0; c < d; ++c) map[static_cast<std::size_t>(i * d + c)] = src + c;
  });
  return gather(tokens, tokens.shape(), make_map(std::move(map)));
}

}  // namespace

Tensor cyclic_shift(const Tensor& tokens, const Shape& grid, std::int64_t shift) {
  return roll(tokens, grid, shift, "cyclic_shift");
}

Tensor inverse_cyclic_shift(const Tensor& tokens, const Shape& grid, std::int64_t shift) {
  return roll(tokens, grid, -shift, "inverse_cyclic_shift");
}

Tensor pad_grid(const Tensor& tokens, const Shape& grid, const Shape& padded) {
  require_tokens(tokens, grid, "pad_grid");
  if (grid == padded) return tokens;
  const std::int64_t d = tokens.dim(1);
  Index map(static_cast<std::size_t>(shape_numel(padded) * d));
  for_each_coord(padded, [&](const Index& q, std::int64_t i) {
    bool inside = true;
    for (std::size_t a = 0; a < grid.size(); ++a) inside = inside && q[a] < grid[a];
    const std::int64_t src = inside ? flat(q, grid) * d : -1;
    for (std::int64_t c = 0; c < d; ++c) map[static_cast<std::size_t>(i * d + c)] = inside ? src + c : -1;
  });
  return gather(tokens, {shape_numel(padded), d}, make_map(std::move(map)));
}

Tensor crop_grid(const Tensor& tokens, const Shape& padded, const Shape& grid) {
  require_tokens(tokens, padded, "crop_grid");
  if (grid == padded) return tokens;
  const std::int64_t d = tokens.dim(1);
  Index map(static_cast<std::size_t>(shape_numel(grid) * d));
  for_each_coord(grid, [&](const Index& q, std::int64_t i) {
    const std::int64_t src = flat(q, padded) * d;
    for (std::int64_t c = 0; c < d; ++c) map[static_cast<std::size_t>(i * d + c)] = src + c;
  });
  return gather(tokens, {shape_numel(grid), d}, make_map(std::move(map)));
}

Tensor merge_neighbors(const Tensor& tokens, const Shape& grid) {
  require_tokens(tokens, grid, "merge_neighbors");
  const Shape coarse = patch_grid(grid, 2);
  const std::size_t r = grid.size();
  const std::int64_t d = tokens.dim(1), k = ipow(2, r);
  const Shape local = uniform_shape(r, 2);
  Index map(static_cast<std::size_t>(tokens.numel()));
  std::size_t o = 0;
  for_each_coord(coarse, [&](const Index& g, std::int64_t) {
    for_each_coord(local, [&](const Index& l, std::int64_t) {
      Index q(r);
      for (std::size_t a = 0; a < r; ++a) q[a] = 2 * g[a] + l[a];
      const std::int64_t src = flat(q, grid) * d;
      for (std::int64_t c = 0; c < d; ++c) map[o++] = src + c;
    });
  });
  return gather(tokens, {shape_numel(coarse), k * d}, make_map(std::move(map)));
}

Tensor upsample_nearest(const Tensor& tokens, const Shape& grid, std::int64_t f) {
  require_tokens(tokens, grid, "upsample_nearest");
  if (f == 1) return tokens;
  const std::size_t r = grid.size();
  const std::int64_t d = tokens.dim(1);
  Shape fine = grid;
  for (auto& g : fine) g *= f;
  Index map(static_cast<std::size_t>(shape_numel(fine) * d));
  for_each_coord(fine, [&](const Index& q, std::int64_t i) {
    Index g(r);
    for (std::size_t a = 0; a < r; ++a) g[a] = q[a] / f;
    const std::int64_t src = flat(g, grid) * d;
    for (std::int64_t c = 0; c < d; ++c) map[static_cast<std::size_t>(i * d + c)] = src + c;
  });
  return gather(tokens, {shape_numel(fine), d}, make_map(std::move(map)));
}

Tensor unfold(const Tensor& tokens, const Shape& grid, std::int64_t k) {
  require_tokens(tokens, grid, "unfold");
  if (k <= 0 || k % 2 == 0) throw ShapeError("unfold: kernel must be odd");
  const std::size_t r = grid.size();
  const std::int64_t d = tokens.dim(1), kv = ipow(k, r), half = k / 2;
  const Shape local = uniform_shape(r, k);
  Index map(static_cast<std::size_t>(shape_numel(grid) * kv * d));
  std::size_t o = 0;
  for_each_coord(grid, [&](const Index& q, std::int64_t) {
    for_each_coord(local, [&](const Index& l, std::int64_t) {
      Index s(r);
      bool inside = true;
      for (std::size_t a = 0; a < r; ++a) {
        s[a] = q[a] + l[a] - half;
        inside = inside && s[a] >= 0 && s[a] < grid[a];
      }
      const std::int64_t src = inside ? flat(s, grid) * d : -1;
      for (std::int64_t c = 0; c < d; ++c) map[o++] = inside ? src + c : -1;
    });
  });
  return gather(tokens, {shape_numel(grid), kv * d}, make_map(std::move(map)));
}

}  // namespace mixerbench
