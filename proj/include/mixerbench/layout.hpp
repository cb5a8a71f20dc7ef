#pragma once

#include <cstdint>

#include "mixerbench/tensor.hpp"

// Layout transforms between images and token grids. Images are
// [C, spatial...] with the depth axis last in 3D; token tensors are [n, d]
// with n in raster (row-major) order over the grid. Everything here is a
// gather, so all of it is differentiable.
namespace mixerbench {

Shape spatial_extents(const Tensor& image);  // image shape without the channel axis
// extents / patch per axis; ShapeError when not divisible
Shape patch_grid(const Shape& extents, std::int64_t patch);

// [C, spatial...] -> [n, C * patch^rank]; feature index = c * patch^rank + (raster offset in patch)
Tensor patchify(const Tensor& image, std::int64_t patch);
Tensor unpatchify(const Tensor& tokens, const Shape& grid, std::int64_t channels, std::int64_t patch);

// [C, spatial...] <-> [n, C]
Tensor image_to_tokens(const Tensor& image);
Tensor tokens_to_image(const Tensor& tokens, const Shape& grid);

// [n, d] -> [windows, window^rank, d]; windows raster over grid / window
Tensor window_partition(const Tensor& tokens, const Shape& grid, std::int64_t window);
Tensor window_reverse(const Tensor& windows, const Shape& grid, std::int64_t window);

// out[i] = x[(i + shift) mod g] on every axis; inverse_cyclic_shift undoes it.
Tensor cyclic_shift(const Tensor& tokens, const Shape& grid, std::int64_t shift);
Tensor inverse_cyclic_shift(const Tensor& tokens, const Shape& grid, std::int64_t shift);

// zero-extends the grid at the high end of each axis / crops it back
Tensor pad_grid(const Tensor& tokens, const Shape& grid, const Shape& padded);
Tensor crop_grid(const Tensor& tokens, const Shape& padded, const Shape& grid);

// [n, d] -> [n / 2^rank, 2^rank * d]: the 2x..x2 neighbours of each coarse
// cell, concatenated in raster order. Grid extents must be even.
Tensor merge_neighbors(const Tensor& tokens, const Shape& grid);

// nearest-neighbour upsampling of the grid by an integer factor
Tensor upsample_nearest(const Tensor& tokens, const Shape& grid, std::int64_t factor);

// [n, C * f^rank] -> [n * f^rank, C] on the grid scaled by f (the token
// layout of unpatchify)
Tensor pixel_shuffle(const Tensor& tokens, const Shape& grid, std::int64_t factor);

// [n, C] -> [n, k^rank * C]: zero-padded k-wide neighbourhoods (k odd), the
// im2col of a "same" convolution
Tensor unfold(const Tensor& tokens, const Shape& grid, std::int64_t k = 3);

}  // namespace mixerbench
