#pragma once

#include <span>
#include <vector>

#include "schn/tensor.hpp"

namespace schn {

// Stride-1 cross-correlation (no kernel flip) with zero padding.
// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] (may be undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int padding = 1);

// max(x, slope*x). The derivative at exactly 0 takes the positive branch.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

// Depth-to-space: [N, C*r*r, H, W] -> [N, C, r*H, r*W],
// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r);

// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r);

// Bilinear warp of feat [N,C,H,W] by per-pixel offsets [N,2,H,W] (channel 0
// is the x offset, channel 1 the y offset, in pixels). Pixel (x1, y1) reads
// feat at (x1 + dx, y1 + dy); neighbours outside the image contribute 0.
// Differentiable w.r.t. both feat and offsets.
template <typename T>
Tensor<T> grid_sample_offsets(const Tensor<T>& feat, const Tensor<T>& offsets);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  return concat_channels(std::span<const Tensor<T>>(xs));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Mean absolute error over every element. sign(0) is taken as 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& x) {
  return Tensor<T>::zeros(x.shape());
}

}  // namespace schn
