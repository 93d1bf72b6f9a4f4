#pragma once

#include <cstdint>

#include "schn/image.hpp"
#include "schn/tensor.hpp"

namespace schn {

// Flow-style colour coding of an offset field [N,2,h,w] (batch item `index`).
// Hue is the direction atan2(dy, dx) (0 deg = +x = red); saturation is
// min(1, gain * |offset| / max |offset|) with value fixed at 1, so zero
// motion is white. An all-zero map renders uniformly white.
template <typename T>
ImageBuffer visualize_hallucination_map(const Tensor<T>& offsets, double gain = 4.0,
                                        std::int64_t index = 0);

// HSV (h in degrees) to RGB in [0,1].
void hsv_to_rgb(double h, double s, double v, float rgb[3]);

}  // namespace schn
