#pragma once

#include <cstdint>
#include <vector>

#include "schn/image.hpp"

namespace schn {

// Procedural RGB test image in [0,1]: smooth colour gradients, filled shapes
// with hard edges and an oriented sinusoidal texture. Deterministic in seed.
ImageBuffer make_synthetic_image(int height, int width, std::uint64_t seed);

std::vector<ImageBuffer> make_synthetic_set(std::size_t count, int height, int width,
                                            std::uint64_t seed);

}  // namespace schn
