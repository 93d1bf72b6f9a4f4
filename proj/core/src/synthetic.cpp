#include "schn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "schn/rng.hpp"

namespace schn {

ImageBuffer make_synthetic_image(int height, int width, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x5157u}));
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  ImageBuffer img(height, width, 3);

  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = u(0.2, 0.8);
    gx[c] = u(-0.3, 0.3);
    gy[c] = u(-0.3, 0.3);
  }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        img.at(c, y, x) = static_cast<float>(base[c] + gx[c] * x / width + gy[c] * y / height);

  // Oriented texture over the whole frame.
  const double freq = u(0.15, 0.6);
  const double angle = u(0.0, std::numbers::pi);
  const double amp = u(0.03, 0.1);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t = amp * std::sin(freq * (ca * x + sa * y));
      for (int c = 0; c < 3; ++c) img.at(c, y, x) += static_cast<float>(t);
    }

  const int shapes = 3 + static_cast<int>(uniform01(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    const double cx = u(0, width), cy = u(0, height);
    const double rx = u(0.08, 0.3) * width, ry = u(0.08, 0.3) * height;
    double colour[3];
    for (auto& v : colour) v = u(0.0, 1.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(colour[c]);
      }
  }
  for (auto& v : img.values) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

std::vector<ImageBuffer> make_synthetic_set(std::size_t count, int height, int width,
                                            std::uint64_t seed) {
  std::vector<ImageBuffer> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(make_synthetic_image(height, width, derive_seed(seed, {i})));
  }
  return out;
}

}  // namespace schn
