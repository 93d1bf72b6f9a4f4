#include "schn/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "schn/errors.hpp"

namespace schn {

void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  rgb[0] = static_cast<float>(r + m);
  rgb[1] = static_cast<float>(g + m);
  rgb[2] = static_cast<float>(b + m);
}

template <typename T>
ImageBuffer visualize_hallucination_map(const Tensor<T>& offsets, double gain, std::int64_t index) {
  if (offsets.rank() != 4 || offsets.dim(1) != 2 || index < 0 || index >= offsets.dim(0)) {
    throw ConfigError("hallucination map must be [N,2,h,w], got " + to_string(offsets.shape()));
  }
  if (!(gain > 0.0)) throw ConfigError("visualization gain must be positive");
  const int h = static_cast<int>(offsets.dim(2)), w = static_cast<int>(offsets.dim(3));
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const T* dx = offsets.data().data() + static_cast<std::size_t>(index) * 2 * hw;
  const T* dy = dx + hw;
  double max_mag = 0.0;
  for (std::size_t p = 0; p < hw; ++p) {
    if (!std::isfinite(dx[p]) || !std::isfinite(dy[p])) {
      throw NumericalError("non-finite offset in hallucination map");
    }
    max_mag = std::max(max_mag, std::hypot(static_cast<double>(dx[p]), static_cast<double>(dy[p])));
  }
  ImageBuffer out(h, w, 3, 1.0f);
  if (max_mag == 0.0) return out;
  for (std::size_t p = 0; p < hw; ++p) {
    const double ux = gain * dx[p], uy = gain * dy[p];
    const double sat = std::min(1.0, std::hypot(ux, uy) / max_mag);
    const double hue = std::atan2(uy, ux) * 180.0 / std::numbers::pi;
    float rgb[3];
    hsv_to_rgb(hue, sat, 1.0, rgb);
    for (int c = 0; c < 3; ++c) out.values[c * hw + p] = rgb[c];
  }
  return out;
}

template ImageBuffer visualize_hallucination_map<float>(const Tensor<float>&, double, std::int64_t);
template ImageBuffer visualize_hallucination_map<double>(const Tensor<double>&, double, std::int64_t);

}  // namespace schn
