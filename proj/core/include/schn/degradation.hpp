#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/image.hpp"
#include "schn/rng.hpp"

namespace schn {

// Normalized anisotropic Gaussian on a size x size grid. Row index is the
// vertical offset (dy), column index the horizontal offset (dx).
struct BlurKernel {
  int size = 15;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double theta = 0.0;
  std::vector<double> values;

  int radius() const { return size / 2; }
  double at(int dy, int dx) const {
    return values[static_cast<std::size_t>(dy + radius()) * size + (dx + radius())];
  }
};

// exp(-1/2 u^T Sigma^-1 u), Sigma = R(theta) diag(sx^2, sy^2) R(theta)^T,
// evaluated at integer offsets u = (dx, dy) and normalized to sum 1.
BlurKernel make_gaussian_kernel(double sigma_x, double sigma_y, double theta, int size = 15);

// Per-channel true convolution (kernel flipped) with symmetric border padding.
ImageBuffer blur(const ImageBuffer& image, const BlurKernel& kernel);

struct ScaleRatio {
  int num = 1;
  int den = 1;
  double value() const { return static_cast<double>(num) / den; }
};

// Separable Keys-cubic (a = -0.5) resampling with pixel-centre alignment.
// Downscaling widens the kernel by 1/scale (antialias, required); borders
// replicate edge pixels. Output size is ceil(in * scale).
ImageBuffer bicubic_resize(const ImageBuffer& image, ScaleRatio scale, bool antialias = true);
ImageBuffer bicubic_resize_to(const ImageBuffer& image, int out_height, int out_width,
                              bool antialias = true);

// Adds i.i.d. N(0, (level/255)^2) to every value; no clamping.
ImageBuffer add_gaussian_noise(const ImageBuffer& image, double noise_level, Rng& rng);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct DegradationSpec {
  int scale_factor = 4;
  double blur_probability = 0.9;
  Interval sigma_range{0.2, 4.0};
  double noise_probability = 0.5;
  Interval noise_level_range{0.0, 50.0};  // sampled from (lo, hi]
  std::uint64_t seed = 0;
  int kernel_size = 15;
  // theta ~ U[0, pi) when true, 0 otherwise.
  bool random_rotation = true;

  static DegradationSpec for_scale(int scale_factor);
  void validate() const;
  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

void to_json(nlohmann::json& j, const DegradationSpec& spec);
void from_json(const nlohmann::json& j, DegradationSpec& spec);

struct BlurDraw {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double theta = 0.0;
  friend bool operator==(const BlurDraw&, const BlurDraw&) = default;
};

// Every random draw made by degrade(); sufficient to replay it exactly.
struct Provenance {
  std::optional<BlurDraw> blur;
  std::optional<double> noise_level;
  std::uint64_t noise_seed = 0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

nlohmann::json to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

struct Degraded {
  ImageBuffer y;  // noise-free LR
  ImageBuffer x;  // LR after the noise branch (== y when skipped)
  Provenance provenance;
};

Degraded degrade(const ImageBuffer& hr, const DegradationSpec& spec, Rng& rng);
// Deterministic re-application of recorded draws.
Degraded degrade_replay(const ImageBuffer& hr, int scale_factor, const Provenance& provenance,
                        int kernel_size = 15);

struct PatchRef {
  std::size_t image = 0;
  int top = 0;
  int left = 0;
  int size = 0;
};

struct PatchPlan {
  std::vector<PatchRef> patches;
  std::size_t skipped = 0;  // images smaller than the patch
};

// Window start positions along one axis: multiples of stride, plus one window
// anchored to the far edge when the last regular window stops short of it.
std::vector<int> window_offsets(int length, int patch, int stride);

PatchPlan plan_patches(const std::vector<ImageBuffer>& images, int patch = 256, int stride = 240);
// Raster order: image, then row, then column.
std::vector<ImageBuffer> sample_patches(const std::vector<ImageBuffer>& images, int patch = 256,
                                        int stride = 240, std::size_t* skipped = nullptr);

// Dihedral group element id in [0,8): rotate counter-clockwise by 90*(id%4)
// degrees, then flip horizontally when id >= 4.
ImageBuffer apply_dihedral(const ImageBuffer& image, int id);
ImageBuffer invert_dihedral(const ImageBuffer& image, int id);

struct Augmented {
  ImageBuffer image;
  int transform_id = 0;
};
Augmented augment(const ImageBuffer& patch, Rng& rng);

}  // namespace schn
