#include "schn/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "schn/errors.hpp"

namespace schn {

BlurKernel make_gaussian_kernel(double sigma_x, double sigma_y, double theta, int size) {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) {
    throw ConfigError("blur kernel widths must be positive");
  }
  if (size < 1 || size % 2 == 0) throw ConfigError("blur kernel size must be odd and positive");
  BlurKernel k;
  k.size = size;
  k.sigma_x = sigma_x;
  k.sigma_y = sigma_y;
  k.theta = theta;
  k.values.resize(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  const double c = std::cos(theta), s = std::sin(theta);
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      // Coordinates in the kernel's principal frame: R^T u.
      const double px = c * dx + s * dy;
      const double py = -s * dx + c * dy;
      const double q = px * px / (sigma_x * sigma_x) + py * py / (sigma_y * sigma_y);
      const double v = std::exp(-0.5 * q);
      k.values[static_cast<std::size_t>(dy + r) * size + (dx + r)] = v;
      total += v;
    }
  }
  for (auto& v : k.values) v /= total;
  return k;
}

namespace {

int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

}  // namespace

ImageBuffer blur(const ImageBuffer& image, const BlurKernel& kernel) {
  const int r = kernel.radius();
  if (image.height <= r || image.width <= r) {
    throw ConfigError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                      " too small for a " + std::to_string(kernel.size) + "-tap blur kernel");
  }
  const int h = image.height, w = image.width;
  const int ph = h + 2 * r, pw = w + 2 * r;
  ImageBuffer out(h, w, image.channels);
  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = reflect(y - r, h);
      for (int x = 0; x < pw; ++x) padded[static_cast<std::size_t>(y) * pw + x] = image.at(c, sy, reflect(x - r, w));
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        // out(y,x) = sum_k k(dy,dx) * in(y-dy, x-dx)
        for (int dy = -r; dy <= r; ++dy) {
          const double* row = padded.data() + static_cast<std::size_t>(y - dy + r) * pw + (x + r);
          const double* krow = kernel.values.data() + static_cast<std::size_t>(dy + r) * kernel.size + r;
          for (int dx = -r; dx <= r; ++dx) acc += krow[dx] * row[-dx];
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

namespace {

double keys_cubic(double x) {
  const double a = std::abs(x);
  const double a2 = a * a, a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a <= 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

struct Contributions {
  int taps = 0;
  std::vector<int> index;      // out_len * taps
  std::vector<double> weight;  // out_len * taps
};

Contributions contributions(int in_len, int out_len, double scale, bool antialias) {
  const bool shrink = scale < 1.0 && antialias;
  const double kernel_width = shrink ? 4.0 / scale : 4.0;
  Contributions c;
  c.taps = static_cast<int>(std::ceil(kernel_width)) + 2;
  c.index.resize(static_cast<std::size_t>(out_len) * c.taps);
  c.weight.resize(c.index.size());
  for (int i = 0; i < out_len; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - kernel_width / 2.0));
    double total = 0.0;
    for (int k = 0; k < c.taps; ++k) {
      const int j = left + k;
      const double d = u - j;
      const double wgt = shrink ? scale * keys_cubic(scale * d) : keys_cubic(d);
      c.index[static_cast<std::size_t>(i) * c.taps + k] = std::clamp(j, 0, in_len - 1);
      c.weight[static_cast<std::size_t>(i) * c.taps + k] = wgt;
      total += wgt;
    }
    for (int k = 0; k < c.taps; ++k) c.weight[static_cast<std::size_t>(i) * c.taps + k] /= total;
  }
  return c;
}

}  // namespace

ImageBuffer bicubic_resize_to(const ImageBuffer& image, int out_height, int out_width,
                              bool antialias) {
  if (out_height < 1 || out_width < 1) throw ConfigError("bicubic_resize: output dimension < 1");
  if (image.empty()) throw ConfigError("bicubic_resize: empty image");
  const double sy = static_cast<double>(out_height) / image.height;
  const double sx = static_cast<double>(out_width) / image.width;
  if ((sy < 1.0 || sx < 1.0) && !antialias) {
    throw ConfigError("bicubic_resize: downsampling requires antialiasing");
  }
  const auto rows = contributions(image.height, out_height, sy, antialias);
  const auto cols = contributions(image.width, out_width, sx, antialias);

  ImageBuffer out(out_height, out_width, image.channels);
  std::vector<double> tmp(static_cast<std::size_t>(out_height) * image.width);
  for (int c = 0; c < image.channels; ++c) {
    // Vertical pass first, then horizontal.
    for (int y = 0; y < out_height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < rows.taps; ++k) {
          const auto idx = static_cast<std::size_t>(y) * rows.taps + k;
          acc += rows.weight[idx] * image.at(c, rows.index[idx], x);
        }
        tmp[static_cast<std::size_t>(y) * image.width + x] = acc;
      }
    }
    for (int y = 0; y < out_height; ++y) {
      const double* src = tmp.data() + static_cast<std::size_t>(y) * image.width;
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < cols.taps; ++k) {
          const auto idx = static_cast<std::size_t>(x) * cols.taps + k;
          acc += cols.weight[idx] * src[cols.index[idx]];
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageBuffer bicubic_resize(const ImageBuffer& image, ScaleRatio scale, bool antialias) {
  if (scale.num <= 0 || scale.den <= 0) throw ConfigError("bicubic_resize: scale must be positive");
  if (scale.num == scale.den) return image;
  auto out_len = [&](int n) {
    const std::int64_t num = static_cast<std::int64_t>(n) * scale.num;
    return static_cast<int>((num + scale.den - 1) / scale.den);
  };
  return bicubic_resize_to(image, out_len(image.height), out_len(image.width), antialias);
}

ImageBuffer add_gaussian_noise(const ImageBuffer& image, double noise_level, Rng& rng) {
  if (noise_level < 0.0) throw ConfigError("noise level must be non-negative");
  ImageBuffer out = image;
  if (noise_level == 0.0) return out;
  std::normal_distribution<double> normal(0.0, noise_level / 255.0);
  for (auto& v : out.values) v = static_cast<float>(v + normal(rng));
  return out;
}

DegradationSpec DegradationSpec::for_scale(int scale_factor) {
  DegradationSpec spec;
  spec.scale_factor = scale_factor;
  spec.sigma_range = {0.2, scale_factor == 2 ? 3.0 : 4.0};
  return spec;
}

void DegradationSpec::validate() const {
  if (scale_factor != 2 && scale_factor != 4) {
    throw ConfigError("scale_factor must be 2 or 4, got " + std::to_string(scale_factor));
  }
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
  };
  prob(blur_probability, "blur_probability");
  prob(noise_probability, "noise_probability");
  const double sigma_max = scale_factor == 2 ? 3.0 : 4.0;
  if (!(sigma_range.lo > 0.0) || sigma_range.hi < sigma_range.lo || sigma_range.hi > sigma_max) {
    throw ConfigError("sigma_range must satisfy 0 < lo <= hi <= " + std::to_string(sigma_max) +
                      " for scale " + std::to_string(scale_factor));
  }
  if (noise_level_range.lo < 0.0 || !(noise_level_range.hi > noise_level_range.lo) ||
      noise_level_range.hi > 50.0) {
    throw ConfigError("noise_level_range must satisfy 0 <= lo < hi <= 50");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
}

void to_json(nlohmann::json& j, const DegradationSpec& s) {
  j = nlohmann::json{{"scale_factor", s.scale_factor},
                     {"blur_probability", s.blur_probability},
                     {"sigma_range", {s.sigma_range.lo, s.sigma_range.hi}},
                     {"noise_probability", s.noise_probability},
                     {"noise_level_range", {s.noise_level_range.lo, s.noise_level_range.hi}},
                     {"seed", s.seed},
                     {"kernel_size", s.kernel_size},
                     {"random_rotation", s.random_rotation}};
}

void from_json(const nlohmann::json& j, DegradationSpec& s) {
  try {
    const int scale = j.value("scale_factor", 4);
    s = DegradationSpec::for_scale(scale);
    s.blur_probability = j.value("blur_probability", s.blur_probability);
    s.noise_probability = j.value("noise_probability", s.noise_probability);
    if (j.contains("sigma_range")) {
      const auto& r = j.at("sigma_range");
      s.sigma_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    if (j.contains("noise_level_range")) {
      const auto& r = j.at("noise_level_range");
      s.noise_level_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.kernel_size = j.value("kernel_size", 15);
    s.random_rotation = j.value("random_rotation", true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid degradation spec: ") + e.what());
  }
  s.validate();
}

nlohmann::json to_json(const Provenance& p) {
  nlohmann::json j;
  if (p.blur) {
    j["blur"] = {{"sigma_x", p.blur->sigma_x}, {"sigma_y", p.blur->sigma_y}, {"theta", p.blur->theta}};
  } else {
    j["blur"] = "skipped";
  }
  if (p.noise_level) {
    j["noise"] = {{"level", *p.noise_level}, {"seed", p.noise_seed}};
  } else {
    j["noise"] = "skipped";
  }
  return j;
}

Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  try {
    const auto& b = j.at("blur");
    if (b.is_object()) {
      p.blur = BlurDraw{b.at("sigma_x").get<double>(), b.at("sigma_y").get<double>(),
                        b.at("theta").get<double>()};
    }
    const auto& n = j.at("noise");
    if (n.is_object()) {
      p.noise_level = n.at("level").get<double>();
      p.noise_seed = n.at("seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid provenance record: ") + e.what());
  }
  return p;
}

namespace {

void check_divisible(const ImageBuffer& hr, int scale) {
  if (hr.height % scale != 0 || hr.width % scale != 0) {
    throw ConfigError("HR size " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
                      " not divisible by scale " + std::to_string(scale));
  }
}

}  // namespace

Degraded degrade_replay(const ImageBuffer& hr, int scale_factor, const Provenance& provenance,
                        int kernel_size) {
  check_divisible(hr, scale_factor);
  Degraded out;
  out.provenance = provenance;
  const ImageBuffer* source = &hr;
  ImageBuffer blurred;
  if (provenance.blur) {
    const auto& b = *provenance.blur;
    blurred = blur(hr, make_gaussian_kernel(b.sigma_x, b.sigma_y, b.theta, kernel_size));
    source = &blurred;
  }
  out.y = bicubic_resize(*source, {1, scale_factor}, true);
  if (provenance.noise_level) {
    Rng noise_rng(provenance.noise_seed);
    out.x = add_gaussian_noise(out.y, *provenance.noise_level, noise_rng);
  } else {
    out.x = out.y;
  }
  return out;
}

Degraded degrade(const ImageBuffer& hr, const DegradationSpec& spec, Rng& rng) {
  check_divisible(hr, spec.scale_factor);
  Provenance p;
  if (uniform01(rng) < spec.blur_probability) {
    const auto& r = spec.sigma_range;
    BlurDraw b;
    b.sigma_x = r.lo + (r.hi - r.lo) * uniform01(rng);
    b.sigma_y = r.lo + (r.hi - r.lo) * uniform01(rng);
    b.theta = spec.random_rotation ? std::numbers::pi * uniform01(rng) : 0.0;
    p.blur = b;
  }
  if (uniform01(rng) < spec.noise_probability) {
    const auto& r = spec.noise_level_range;
    // (lo, hi]
    p.noise_level = r.hi - (r.hi - r.lo) * uniform01(rng);
    p.noise_seed = rng();
  }
  return degrade_replay(hr, spec.scale_factor, p, spec.kernel_size);
}

std::vector<int> window_offsets(int length, int patch, int stride) {
  if (patch < 1 || stride < 1) throw ConfigError("patch and stride must be positive");
  std::vector<int> out;
  if (length < patch) return out;
  int pos = 0;
  for (; pos + patch <= length; pos += stride) out.push_back(pos);
  if (out.back() + patch < length) out.push_back(length - patch);
  return out;
}

PatchPlan plan_patches(const std::vector<ImageBuffer>& images, int patch, int stride) {
  PatchPlan plan;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.height < patch || img.width < patch) {
      ++plan.skipped;
      continue;
    }
    for (int top : window_offsets(img.height, patch, stride)) {
      for (int left : window_offsets(img.width, patch, stride)) {
        plan.patches.push_back({i, top, left, patch});
      }
    }
  }
  return plan;
}

std::vector<ImageBuffer> sample_patches(const std::vector<ImageBuffer>& images, int patch,
                                        int stride, std::size_t* skipped) {
  const auto plan = plan_patches(images, patch, stride);
  if (skipped) *skipped = plan.skipped;
  std::vector<ImageBuffer> out;
  out.reserve(plan.patches.size());
  for (const auto& p : plan.patches) out.push_back(crop(images[p.image], p.top, p.left, p.size, p.size));
  return out;
}

namespace {

ImageBuffer rotate_ccw(const ImageBuffer& in) {
  const int n = in.height;
  ImageBuffer out(n, n, in.channels);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) out.at(c, y, x) = in.at(c, x, n - 1 - y);
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer& in) {
  ImageBuffer out(in.height, in.width, in.channels);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) out.at(c, y, x) = in.at(c, y, in.width - 1 - x);
  return out;
}

void check_dihedral(const ImageBuffer& image, int id) {
  if (id < 0 || id >= 8) throw ConfigError("dihedral transform id must lie in [0,8)");
  if (image.height != image.width) throw ConfigError("dihedral transforms require a square patch");
}

}  // namespace

ImageBuffer apply_dihedral(const ImageBuffer& image, int id) {
  check_dihedral(image, id);
  ImageBuffer out = image;
  for (int k = 0; k < id % 4; ++k) out = rotate_ccw(out);
  if (id >= 4) out = flip_horizontal(out);
  return out;
}

ImageBuffer invert_dihedral(const ImageBuffer& image, int id) {
  check_dihedral(image, id);
  ImageBuffer out = id >= 4 ? flip_horizontal(image) : image;
  for (int k = 0; k < (4 - id % 4) % 4; ++k) out = rotate_ccw(out);
  return out;
}

Augmented augment(const ImageBuffer& patch, Rng& rng) {
  if (patch.height != patch.width) throw ConfigError("augment requires a square patch");
  const int id = std::uniform_int_distribution<int>(0, 7)(rng);
  return {apply_dihedral(patch, id), id};
}

}  // namespace schn
