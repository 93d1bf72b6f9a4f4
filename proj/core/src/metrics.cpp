#include "schn/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "schn/errors.hpp"

namespace schn {
namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw ConfigError(std::string(op) + ": image shapes differ");
  }
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable valid-mode filtering of a single plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::array<double, kWindow>& win) {
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(oh) * w, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += win[k] * plane[static_cast<std::size_t>(y + k) * w + x];
      rows[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += win[k] * rows[static_cast<std::size_t>(y) * w + x + k];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr_rgb(const ImageBuffer& pred, const ImageBuffer& ref) {
  require_same_shape(pred, ref, "psnr_rgb");
  if (pred.empty()) throw ConfigError("psnr_rgb: empty image");
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.values[i]) - ref.values[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(pred.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_rgb(const ImageBuffer& pred, const ImageBuffer& ref) {
  require_same_shape(pred, ref, "ssim_rgb");
  if (pred.height < kWindow || pred.width < kWindow) {
    throw ConfigError("ssim_rgb: image must be at least 11x11");
  }
  const auto win = gaussian_window();
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const int h = pred.height;
  const int w = pred.width;
  double total = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    const auto pa = pred.plane(c);
    const auto pb = ref.plane(c);
    std::vector<double> a(pa.begin(), pa.end()), b(pb.begin(), pb.end());
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, win);
    const auto mu_b = filter_valid(b, h, w, win);
    const auto e_aa = filter_valid(aa, h, w, win);
    const auto e_bb = filter_valid(bb, h, w, win);
    const auto e_ab = filter_valid(ab, h, w, win);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / pred.channels;
}

}  // namespace schn
