#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "schn/ops.hpp"
#include "schn/rng.hpp"

namespace schn::testing {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi,
                             bool requires_grad) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>::from_vector(shape, std::move(v), requires_grad);
}

Tensor<float> random_tensor_f(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  return cast<float>(random_tensor(shape, seed, lo, hi));
}

ImageBuffer random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(h, w, 3);
  for (auto& v : img.values) v = static_cast<float>(uniform01(rng));
  return img;
}

ImageBuffer smooth_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(h, w, 3);
  double f[3][4];
  for (auto& row : f) {
    for (auto& v : row) v = uniform01(rng);
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = 0.5 + 0.2 * std::sin(0.05 * x * (1 + f[c][0]) + 6 * f[c][1]) +
                         0.15 * std::cos(0.11 * y * (1 + f[c][2]) + 0.07 * x) +
                         0.1 * std::sin(0.6 * (x + y) * (0.5 + f[c][3]));
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

Tensor<double> weighted_sum(const Tensor<double>& x, std::uint64_t seed) {
  auto w = random_tensor(x.shape(), seed, 0.5, 1.5);
  const auto sign = random_tensor(x.shape(), seed ^ 0x5167, 0.0, 1.0);
  auto d = w.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (sign.data()[i] < 0.5) d[i] = -d[i];
  }
  return sum(mul(x, w));
}

GradCheckResult grad_check(const std::function<Tensor<double>()>& objective,
                           const std::vector<Tensor<double>>& inputs, double step, double floor,
                           std::optional<std::size_t> max_entries, std::uint64_t sample_seed) {
  auto leaves = inputs;
  for (auto& t : leaves) t.zero_grad();
  objective().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : leaves) {
    const auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
  }

  GradCheckResult result;
  NoGradGuard guard;
  Rng rng(sample_seed);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    std::vector<std::size_t> idx(leaves[k].numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (max_entries && idx.size() > *max_entries) {
      for (std::size_t i = 0; i < *max_entries; ++i) {
        std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
      }
      idx.resize(*max_entries);
    }
    auto data = leaves[k].mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double orig = data[i];
      data[i] = orig + step;
      const double fp = objective().item();
      data[i] = orig - step;
      const double fm = objective().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "input %zu[%zu]: analytic %.10g vs numeric %.10g", k, i, a, numeric);
        result.worst = buf;
      }
    }
    const double tensor_rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (tensor_rel > result.max_tensor_rel_error) {
      result.max_tensor_rel_error = tensor_rel;
      result.worst_tensor = k;
    }
  }
  return result;
}

std::vector<double> warp_reference(const Tensor<double>& feat, const Tensor<double>& offsets) {
  const auto n = feat.dim(0), c = feat.dim(1), h = feat.dim(2), w = feat.dim(3);
  std::vector<double> out(feat.numel(), 0.0);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t y1 = 0; y1 < h; ++y1) {
      for (std::int64_t x1 = 0; x1 < w; ++x1) {
        const double x = x1 + offsets.at(b, 0, y1, x1);
        const double y = y1 + offsets.at(b, 1, y1, x1);
        const double xf = std::floor(x), yf = std::floor(y);
        for (int dy = 0; dy <= 1; ++dy) {
          for (int dx = 0; dx <= 1; ++dx) {
            const double xi = xf + dx, yi = yf + dy;
            const double wgt = (1.0 - std::abs(x - xi)) * (1.0 - std::abs(y - yi));
            if (xi < 0 || yi < 0 || xi >= w || yi >= h) continue;
            for (std::int64_t ch = 0; ch < c; ++ch) {
              out[((b * c + ch) * h + y1) * w + x1] +=
                  wgt * feat.at(b, ch, static_cast<std::int64_t>(yi), static_cast<std::int64_t>(xi));
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace schn::testing
