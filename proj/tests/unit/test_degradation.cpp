#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "schn/degradation.hpp"
#include "schn/errors.hpp"

using namespace schn;
using schn::testing::random_image;
using schn::testing::smooth_image;

namespace {

double total_variation(const ImageBuffer& im) {
  double tv = 0.0;
  for (int c = 0; c < im.channels; ++c) {
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        if (x + 1 < im.width) tv += std::abs(im.at(c, y, x + 1) - im.at(c, y, x));
        if (y + 1 < im.height) tv += std::abs(im.at(c, y + 1, x) - im.at(c, y, x));
      }
    }
  }
  return tv;
}

double keys(double x) {
  x = std::abs(x);
  if (x <= 1) return (1.5 * x - 2.5) * x * x + 1;
  if (x <= 2) return ((-0.5 * x + 2.5) * x - 4) * x + 2;
  return 0;
}

// One output sample of the resampler along one axis, evaluated directly:
// source coordinate u = (i + 0.5) / s - 0.5, kernel stretched by 1/s when
// shrinking, out-of-range taps read the nearest edge sample.
double resample_1d(const std::vector<double>& in, int i, double s) {
  const double u = (i + 0.5) / s - 0.5;
  const double stretch = s < 1 ? s : 1.0;
  double acc = 0, norm = 0;
  for (int j = static_cast<int>(std::floor(u)) - 40; j <= static_cast<int>(std::floor(u)) + 40; ++j) {
    const double w = keys((u - j) * stretch);
    const int jj = std::clamp(j, 0, static_cast<int>(in.size()) - 1);
    acc += w * in[jj];
    norm += w;
  }
  return acc / norm;
}

}  // namespace

TEST(GaussianKernel, NormalizedAndNonNegative) {
  for (auto [sx, sy, th] : {std::tuple{0.2, 0.2, 0.0}, {1.3, 3.7, 0.4}, {4.0, 0.5, 2.9}}) {
    const auto k = make_gaussian_kernel(sx, sy, th);
    double total = 0.0;
    for (double v : k.values) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(GaussianKernel, IsotropicKernelHasDihedralSymmetry) {
  const auto k = make_gaussian_kernel(1.7, 1.7, 0.0);
  for (int dy = -7; dy <= 7; ++dy) {
    for (int dx = -7; dx <= 7; ++dx) {
      EXPECT_NEAR(k.at(dy, dx), k.at(-dy, dx), 1e-9);
      EXPECT_NEAR(k.at(dy, dx), k.at(dy, -dx), 1e-9);
      EXPECT_NEAR(k.at(dy, dx), k.at(dx, dy), 1e-9);
    }
  }
}

TEST(GaussianKernel, MatchesClosedFormDensity) {
  const double sx = 1.1, sy = 2.6, th = 0.7;
  const auto k = make_gaussian_kernel(sx, sy, th);
  // Sigma^-1 = R diag(1/sx^2, 1/sy^2) R^T
  const double c = std::cos(th), s = std::sin(th);
  const double a = c * c / (sx * sx) + s * s / (sy * sy);
  const double b = c * s / (sx * sx) - c * s / (sy * sy);
  const double d = s * s / (sx * sx) + c * c / (sy * sy);
  double z = 0.0;
  for (int dy = -7; dy <= 7; ++dy) {
    for (int dx = -7; dx <= 7; ++dx) z += std::exp(-0.5 * (a * dx * dx + 2 * b * dx * dy + d * dy * dy));
  }
  for (int dy = -7; dy <= 7; ++dy) {
    for (int dx = -7; dx <= 7; ++dx) {
      const double want = std::exp(-0.5 * (a * dx * dx + 2 * b * dx * dy + d * dy * dy)) / z;
      EXPECT_NEAR(k.at(dy, dx), want, 1e-12);
    }
  }
}

TEST(GaussianKernel, NarrowKernelIsNearDelta) {
  EXPECT_GT(make_gaussian_kernel(0.2, 0.2, 0.0).at(0, 0), 0.999);
}

TEST(GaussianKernel, AnisotropyFollowsTheLongAxis) {
  const auto k = make_gaussian_kernel(0.5, 3.0, 0.0);
  EXPECT_GT(k.at(3, 0), k.at(0, 3));
  EXPECT_GT(k.at(3, 0), 1e3 * k.at(0, 3));
}

TEST(GaussianKernel, RejectsBadArguments) {
  EXPECT_THROW(make_gaussian_kernel(0.0, 1.0, 0.0), ConfigError);
  EXPECT_THROW(make_gaussian_kernel(1.0, 1.0, 0.0, 14), ConfigError);
}

TEST(Blur, NearDeltaKernelIsNearIdentity) {
  const auto img = random_image(24, 20, 1);
  const auto out = blur(img, make_gaussian_kernel(0.2, 0.2, 0.0));
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(out.values[i], img.values[i], 1e-3);
}

TEST(Blur, ConstantImageIsPreserved) {
  ImageBuffer img(20, 20, 3, 0.37f);
  const auto out = blur(img, make_gaussian_kernel(2.0, 3.0, 1.0));
  for (float v : out.values) ASSERT_NEAR(v, 0.37f, 1e-6);
}

TEST(Blur, ReducesTotalVariation) {
  for (std::uint64_t seed : {2u, 3u}) {
    const auto img = smooth_image(40, 36, seed);
    const auto out = blur(img, make_gaussian_kernel(1.5, 0.8, 0.3));
    EXPECT_LE(total_variation(out), total_variation(img));
  }
}

TEST(Blur, IsTrueConvolution) {
  // A single bright pixel spreads into the kernel itself (flipped twice).
  ImageBuffer img(31, 31, 3, 0.0f);
  for (int c = 0; c < 3; ++c) img.at(c, 15, 15) = 1.0f;
  const auto k = make_gaussian_kernel(1.0, 2.5, 0.6);
  const auto out = blur(img, k);
  for (int dy = -7; dy <= 7; ++dy) {
    for (int dx = -7; dx <= 7; ++dx) EXPECT_NEAR(out.at(0, 15 + dy, 15 + dx), k.at(dy, dx), 1e-7);
  }
}

TEST(Bicubic, UnitScaleIsIdentity) {
  const auto img = random_image(13, 17, 4);
  EXPECT_EQ(bicubic_resize(img, {1, 1}), img);
}

TEST(Bicubic, ConstantSurvivesDownAndUp) {
  ImageBuffer img(32, 24, 3, 0.6f);
  const auto down = bicubic_resize(img, {1, 2});
  EXPECT_EQ(down.height, 16);
  EXPECT_EQ(down.width, 12);
  const auto up = bicubic_resize(down, {2, 1});
  for (float v : up.values) ASSERT_NEAR(v, 0.6f, 1e-6);
}

TEST(Bicubic, MatchesDirectSeparableEvaluation) {
  const auto img = smooth_image(20, 16, 5);
  for (auto ratio : {ScaleRatio{1, 4}, ScaleRatio{1, 2}, ScaleRatio{2, 1}, ScaleRatio{4, 1}}) {
    const auto out = bicubic_resize(img, ratio);
    const double s = ratio.value();
    ASSERT_EQ(out.height, static_cast<int>(std::ceil(20 * s)));
    for (int c = 0; c < 3; ++c) {
      // vertical pass first, then horizontal
      std::vector<std::vector<double>> cols(img.width, std::vector<double>(out.height));
      for (int x = 0; x < img.width; ++x) {
        std::vector<double> col(img.height);
        for (int y = 0; y < img.height; ++y) col[y] = img.at(c, y, x);
        for (int i = 0; i < out.height; ++i) cols[x][i] = resample_1d(col, i, s);
      }
      for (int i = 0; i < out.height; ++i) {
        std::vector<double> row(img.width);
        for (int x = 0; x < img.width; ++x) row[x] = cols[x][i];
        for (int j = 0; j < out.width; ++j) ASSERT_NEAR(out.at(c, i, j), resample_1d(row, j, s), 1e-5);
      }
    }
  }
}

TEST(Bicubic, DownscaleWithoutAntialiasIsRejected) {
  EXPECT_THROW(bicubic_resize_to(random_image(8, 8, 6), 4, 4, false), ConfigError);
}

TEST(Noise, ZeroLevelIsIdentity) {
  const auto img = random_image(8, 8, 7);
  Rng rng(1);
  EXPECT_EQ(add_gaussian_noise(img, 0.0, rng), img);
}

TEST(Noise, StandardDeviationMatchesLevel) {
  ImageBuffer img(200, 200, 3, 0.5f);
  Rng rng(2);
  const auto out = add_gaussian_noise(img, 15.0, rng);
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = out.values[i] - img.values[i];
    s1 += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(img.size());
  const double sd = std::sqrt(s2 / n - (s1 / n) * (s1 / n));
  EXPECT_NEAR(sd, 15.0 / 255.0, 0.05 * 15.0 / 255.0);
}

TEST(Noise, SameSeedSameField) {
  const auto img = random_image(16, 16, 8);
  Rng a(3), b(3);
  EXPECT_EQ(add_gaussian_noise(img, 30.0, a), add_gaussian_noise(img, 30.0, b));
}

TEST(DegradationSpec, DefaultsFollowTheScale) {
  EXPECT_EQ(DegradationSpec::for_scale(2).sigma_range, (Interval{0.2, 3.0}));
  EXPECT_EQ(DegradationSpec::for_scale(4).sigma_range, (Interval{0.2, 4.0}));
  const auto s = DegradationSpec::for_scale(4);
  EXPECT_EQ(s.blur_probability, 0.9);
  EXPECT_EQ(s.noise_probability, 0.5);
  EXPECT_EQ(s.kernel_size, 15);
}

TEST(DegradationSpec, ValidationAndJsonRoundTrip) {
  auto s = DegradationSpec::for_scale(2);
  s.seed = 99;
  const nlohmann::json j = s;
  EXPECT_EQ(j.get<DegradationSpec>(), s);
  auto bad = s;
  bad.blur_probability = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.sigma_range = {3.0, 1.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Degrade, BothBranchesSkippedGivesPlainDownscale) {
  auto spec = DegradationSpec::for_scale(4);
  spec.blur_probability = 0.0;
  spec.noise_probability = 0.0;
  const auto hr = smooth_image(32, 32, 9);
  Rng rng(4);
  const auto d = degrade(hr, spec, rng);
  EXPECT_EQ(d.y, bicubic_resize(hr, {1, 4}));
  EXPECT_EQ(d.x, d.y);
  EXPECT_FALSE(d.provenance.blur);
  EXPECT_FALSE(d.provenance.noise_level);
}

TEST(Degrade, AlwaysBlurNoNoiseGivesCleanInput) {
  auto spec = DegradationSpec::for_scale(2);
  spec.blur_probability = 1.0;
  spec.noise_probability = 0.0;
  const auto hr = smooth_image(32, 32, 10);
  Rng rng(5);
  const auto d = degrade(hr, spec, rng);
  ASSERT_TRUE(d.provenance.blur);
  EXPECT_EQ(d.x, d.y);
  const auto& b = *d.provenance.blur;
  EXPECT_GE(b.sigma_x, 0.2);
  EXPECT_LE(b.sigma_x, 3.0);
  EXPECT_GE(b.theta, 0.0);
  EXPECT_LT(b.theta, std::numbers::pi);
}

TEST(Degrade, DeterministicAndReplayable) {
  auto spec = DegradationSpec::for_scale(4);
  spec.blur_probability = 1.0;
  spec.noise_probability = 1.0;
  const auto hr = smooth_image(48, 48, 11);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng a(seed), b(seed);
    const auto da = degrade(hr, spec, a);
    const auto db = degrade(hr, spec, b);
    EXPECT_EQ(da.x, db.x);
    EXPECT_EQ(da.provenance, db.provenance);
    const auto r = degrade_replay(hr, 4, provenance_from_json(to_json(da.provenance)));
    EXPECT_EQ(r.x, da.x);
    EXPECT_EQ(r.y, da.y);
    ASSERT_TRUE(da.provenance.noise_level);
    EXPECT_GT(*da.provenance.noise_level, 0.0);
    EXPECT_LE(*da.provenance.noise_level, 50.0);
  }
}

TEST(Degrade, RequiresDivisibleInput) {
  Rng rng(1);
  EXPECT_THROW(degrade(random_image(30, 32, 1), DegradationSpec::for_scale(4), rng), ConfigError);
}

TEST(Patches, WindowsCoverEveryPixel) {
  EXPECT_EQ(window_offsets(256, 256, 240), (std::vector<int>{0}));
  EXPECT_EQ(window_offsets(500, 256, 240), (std::vector<int>{0, 240, 244}));
  EXPECT_EQ(window_offsets(736, 256, 240), (std::vector<int>{0, 240, 480}));
  EXPECT_TRUE(window_offsets(100, 256, 240).empty());
}

TEST(Patches, SmallImagesAreSkippedAndCounted) {
  std::vector<ImageBuffer> images{random_image(40, 40, 1), random_image(10, 40, 2), random_image(40, 70, 3)};
  std::size_t skipped = 0;
  const auto patches = sample_patches(images, 32, 30, &skipped);
  EXPECT_EQ(skipped, 1u);
  EXPECT_EQ(patches.size(), 2u * 2u + 2u * 3u);
  EXPECT_EQ(patches[0], crop(images[0], 0, 0, 32, 32));
  EXPECT_EQ(patches.back(), crop(images[2], 8, 38, 32, 32));
}

TEST(Dihedral, InverseRestoresAndGroupHasEightDistinctElements) {
  const auto img = random_image(6, 6, 12);
  std::vector<ImageBuffer> seen;
  for (int id = 0; id < 8; ++id) {
    const auto t = apply_dihedral(img, id);
    EXPECT_EQ(invert_dihedral(t, id), img);
    for (const auto& s : seen) EXPECT_NE(s, t);
    seen.push_back(t);
  }
  EXPECT_EQ(apply_dihedral(img, 0), img);
}

TEST(Dihedral, RotationIsCounterClockwise) {
  ImageBuffer img(2, 2, 3, 0.0f);
  img.at(0, 0, 1) = 1.0f;  // top-right
  const auto r = apply_dihedral(img, 1);
  EXPECT_EQ(r.at(0, 0, 0), 1.0f);  // moves to top-left
}
