#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "schn/degradation.hpp"
#include "schn/errors.hpp"
#include "schn/evaluation.hpp"
#include "schn/metrics.hpp"
#include "schn/parallel.hpp"

using namespace schn;
using schn::testing::random_image;
using schn::testing::smooth_image;

namespace {

ImageBuffer offset_by(const ImageBuffer& img, float delta) {
  auto out = img;
  for (auto& v : out.values) v += delta;
  return out;
}

// Direct per-window SSIM for one channel at one window position.
double ssim_window(const ImageBuffer& a, const ImageBuffer& b, int c, int top, int left) {
  double w[11][11], total = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += w[i][j];
    }
  }
  double ma = 0, mb = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      ma += w[i][j] / total * a.at(c, top + i, left + j);
      mb += w[i][j] / total * b.at(c, top + i, left + j);
    }
  }
  double va = 0, vb = 0, cov = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      const double da = a.at(c, top + i, left + j) - ma, db = b.at(c, top + i, left + j) - mb;
      va += w[i][j] / total * da * da;
      vb += w[i][j] / total * db * db;
      cov += w[i][j] / total * da * db;
    }
  }
  const double c1 = 1e-4, c2 = 9e-4;
  return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
  const auto img = random_image(8, 8, 1);
  EXPECT_EQ(psnr_rgb(img, img), 100.0);
}

TEST(Psnr, UniformErrorClosedForm) {
  ImageBuffer ref(10, 10, 3, 0.5f);
  EXPECT_NEAR(psnr_rgb(offset_by(ref, 0.1f), ref), 20.0, 1e-5);
  EXPECT_NEAR(psnr_rgb(offset_by(ref, 0.05f), ref) - psnr_rgb(offset_by(ref, 0.1f), ref), 20 * std::log10(2.0), 1e-5);
}

TEST(Psnr, StrictlyDecreasingInErrorMagnitude) {
  ImageBuffer ref(6, 6, 3, 0.4f);
  double prev = 1e9;
  for (float e : {0.001f, 0.01f, 0.05f, 0.2f, 0.5f}) {
    const double p = psnr_rgb(offset_by(ref, e), ref);
    EXPECT_LT(p, prev);
    prev = p;
  }
  EXPECT_THROW(psnr_rgb(ImageBuffer(4, 4), ImageBuffer(4, 5)), ConfigError);
}

TEST(Ssim, SelfSimilarityIsExactlyOne) {
  const auto img = smooth_image(24, 30, 2);
  EXPECT_EQ(ssim_rgb(img, img), 1.0);
}

TEST(Ssim, InvertedImageIsStronglyNegative) {
  ImageBuffer img(32, 32, 3);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) img.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 1.0f : 0.0f;
    }
  }
  auto inv = img;
  for (auto& v : inv.values) v = 1.0f - v;
  const double s = ssim_rgb(inv, img);
  EXPECT_LT(s, 0.0);
  EXPECT_LT(s, -0.9);
}

TEST(Ssim, SymmetricAndMatchesDirectWindowAverage) {
  const auto a = random_image(14, 13, 3);
  const auto b = smooth_image(14, 13, 4);
  EXPECT_NEAR(ssim_rgb(a, b), ssim_rgb(b, a), 1e-12);
  double total = 0;
  int count = 0;
  for (int c = 0; c < 3; ++c) {
    double ch = 0;
    int n = 0;
    for (int y = 0; y + 11 <= 14; ++y) {
      for (int x = 0; x + 11 <= 13; ++x, ++n) ch += ssim_window(a, b, c, y, x);
    }
    total += ch / n;
    ++count;
  }
  EXPECT_NEAR(ssim_rgb(a, b), total / count, 1e-9);
}

TEST(Ssim, RejectsUndersizedImages) {
  EXPECT_THROW(ssim_rgb(ImageBuffer(10, 20), ImageBuffer(10, 20)), ConfigError);
}

TEST(Parallel, EveryIndexRunsOnceAndErrorsPropagate) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw ConfigError("boom");
               }),
               ConfigError);
}

TEST(EvalCondition, LabelsAndJson) {
  EXPECT_EQ((EvalCondition{4, 0.5, 0.5, 0}).label(), "x4_iso0.5_n0");
  EXPECT_EQ((EvalCondition{2, 1.5, 2.0, 15}).label(), "x2_aniso1.5-2_n15");
  const auto grid = parse_grid(nlohmann::json::parse(
      R"({"conditions":[{"scale":4,"sigma":2.0},{"scale":4,"sigma_x":0.5,"sigma_y":3.0,"noise":10}]})"));
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[0], (EvalCondition{4, 2.0, 2.0, 0.0}));
  EXPECT_EQ(grid[1], (EvalCondition{4, 0.5, 3.0, 10.0}));
  EXPECT_TRUE(parse_grid(nlohmann::json::array()).empty());
  EXPECT_THROW(parse_grid(nlohmann::json::parse(R"([{"scale":4,"sigma":1,"noise":80}])")), ConfigError);
}

TEST(EvalGrid, BicubicBaselineFollowsTheProtocol) {
  const auto hr = smooth_image(48, 40, 5);
  const EvalCondition cond{4, 1.0, 1.0, 0.0};
  const auto report = eval_images(EvalSystem::bicubic(), {{"img", hr}}, {cond}, 0);
  ASSERT_EQ(report.rows.size(), 1u);
  const auto lr = bicubic_resize(blur(hr, make_gaussian_kernel(1.0, 1.0, 0.0)), {1, 4});
  const auto sr = clamp01(bicubic_resize(lr, {4, 1}));
  EXPECT_DOUBLE_EQ(report.rows[0].psnr, psnr_rgb(sr, hr));
  EXPECT_DOUBLE_EQ(report.rows[0].ssim, ssim_rgb(sr, hr));
  EXPECT_DOUBLE_EQ(report.aggregates[0].psnr, report.rows[0].psnr);
}

TEST(EvalGrid, DeterministicOrderIndependentAndMeanAggregated) {
  std::vector<NamedImage> images{{"b", smooth_image(32, 32, 6)}, {"a", smooth_image(40, 36, 7)},
                                 {"c", smooth_image(36, 44, 8)}};
  const std::vector<EvalCondition> conds{{4, 0.5, 0.5, 0.0}, {4, 2.0, 2.0, 15.0}, {2, 0.5, 3.0, 0.0}};
  const auto r1 = eval_images(EvalSystem::bicubic(), images, conds, 11);
  std::reverse(images.begin(), images.end());
  const auto r2 = eval_images(EvalSystem::bicubic(), images, conds, 11);
  EXPECT_EQ(r1.to_csv(), r2.to_csv());
  EXPECT_EQ(r1.to_json(), r2.to_json());
  for (std::size_t c = 0; c < conds.size(); ++c) {
    double sum = 0;
    for (const auto& row : r1.rows) {
      if (row.condition == c) sum += row.psnr;
    }
    EXPECT_NEAR(r1.aggregates[c].psnr, sum / 3.0, 1e-12);
  }
  EXPECT_EQ(r1.rows.front().image, "a");
}

TEST(EvalGrid, NoiseNeverHelpsTheBaseline) {
  const auto hr = smooth_image(48, 48, 9);
  for (double sigma : {0.5, 2.0}) {
    const auto clean = eval_images(EvalSystem::bicubic(), {{"i", hr}}, {{4, sigma, sigma, 0.0}}, 1);
    for (double level : {5.0, 25.0, 50.0}) {
      const auto noisy = eval_images(EvalSystem::bicubic(), {{"i", hr}}, {{4, sigma, sigma, level}}, 1);
      EXPECT_LE(noisy.rows[0].psnr, clean.rows[0].psnr);
    }
  }
}

TEST(EvalGrid, CsvHasStableColumns) {
  const auto r = eval_images(EvalSystem::bicubic(), {{"x", smooth_image(32, 32, 10)}}, {{4, 0.5, 0.5, 0}}, 0);
  const auto csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "condition,scale,sigma_x,sigma_y,noise,image,psnr,ssim");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(EvalGrid, UndersizedImagesAreCounted) {
  const auto r = eval_images(EvalSystem::bicubic(), {{"tiny", random_image(8, 8, 11)}}, {{4, 0.5, 0.5, 0}}, 0);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.skipped, 1u);
}
