#pragma once

#include "schn/image.hpp"

namespace schn {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) with the MSE pooled over every channel; kPsnrCap when equal.
double psnr_rgb(const ImageBuffer& pred, const ImageBuffer& ref);

// Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, L 1) over the
// valid window positions of each channel, averaged over channels.
double ssim_rgb(const ImageBuffer& pred, const ImageBuffer& ref);

}  // namespace schn
