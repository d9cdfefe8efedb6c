// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>

#include "xvs/image.hpp"

namespace xvs::metrics {

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

struct MetricReport {
    double psnr = 0.0; ///< +infinity for identical images
    double ssim = 0.0;
};

/// 10 log10(1 / MSE) over all channels of images in [0, 1]. Identical images
/// give +infinity.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5) of
/// the channel-mean grayscale images, with data range 1.
double ssim(const Image& a, const Image& b);

struct SsimGradient {
    double value = 0.0;
    Image grad_a; ///< d ssim / d a, same shape as a
};

/// SSIM and its gradient with respect to the first argument.
SsimGradient ssim_with_grad(const Image& a, const Image& b);

MetricReport evaluate(const Image& pred, const Image& gt);

} // namespace xvs::metrics
