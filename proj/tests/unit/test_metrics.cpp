// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "image_util.hpp"
#include "xvs/metrics.hpp"

using namespace xvs;
using namespace xvs::testing;

namespace {

double oracle_psnr(const Image& a, const Image& b) {
    long double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return -10.0 * std::log10(static_cast<double>(s / a.size()));
}

double gray(const Image& img, int x, int y) {
    double s = 0.0;
    for (int c = 0; c < img.channels(); ++c) {
        s += img.at(x, y, c);
    }
    return s / img.channels();
}

// Direct windowed SSIM: every fully contained 11x11 window, Gaussian weights.
double oracle_ssim(const Image& a, const Image& b) {
    double w[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
            w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
            total += w[i][j];
        }
    }
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double sum = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= a.height(); ++y0) {
        for (int x0 = 0; x0 + 11 <= a.width(); ++x0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < 11; ++i) {
                for (int j = 0; j < 11; ++j) {
                    const double k = w[i][j] / total;
                    const double pa = gray(a, x0 + j, y0 + i);
                    const double pb = gray(b, x0 + j, y0 + i);
                    ma += k * pa;
                    mb += k * pb;
                    saa += k * pa * pa;
                    sbb += k * pb * pb;
                    sab += k * pa * pb;
                }
            }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cov = sab - ma * mb;
            sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return sum / count;
}

} // namespace

TEST(Psnr, IdenticalIsInfinite) {
    const Image a = random_image(1, 8, 8, 3);
    EXPECT_EQ(metrics::psnr(a, a), std::numeric_limits<double>::infinity());
}

TEST(Psnr, UniformOffset) {
    const Image a(16, 16, 3, 0.3);
    const Image b(16, 16, 3, 0.4);
    EXPECT_NEAR(metrics::psnr(a, b), 20.0, 1e-6);
}

TEST(Psnr, MatchesDirectSummation) {
    const Image a = random_image(2, 20, 13, 3);
    const Image b = random_image(3, 20, 13, 3);
    EXPECT_NEAR(metrics::psnr(a, b), oracle_psnr(a, b), 1e-9);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
    const Image a = random_image(4, 16, 16, 3, 0.3, 0.7);
    const Image noise = random_image(5, 16, 16, 3, -1.0, 1.0);
    double last = std::numeric_limits<double>::infinity();
    for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        Image b = a;
        for (std::size_t i = 0; i < b.size(); ++i) {
            b.data()[i] += amp * noise.data()[i];
        }
        const double p = metrics::psnr(a, b);
        EXPECT_LT(p, last);
        last = p;
    }
}

TEST(Psnr, ShapeMismatchThrows) {
    EXPECT_THROW(metrics::psnr(Image(4, 4, 3), Image(4, 5, 3)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
    const Image a = random_image(6, 24, 24, 3);
    EXPECT_NEAR(metrics::ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const double c1 = 1e-4;
    EXPECT_NEAR(metrics::ssim(Image(16, 16, 3, 0.0), Image(16, 16, 3, 1.0)), c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, MatchesWindowOracleAndIsSymmetric) {
    const Image a = random_image(7, 23, 19, 3);
    const Image b = random_image(8, 23, 19, 3);
    EXPECT_NEAR(metrics::ssim(a, b), oracle_ssim(a, b), 1e-12);
    EXPECT_NEAR(metrics::ssim(a, b), metrics::ssim(b, a), 1e-15);
    EXPECT_LE(std::abs(metrics::ssim(a, b)), 1.0);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
    const Image a = random_image(9, 14, 13, 3);
    const Image b = random_image(10, 14, 13, 3);
    const metrics::SsimGradient g = metrics::ssim_with_grad(a, b);
    EXPECT_NEAR(g.value, metrics::ssim(a, b), 1e-15);
    const Image n = numeric_image_gradient(a, [&](const Image& x) { return metrics::ssim(x, b); }, 1e-4);
    EXPECT_LT(max_rel_diff(g.grad_a, n, 1e-6), 1e-4);
}

TEST(Ssim, TooSmallThrows) {
    EXPECT_THROW(metrics::ssim(Image(10, 20, 3), Image(10, 20, 3)), std::invalid_argument);
}

TEST(Metrics, EvaluateReport) {
    const Image a = random_image(11, 16, 16, 3);
    const Image b = random_image(12, 16, 16, 3);
    const metrics::MetricReport r = metrics::evaluate(a, b);
    EXPECT_EQ(r.psnr, metrics::psnr(a, b));
    EXPECT_EQ(r.ssim, metrics::ssim(a, b));
}
