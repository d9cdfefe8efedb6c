// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace xvs::metrics {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b) || a.empty()) {
        throw std::invalid_argument(std::string(what) + ": images must be non-empty with identical shapes");
    }
}

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[i];
    }
    for (double& v : g) {
        v /= sum;
    }
    return g;
}

// Valid-mode separable correlation: out(k) = sum_i g[i] in(k + i).
Image filter_valid(const Image& in, const std::array<double, kSsimWindow>& g) {
    const int ow = in.width() - kSsimWindow + 1;
    const int oh = in.height() - kSsimWindow + 1;
    Image rows(ow, in.height(), 1);
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                acc += g[i] * in.at(x + i, y);
            }
            rows.at(x, y) = acc;
        }
    }
    Image out(ow, oh, 1);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                acc += g[i] * rows.at(x, y + i);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

// Adjoint of filter_valid: out(p) = sum_k g[p - k] in(k).
Image filter_adjoint(const Image& in, int width, int height, const std::array<double, kSsimWindow>& g) {
    Image cols(in.width(), height, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < in.width(); ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                const int ky = y - i;
                if (ky >= 0 && ky < in.height()) {
                    acc += g[i] * in.at(x, ky);
                }
            }
            cols.at(x, y) = acc;
        }
    }
    Image out(width, height, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                const int kx = x - i;
                if (kx >= 0 && kx < cols.width()) {
                    acc += g[i] * cols.at(kx, y);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Image product(const Image& a, const Image& b) {
    Image out(a.width(), a.height(), 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = a.data()[i] * b.data()[i];
    }
    return out;
}

SsimGradient ssim_impl(const Image& a, const Image& b, bool want_grad) {
    require_same_shape(a, b, "ssim");
    if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
    const Image ga = to_grayscale(a);
    const Image gb = to_grayscale(b);
    const auto g = gaussian_window();
    const Image mu_a = filter_valid(ga, g);
    const Image mu_b = filter_valid(gb, g);
    const Image e_aa = filter_valid(product(ga, ga), g);
    const Image e_bb = filter_valid(product(gb, gb), g);
    const Image e_ab = filter_valid(product(ga, gb), g);

    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;
    const std::size_t n = mu_a.size();
    Image p_mu(mu_a.width(), mu_a.height(), 1);
    Image p_aa(mu_a.width(), mu_a.height(), 1);
    Image p_ab(mu_a.width(), mu_a.height(), 1);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double ma = mu_a.data()[k];
        const double mb = mu_b.data()[k];
        const double var_a = e_aa.data()[k] - ma * ma;
        const double var_b = e_bb.data()[k] - mb * mb;
        const double cov = e_ab.data()[k] - ma * mb;
        const double a1 = 2.0 * ma * mb + c1;
        const double a2 = 2.0 * cov + c2;
        const double b1 = ma * ma + mb * mb + c1;
        const double b2 = var_a + var_b + c2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (want_grad) {
            p_mu.data()[k] = s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2);
            p_aa.data()[k] = -s / b2;
            p_ab.data()[k] = 2.0 * s / a2;
        }
    }
    SsimGradient out;
    out.value = total / static_cast<double>(n);
    if (!want_grad) {
        return out;
    }
    const int w = a.width();
    const int h = a.height();
    const Image g_mu = filter_adjoint(p_mu, w, h, g);
    const Image g_aa = filter_adjoint(p_aa, w, h, g);
    const Image g_ab = filter_adjoint(p_ab, w, h, g);
    out.grad_a = Image(w, h, a.channels());
    const double inv = 1.0 / (static_cast<double>(n) * a.channels());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gray_grad =
                g_mu.at(x, y) + 2.0 * ga.at(x, y) * g_aa.at(x, y) + gb.at(x, y) * g_ab.at(x, y);
            for (int c = 0; c < a.channels(); ++c) {
                out.grad_a.at(x, y, c) = gray_grad * inv;
            }
        }
    }
    return out;
}

} // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimGradient ssim_with_grad(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

MetricReport evaluate(const Image& pred, const Image& gt) { return {psnr(pred, gt), ssim(pred, gt)}; }

} // namespace xvs::metrics
