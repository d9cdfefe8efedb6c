// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "xvs/image.hpp"

namespace xvs::testing {

inline Image random_image(std::uint64_t seed, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h, c);
    for (double& v : img.data()) {
        v = u(rng);
    }
    return img;
}

/// Central-difference gradient of a scalar function of one image.
inline Image numeric_image_gradient(const Image& x, const std::function<double(const Image&)>& f, double h = 1e-6) {
    Image g(x.width(), x.height(), x.channels());
    Image p = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = p.data()[i];
        p.data()[i] = orig + h;
        const double fp = f(p);
        p.data()[i] = orig - h;
        const double fm = f(p);
        p.data()[i] = orig;
        g.data()[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// max |a - b| / max(|a|, |b|, floor).
inline double max_rel_diff(const Image& a, const Image& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double y = b.data()[i];
        const double d = std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor});
        worst = std::max(worst, d);
    }
    return worst;
}

} // namespace xvs::testing
