// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/splat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xvs/parallel.hpp"

namespace xvs {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double rgb_to_sh0(double value) { return (value - 0.5) / kShC0; }

double Gaussian3D::opacity() const { return sigmoid(opacity_logit); }

Eigen::Matrix3d Gaussian3D::rotation_matrix() const { return rotation.normalized().toRotationMatrix(); }

Eigen::Matrix3d Gaussian3D::covariance() const {
    const Eigen::Matrix3d r = rotation_matrix();
    const Eigen::Vector3d var = (2.0 * log_scale.array()).exp();
    return r * var.asDiagonal() * r.transpose();
}

Gaussian3D Gaussian3D::isotropic(const Eigen::Vector3d& mean, double sigma, double opacity, const Eigen::Vector3d& rgb) {
    Gaussian3D g;
    g.mean = mean;
    g.log_scale.setConstant(std::log(sigma));
    g.opacity_logit = logit(opacity);
    for (int c = 0; c < 3; ++c) {
        g.sh(c, 0) = rgb_to_sh0(rgb[c]);
    }
    return g;
}

OrthoCamera OrthoCamera::centered(double resolution, int width, int height) {
    OrthoCamera cam;
    cam.resolution = resolution;
    cam.width = width;
    cam.height = height;
    cam.center_offset = Eigen::Vector2d(width / 2, height / 2);
    return cam;
}

int camera_width(const Camera& cam) {
    return std::visit([](const auto& c) { return c.width; }, cam);
}

int camera_height(const Camera& cam) {
    return std::visit([](const auto& c) { return c.height; }, cam);
}

Eigen::Vector3d eval_sh(const ShCoeffs& sh, const Eigen::Vector3d& dir) {
    const Eigen::Vector4d basis(kShC0, -kShC1 * dir.y(), kShC1 * dir.z(), -kShC1 * dir.x());
    const Eigen::Vector3d raw = sh * basis;
    return (raw.array() + 0.5).max(0.0);
}

Splat2D project_perspective(const Gaussian3D& g, const PerspectiveCamera& cam, double z_near) {
    Splat2D out;
    const Eigen::Matrix3d w = cam.pose.rotation.transpose();
    const Eigen::Vector3d p = w * (g.mean - cam.pose.translation);
    out.depth = p.z();
    if (!(p.z() > z_near)) {
        return out;
    }
    const double iz = 1.0 / p.z();
    out.mean = Eigen::Vector2d(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> t = j * w;
    out.cov = t * g.covariance() * t.transpose();
    out.visible = true;
    return out;
}

Splat2D project_orthographic(const Gaussian3D& g, const OrthoCamera& cam) {
    Splat2D out;
    out.mean = cam.project(g.mean);
    const Eigen::Matrix3d sigma = g.covariance();
    const double r2 = cam.resolution * cam.resolution;
    // v = -y flips the off-diagonal term.
    out.cov << r2 * sigma(0, 0), -r2 * sigma(0, 1), -r2 * sigma(1, 0), r2 * sigma(1, 1);
    out.depth = -g.mean.z();
    out.visible = true;
    return out;
}

Eigen::Vector3d view_direction(const Gaussian3D& g, const Camera& cam) {
    if (const auto* persp = std::get_if<PerspectiveCamera>(&cam)) {
        const Eigen::Vector3d v = g.mean - persp->center();
        const double n = v.norm();
        return n > 0.0 ? Eigen::Vector3d(v / n) : Eigen::Vector3d(persp->pose.rotation.col(2));
    }
    return {0.0, 0.0, -1.0};
}

RasterPlan prepare_splats(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config) {
    RasterPlan plan;
    plan.width = camera_width(cam);
    plan.height = camera_height(cam);
    plan.tile_size = std::max(1, config.tile_size);
    plan.tiles_x = (plan.width + plan.tile_size - 1) / plan.tile_size;
    plan.tiles_y = (plan.height + plan.tile_size - 1) / plan.tile_size;
    plan.tile_splats.assign(static_cast<std::size_t>(plan.tiles_x) * plan.tiles_y, {});

    plan.splats.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Gaussian3D& g = gaussians[i];
        if (!g.mean.allFinite() || !g.log_scale.allFinite() || !g.rotation.coeffs().allFinite() ||
            !std::isfinite(g.opacity_logit) || !g.sh.allFinite()) {
            throw std::invalid_argument("render: Gaussian " + std::to_string(i) + " has non-finite parameters");
        }
        const Splat2D s = std::visit(
            [&](const auto& c) {
                using C = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<C, PerspectiveCamera>) {
                    return project_perspective(g, c, config.z_near);
                } else {
                    return project_orthographic(g, c);
                }
            },
            cam);
        const double opacity = g.opacity();
        if (!s.visible || opacity < config.alpha_min) {
            ++plan.diagnostics.culled;
            continue;
        }
        Eigen::Matrix2d cov = s.cov;
        cov(0, 0) += config.eps2d;
        cov(1, 1) += config.eps2d;
        const double det = cov.determinant();
        if (!(det > 0.0) || !(cov(0, 0) > 0.0) || !std::isfinite(det)) {
            ++plan.diagnostics.degenerate;
            continue;
        }
        PreparedSplat p;
        p.index = static_cast<int>(i);
        p.mean = s.mean;
        p.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
        p.opacity = opacity;
        p.color = eval_sh(g.sh, view_direction(g, cam));
        p.depth = s.depth;
        if (config.alpha_min > 0.0) {
            const double m_max = 2.0 * std::log(opacity / config.alpha_min);
            p.extent = Eigen::Vector2d(std::sqrt(m_max * cov(0, 0)), std::sqrt(m_max * cov(1, 1)));
        } else {
            p.extent.setConstant(std::numeric_limits<double>::infinity());
        }
        plan.splats.push_back(p);
    }

    std::sort(plan.splats.begin(), plan.splats.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });

    // One pixel of slack keeps the bounding box conservative under rounding.
    const double ts = plan.tile_size;
    for (std::size_t k = 0; k < plan.splats.size(); ++k) {
        const PreparedSplat& p = plan.splats[k];
        const double x0 = p.mean.x() - p.extent.x() - 1.0;
        const double x1 = p.mean.x() + p.extent.x() + 1.0;
        const double y0 = p.mean.y() - p.extent.y() - 1.0;
        const double y1 = p.mean.y() + p.extent.y() + 1.0;
        if (x1 < 0.0 || y1 < 0.0 || x0 > plan.width - 1 || y0 > plan.height - 1) {
            continue;
        }
        const int tx0 = std::max(0, static_cast<int>(std::floor(std::max(x0, 0.0) / ts)));
        const int ty0 = std::max(0, static_cast<int>(std::floor(std::max(y0, 0.0) / ts)));
        const int tx1 = std::min(plan.tiles_x - 1, static_cast<int>(std::floor(std::min(x1, plan.width - 1.0) / ts)));
        const int ty1 = std::min(plan.tiles_y - 1, static_cast<int>(std::floor(std::min(y1, plan.height - 1.0) / ts)));
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                plan.tile_splats[static_cast<std::size_t>(ty) * plan.tiles_x + tx].push_back(static_cast<int>(k));
            }
        }
        ++plan.diagnostics.rasterized;
    }
    return plan;
}

RenderOutput rasterize(const RasterPlan& plan, const RenderConfig& config) {
    RenderOutput out;
    out.color = Image(plan.width, plan.height, 3);
    out.depth = Image(plan.width, plan.height, 1);
    out.alpha = Image(plan.width, plan.height, 1);
    out.diagnostics = plan.diagnostics;

    const int workers = config.workers > 0 ? config.workers : worker_count();
    parallel_chunks(0, plan.height, workers, [&](int, int row_begin, int row_end) {
        for (int y = row_begin; y < row_end; ++y) {
            for (int x = 0; x < plan.width; ++x) {
                double transmittance = 1.0;
                Eigen::Vector3d color = Eigen::Vector3d::Zero();
                double depth = 0.0;
                for (const int k : plan.splats_for_pixel(x, y)) {
                    const PreparedSplat& s = plan.splats[static_cast<std::size_t>(k)];
                    const double dx = x - s.mean.x();
                    const double dy = y - s.mean.y();
                    const double m = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
                    const double alpha = std::min(s.opacity * std::exp(-0.5 * m), config.alpha_max);
                    if (alpha < config.alpha_min) {
                        continue;
                    }
                    const double weight = alpha * transmittance;
                    color += weight * s.color;
                    depth += weight * s.depth;
                    transmittance *= 1.0 - alpha;
                }
                const double acc = 1.0 - transmittance;
                color += transmittance * config.background;
                for (int c = 0; c < 3; ++c) {
                    out.color.at(x, y, c) = color[c];
                }
                out.alpha.at(x, y) = acc;
                out.depth.at(x, y) = depth / std::max(acc, config.depth_eps);
            }
        }
    });
    return out;
}

RenderOutput render(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config) {
    return rasterize(prepare_splats(gaussians, cam, config), config);
}

RenderOutput render(const GaussianSet& gaussians, const Camera& cam, const Eigen::Vector3d& background) {
    RenderConfig config;
    config.background = background;
    return render(gaussians, cam, config);
}

} // namespace xvs
