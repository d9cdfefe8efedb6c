// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "xvs/image.hpp"
#include "xvs/pose.hpp"

namespace xvs {

// Real SH basis constants for degrees 0 and 1.
inline constexpr double kShC0 = 0.28209479177387814; // 1 / (2 sqrt(pi))
inline constexpr double kShC1 = 0.4886025119029199;  // sqrt(3 / (4 pi))

/// Rows are color channels, columns the order-1 basis (Y00, Y1-1, Y10, Y11).
using ShCoeffs = Eigen::Matrix<double, 3, 4>;

struct Gaussian3D {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    /// Per-axis log standard deviations.
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    double opacity_logit = 0.0;
    ShCoeffs sh = ShCoeffs::Zero();

    double opacity() const;
    Eigen::Matrix3d rotation_matrix() const;
    /// R diag(exp(2 log_scale)) R^T.
    Eigen::Matrix3d covariance() const;

    /// Isotropic splat whose view-independent color is `rgb`.
    static Gaussian3D isotropic(const Eigen::Vector3d& mean, double sigma, double opacity,
                                const Eigen::Vector3d& rgb);
};

using GaussianSet = std::vector<Gaussian3D>;

double sigmoid(double x);
double logit(double p);

/// Degree-0 coefficient that reproduces `value` through eval_sh's +0.5 shift.
double rgb_to_sh0(double value);

struct PerspectiveCamera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    /// Camera-to-world; camera axes x right, y down, z forward.
    Rigid3 pose;

    Eigen::Vector3d center() const { return pose.translation; }
};

/// Top-down camera: pixel = resolution * (x, -y) + center_offset in the z-up
/// world frame, so world +y (reference look-at) points toward decreasing v.
struct OrthoCamera {
    double resolution = 1.0; ///< pixels per world unit
    int width = 0;
    int height = 0;
    Eigen::Vector2d center_offset = Eigen::Vector2d::Zero();

    /// Camera whose world origin lands on pixel (width / 2, height / 2).
    static OrthoCamera centered(double resolution, int width, int height);

    Eigen::Vector2d project(const Eigen::Vector3d& world) const {
        return {center_offset.x() + resolution * world.x(), center_offset.y() - resolution * world.y()};
    }
};

using Camera = std::variant<PerspectiveCamera, OrthoCamera>;

int camera_width(const Camera& cam);
int camera_height(const Camera& cam);

/// Projected Gaussian. `cov` excludes the rasterizer's low-pass term.
struct Splat2D {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    /// Sort key: camera-frame z for perspective, -altitude for orthographic.
    double depth = 0.0;
    bool visible = false;
};

inline constexpr double kDefaultNearPlane = 0.01;

/// Order-1 SH color with the customary +0.5 shift and clamp at zero.
Eigen::Vector3d eval_sh(const ShCoeffs& sh, const Eigen::Vector3d& view_dir);

Splat2D project_perspective(const Gaussian3D& g, const PerspectiveCamera& cam, double z_near = kDefaultNearPlane);
Splat2D project_orthographic(const Gaussian3D& g, const OrthoCamera& cam);

/// Unit viewing direction used for SH evaluation (straight down for BEV).
Eigen::Vector3d view_direction(const Gaussian3D& g, const Camera& cam);

struct RenderConfig {
    double eps2d = 0.3;         ///< low-pass added to the 2D covariance diagonal, px^2
    double alpha_min = 1.0 / 255.0;
    double alpha_max = 0.999;
    double z_near = kDefaultNearPlane;
    double depth_eps = 1e-10;   ///< floor on alpha when normalizing expected depth
    int tile_size = 16;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    int workers = 0;            ///< 0 = hardware concurrency
};

struct RenderDiagnostics {
    std::size_t culled = 0;     ///< behind the near plane, or too transparent to reach alpha_min
    std::size_t degenerate = 0; ///< non-PSD 2D covariance after regularization
    std::size_t rasterized = 0;
};

struct RenderOutput {
    Image color;  ///< H x W x 3
    Image depth;  ///< H x W, alpha-normalized expected depth (sort key units)
    Image alpha;  ///< H x W accumulated opacity
    RenderDiagnostics diagnostics;
};

/// Splat ready for rasterization.
///
/// A splat touches pixel p iff alpha(p) = min(opacity * exp(-0.5 d^T conic d),
/// alpha_max) >= alpha_min with d = p - mean. `extent` bounds that region.
struct PreparedSplat {
    int index = 0;
    Eigen::Vector2d mean;
    Eigen::Matrix2d conic;
    double opacity = 0.0;
    Eigen::Vector3d color;
    double depth = 0.0;
    Eigen::Vector2d extent;
};

/// Depth-sorted splats binned into screen tiles.
struct RasterPlan {
    int width = 0;
    int height = 0;
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<PreparedSplat> splats;            ///< sorted by (depth, index)
    std::vector<std::vector<int>> tile_splats;    ///< per tile, positions into `splats`
    RenderDiagnostics diagnostics;

    const std::vector<int>& splats_for_pixel(int x, int y) const {
        return tile_splats[static_cast<std::size_t>(y / tile_size) * tiles_x + x / tile_size];
    }
};

RasterPlan prepare_splats(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config = {});
RenderOutput rasterize(const RasterPlan& plan, const RenderConfig& config = {});

RenderOutput render(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config = {});
RenderOutput render(const GaussianSet& gaussians, const Camera& cam, const Eigen::Vector3d& background);

} // namespace xvs
