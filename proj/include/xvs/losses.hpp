// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "xvs/image.hpp"
#include "xvs/splat.hpp"

namespace xvs::loss {

/// Pixel reduction. Sum follows the plain summation form of each term; Mean
/// divides by the valid-pixel count for resolution-independent weighting.
enum class Reduction { Sum, Mean };

struct LossWeights {
    double cam = 1.0;
    double depth = 1.0;
    double consistency = 1.0;
    double height = 1.0;
    double rgb_ground = 1.0;
    double rgb_combined = 1.0;
    double rgb_sat = 1.0;
    double sky = 0.1;
    double bev = 0.5;
    double alpha_conf = 0.2;   ///< weight of the -log C confidence regularizer
    double perceptual = 0.05;  ///< gamma on the perceptual term of the ground RGB loss
    double sky_tau = 10.0;     ///< sky depth threshold, normalized units
};

// ---------------------------------------------------------------------------
// Confidence-weighted regression: sum_j C_j |pred_j - gt_j| - alpha log C_j.

struct ConfidenceLoss {
    double value = 0.0;
    std::size_t valid = 0;
    Image grad_pred;
    Image grad_confidence; ///< empty when no confidence map was supplied
};

/// Depth version: gt pixels that are non-finite or <= 0 are excluded. An
/// empty `confidence` means C = 1 everywhere. Throws if no pixel is valid.
ConfidenceLoss depth_loss(const Image& pred, const Image& gt, const Image& confidence, double alpha_conf,
                          Reduction reduction = Reduction::Sum);

/// Height version: gt pixels that are non-finite are excluded.
ConfidenceLoss height_loss(const Image& pred, const Image& gt, const Image& confidence, double alpha_conf,
                           Reduction reduction = Reduction::Sum);

// ---------------------------------------------------------------------------

/// Pose (translation + unit quaternion) and pinhole intrinsics, flattened for L1.
struct CameraParams {
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector4d intrinsics = Eigen::Vector4d::Zero(); ///< fx, fy, cx, cy

    static CameraParams from_camera(const PerspectiveCamera& cam);
    /// translation(3), quaternion w,x,y,z with w >= 0 (4), intrinsics(4).
    Eigen::Matrix<double, 11, 1> flatten() const;
};

struct CameraLoss {
    double value = 0.0;
    Eigen::Matrix<double, 11, 1> grad_pred; ///< w.r.t. CameraParams::flatten() of pred
};

/// |T_pred - T_gt|_1 + |K_pred - K_gt|_1.
CameraLoss camera_loss(const CameraParams& pred, const CameraParams& gt);

struct PairLoss {
    double value = 0.0;
    Image grad_a;
    Image grad_b;
};

/// sum |pred_depth - rendered_depth| over pixels with rendered alpha > 0.5.
/// grad_a is w.r.t. pred_depth, grad_b w.r.t. rendered_depth.
PairLoss consistency_loss(const Image& pred_depth, const Image& rendered_depth, const Image& rendered_alpha,
                          Reduction reduction = Reduction::Sum);

struct ImageLoss {
    double value = 0.0;
    Image grad; ///< w.r.t. the rendered image
};

ImageLoss mse(const Image& render, const Image& target);

/// Perceptual term hook: value and gradient w.r.t. the render.
using PerceptualHook = std::function<ImageLoss(const Image& render, const Image& target)>;

/// Default perceptual proxy (1 - SSIM) / 2.
ImageLoss ssim_perceptual(const Image& render, const Image& target);

/// MSE + gamma * hook(render, target). gamma = 0 or an empty hook disables it.
ImageLoss rgb_loss(const Image& render, const Image& target, double gamma,
                   const PerceptualHook& hook = ssim_perceptual);

struct MultiViewLoss {
    double value = 0.0;
    std::vector<Image> grads; ///< one per render, in input order
};

/// Sum of MSE terms over renders of the satellite splats at the input views and
/// at the interpolated novel views.
MultiViewLoss sat_rgb_loss(std::span<const Image> input_renders, std::span<const Image> input_targets,
                           std::span<const Image> novel_renders, std::span<const Image> novel_targets);

/// Sum of MSE terms of combined-set renders against the input images.
MultiViewLoss combined_rgb_loss(std::span<const Image> renders, std::span<const Image> targets);

/// MSE between the satellite image and the BEV render of the combined set.
ImageLoss bev_loss(const Image& bev_render, const Image& satellite);

struct SkyLoss {
    double depth_value = 0.0;
    double alpha_value = 0.0;
    Image grad_depth;
    Image grad_alpha;
};

/// sum M ReLU(tau - d) and sum M |1 - alpha| over sky pixels (mask > 0.5).
SkyLoss sky_losses(const Image& depth, const Image& alpha, const Image& mask, double tau,
                   Reduction reduction = Reduction::Sum);

/// Novel cameras linearly interpolated (translation lerp, rotation slerp)
/// between the two input cameras whose centers are farthest apart, at
/// t = k / (count + 1). Intrinsics are copied from the first of the pair.
std::vector<PerspectiveCamera> interpolate_novel_views(std::span<const PerspectiveCamera> inputs, int count = 2);

struct LossTerms {
    double cam = 0.0;
    double depth = 0.0;
    double consistency = 0.0;
    double height = 0.0;
    double rgb_ground = 0.0;
    double rgb_combined = 0.0;
    double rgb_sat = 0.0;
    double sky_depth = 0.0;
    double sky_alpha = 0.0;
    double bev = 0.0;
};

struct TotalLoss {
    double total = 0.0;
    /// (name, weighted contribution) in summation order.
    std::vector<std::pair<std::string, double>> breakdown;
};

/// Weighted sum of all terms; the sky weight applies to sky_depth + sky_alpha.
TotalLoss total_loss(const LossTerms& terms, const LossWeights& weights);

} // namespace xvs::loss
