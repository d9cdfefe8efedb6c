// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "xvs/image.hpp"
#include "xvs/losses.hpp"
#include "xvs/splat.hpp"

namespace xvs {

/// Partials of a scalar loss with respect to one Gaussian. `rotation` is the
/// body-frame tangent used by apply_tangent.
struct GaussianGrad {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
    double opacity_logit = 0.0;
    ShCoeffs sh = ShCoeffs::Zero();
};

using GradientSet = std::vector<GaussianGrad>;

/// Upstream gradient of the loss w.r.t. the render outputs. Empty images are
/// treated as zero.
struct RenderGrad {
    Image color; ///< H x W x 3
    Image depth; ///< H x W
    Image alpha; ///< H x W
};

struct ForwardPass {
    RasterPlan plan;
    RenderOutput output;
};

ForwardPass render_forward(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config = {});

/// Reverse-mode derivative of the forward render. Throws std::invalid_argument
/// naming the pixel if `grad` holds a NaN.
GradientSet render_backward(const GaussianSet& gaussians, const Camera& cam, const ForwardPass& forward,
                            const RenderGrad& grad, const RenderConfig& config = {});

// ---------------------------------------------------------------------------
// Finite-difference checking

/// Number of scalar parameters per Gaussian in the flat gradient layout:
/// mean(3), log_scale(3), rotation tangent(3), opacity_logit(1), sh(12).
inline constexpr int kParamsPerGaussian = 22;

Eigen::VectorXd flatten(const GradientSet& grads);

/// Copy of `gaussians` with flat parameter `index` moved by `step`. Rotation
/// entries are applied through apply_tangent.
GaussianSet perturb_parameter(const GaussianSet& gaussians, int index, double step);

/// Central differences (f(x + h) - f(x - h)) / 2h of `loss` over every flat
/// parameter of `gaussians`.
Eigen::VectorXd finite_difference_gradient(const GaussianSet& gaussians,
                                           const std::function<double(const GaussianSet&)>& loss, double h = 1e-4);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor);

// ---------------------------------------------------------------------------
// Per-scene fitting

struct LearningRates {
    double mean = 1.6e-3;
    double sh = 2.5e-3;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct FitConfig {
    int steps = 500;
    LearningRates lr;
    loss::LossWeights weights;
    std::uint64_t seed = 0;
    int views_per_step = 0; ///< 0 = every target each step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double divergence_threshold = 1e6;
    RenderConfig render;
};

struct FitTarget {
    Camera camera;
    Image image;
    std::optional<Image> sky_mask;
    std::optional<Image> depth;
};

struct FitResult {
    GaussianSet gaussians;
    std::vector<double> loss_trace; ///< loss at the start of each step
};

class FitDivergedError : public std::runtime_error {
  public:
    FitDivergedError(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const { return trace_; }

  private:
    std::vector<double> trace_;
};

struct ViewLoss {
    double value = 0.0;
    RenderGrad grad;
};

/// Weighted per-view objective: rgb_ground * (MSE + perceptual * (1 - SSIM) / 2)
/// plus depth and sky terms when the target carries them (mean reduction).
/// The perceptual term is skipped for images smaller than the SSIM window.
ViewLoss view_loss(const RenderOutput& render, const FitTarget& target, const loss::LossWeights& weights);

/// Adam on all Gaussian parameters with a fixed Gaussian count.
FitResult fit_scene(const std::vector<FitTarget>& targets, const GaussianSet& init, const FitConfig& config);

} // namespace xvs
