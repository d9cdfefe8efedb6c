// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "xvs/metrics.hpp"

namespace xvs::loss {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

template <typename IsValid>
ConfidenceLoss confidence_loss(const char* what, const Image& pred, const Image& gt, const Image& confidence,
                               double alpha_conf, Reduction reduction, IsValid is_valid) {
    require_same_shape(pred, gt, what);
    const bool has_conf = !confidence.empty();
    if (has_conf) {
        require_same_shape(pred, confidence, what);
    }
    ConfidenceLoss out;
    out.grad_pred = Image(pred.width(), pred.height(), pred.channels());
    if (has_conf) {
        out.grad_confidence = Image(pred.width(), pred.height(), pred.channels());
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double g = gt.data()[i];
        if (!is_valid(g)) {
            continue;
        }
        const double c = has_conf ? confidence.data()[i] : 1.0;
        if (!(c > 0.0)) {
            throw std::invalid_argument(std::string(what) + ": confidence must be positive");
        }
        const double r = pred.data()[i] - g;
        out.value += c * std::abs(r) - alpha_conf * std::log(c);
        out.grad_pred.data()[i] = c * sign(r);
        if (has_conf) {
            out.grad_confidence.data()[i] = std::abs(r) - alpha_conf / c;
        }
        ++out.valid;
    }
    if (out.valid == 0) {
        throw std::invalid_argument(std::string(what) + ": no valid ground-truth pixels");
    }
    if (reduction == Reduction::Mean) {
        const double inv = 1.0 / static_cast<double>(out.valid);
        out.value *= inv;
        for (double& v : out.grad_pred.data()) {
            v *= inv;
        }
        for (double& v : out.grad_confidence.data()) {
            v *= inv;
        }
    }
    return out;
}

} // namespace

ConfidenceLoss depth_loss(const Image& pred, const Image& gt, const Image& confidence, double alpha_conf,
                          Reduction reduction) {
    return confidence_loss("depth_loss", pred, gt, confidence, alpha_conf, reduction,
                           [](double g) { return std::isfinite(g) && g > 0.0; });
}

ConfidenceLoss height_loss(const Image& pred, const Image& gt, const Image& confidence, double alpha_conf,
                           Reduction reduction) {
    return confidence_loss("height_loss", pred, gt, confidence, alpha_conf, reduction,
                           [](double g) { return std::isfinite(g); });
}

CameraParams CameraParams::from_camera(const PerspectiveCamera& cam) {
    CameraParams p;
    p.translation = cam.pose.translation;
    p.rotation = Eigen::Quaterniond(cam.pose.rotation).normalized();
    p.intrinsics = Eigen::Vector4d(cam.fx, cam.fy, cam.cx, cam.cy);
    return p;
}

Eigen::Matrix<double, 11, 1> CameraParams::flatten() const {
    Eigen::Quaterniond q = rotation.normalized();
    if (q.w() < 0.0) {
        q.coeffs() = -q.coeffs();
    }
    Eigen::Matrix<double, 11, 1> v;
    v << translation, q.w(), q.x(), q.y(), q.z(), intrinsics;
    return v;
}

CameraLoss camera_loss(const CameraParams& pred, const CameraParams& gt) {
    const Eigen::Matrix<double, 11, 1> diff = pred.flatten() - gt.flatten();
    CameraLoss out;
    out.value = diff.cwiseAbs().sum();
    out.grad_pred = diff.unaryExpr([](double v) { return sign(v); });
    return out;
}

PairLoss consistency_loss(const Image& pred_depth, const Image& rendered_depth, const Image& rendered_alpha,
                          Reduction reduction) {
    require_same_shape(pred_depth, rendered_depth, "consistency_loss");
    require_same_shape(pred_depth, rendered_alpha, "consistency_loss");
    PairLoss out;
    out.grad_a = Image(pred_depth.width(), pred_depth.height(), pred_depth.channels());
    out.grad_b = Image(pred_depth.width(), pred_depth.height(), pred_depth.channels());
    std::size_t valid = 0;
    for (std::size_t i = 0; i < pred_depth.size(); ++i) {
        if (!(rendered_alpha.data()[i] > 0.5) || !std::isfinite(pred_depth.data()[i])) {
            continue;
        }
        const double r = pred_depth.data()[i] - rendered_depth.data()[i];
        out.value += std::abs(r);
        out.grad_a.data()[i] = sign(r);
        out.grad_b.data()[i] = -sign(r);
        ++valid;
    }
    if (reduction == Reduction::Mean && valid > 0) {
        const double inv = 1.0 / static_cast<double>(valid);
        out.value *= inv;
        for (double& v : out.grad_a.data()) {
            v *= inv;
        }
        for (double& v : out.grad_b.data()) {
            v *= inv;
        }
    }
    return out;
}

ImageLoss mse(const Image& render, const Image& target) {
    require_same_shape(render, target, "mse");
    ImageLoss out;
    out.grad = Image(render.width(), render.height(), render.channels());
    const double n = static_cast<double>(render.size());
    for (std::size_t i = 0; i < render.size(); ++i) {
        const double d = render.data()[i] - target.data()[i];
        out.value += d * d;
        out.grad.data()[i] = 2.0 * d / n;
    }
    out.value /= n;
    return out;
}

ImageLoss ssim_perceptual(const Image& render, const Image& target) {
    auto s = metrics::ssim_with_grad(render, target);
    ImageLoss out;
    out.value = 0.5 * (1.0 - s.value);
    out.grad = std::move(s.grad_a);
    for (double& v : out.grad.data()) {
        v *= -0.5;
    }
    return out;
}

ImageLoss rgb_loss(const Image& render, const Image& target, double gamma, const PerceptualHook& hook) {
    ImageLoss out = mse(render, target);
    if (gamma != 0.0 && hook) {
        const ImageLoss p = hook(render, target);
        require_same_shape(render, p.grad, "rgb_loss perceptual gradient");
        out.value += gamma * p.value;
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            out.grad.data()[i] += gamma * p.grad.data()[i];
        }
    }
    return out;
}

MultiViewLoss sat_rgb_loss(std::span<const Image> input_renders, std::span<const Image> input_targets,
                           std::span<const Image> novel_renders, std::span<const Image> novel_targets) {
    if (input_renders.size() != input_targets.size() || novel_renders.size() != novel_targets.size()) {
        throw std::invalid_argument("sat_rgb_loss: render/target count mismatch");
    }
    MultiViewLoss out;
    for (std::size_t i = 0; i < input_renders.size(); ++i) {
        ImageLoss l = mse(input_renders[i], input_targets[i]);
        out.value += l.value;
        out.grads.push_back(std::move(l.grad));
    }
    for (std::size_t i = 0; i < novel_renders.size(); ++i) {
        ImageLoss l = mse(novel_renders[i], novel_targets[i]);
        out.value += l.value;
        out.grads.push_back(std::move(l.grad));
    }
    return out;
}

MultiViewLoss combined_rgb_loss(std::span<const Image> renders, std::span<const Image> targets) {
    return sat_rgb_loss(renders, targets, {}, {});
}

ImageLoss bev_loss(const Image& bev_render, const Image& satellite) { return mse(bev_render, satellite); }

SkyLoss sky_losses(const Image& depth, const Image& alpha, const Image& mask, double tau, Reduction reduction) {
    require_same_shape(depth, alpha, "sky_losses");
    require_same_shape(depth, mask, "sky_losses");
    SkyLoss out;
    out.grad_depth = Image(depth.width(), depth.height(), 1);
    out.grad_alpha = Image(depth.width(), depth.height(), 1);
    std::size_t sky = 0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!(mask.data()[i] > 0.5)) {
            continue;
        }
        ++sky;
        const double gap = tau - depth.data()[i];
        if (gap > 0.0) {
            out.depth_value += gap;
            out.grad_depth.data()[i] = -1.0;
        }
        const double r = 1.0 - alpha.data()[i];
        out.alpha_value += std::abs(r);
        out.grad_alpha.data()[i] = -sign(r);
    }
    if (reduction == Reduction::Mean && sky > 0) {
        const double inv = 1.0 / static_cast<double>(sky);
        out.depth_value *= inv;
        out.alpha_value *= inv;
        for (double& v : out.grad_depth.data()) {
            v *= inv;
        }
        for (double& v : out.grad_alpha.data()) {
            v *= inv;
        }
    }
    return out;
}

std::vector<PerspectiveCamera> interpolate_novel_views(std::span<const PerspectiveCamera> inputs, int count) {
    if (inputs.empty()) {
        throw std::invalid_argument("interpolate_novel_views: no input cameras");
    }
    std::size_t ia = 0;
    std::size_t ib = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = i + 1; j < inputs.size(); ++j) {
            const double d = (inputs[i].center() - inputs[j].center()).norm();
            if (d > best) {
                best = d;
                ia = i;
                ib = j;
            }
        }
    }
    std::vector<PerspectiveCamera> out;
    for (int k = 1; k <= count; ++k) {
        PerspectiveCamera cam = inputs[ia];
        cam.pose = interpolate(inputs[ia].pose, inputs[ib].pose, static_cast<double>(k) / (count + 1));
        out.push_back(cam);
    }
    return out;
}

TotalLoss total_loss(const LossTerms& t, const LossWeights& w) {
    TotalLoss out;
    const auto add = [&](const char* name, double weight, double value) {
        const double contribution = weight * value;
        out.breakdown.emplace_back(name, contribution);
        out.total += contribution;
    };
    add("cam", w.cam, t.cam);
    add("depth", w.depth, t.depth);
    add("consistency", w.consistency, t.consistency);
    add("height", w.height, t.height);
    add("rgb_ground", w.rgb_ground, t.rgb_ground);
    add("rgb_combined", w.rgb_combined, t.rgb_combined);
    add("rgb_sat", w.rgb_sat, t.rgb_sat);
    add("sky", w.sky, t.sky_depth + t.sky_alpha);
    add("bev", w.bev, t.bev);
    return out;
}

} // namespace xvs::loss
