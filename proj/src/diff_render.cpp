// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/diff_render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "xvs/metrics.hpp"
#include "xvs/parallel.hpp"

namespace xvs {

namespace {

struct SplatGrad {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
    double opacity = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double depth = 0.0;
    bool touched = false;

    SplatGrad& operator+=(const SplatGrad& o) {
        mean += o.mean;
        conic += o.conic;
        opacity += o.opacity;
        color += o.color;
        depth += o.depth;
        touched = touched || o.touched;
        return *this;
    }
};

struct PixelEntry {
    int k;
    double alpha;
    double gauss;
    bool clamped;
    double transmittance;
    Eigen::Vector2d d;
};

void check_grad_image(const Image& img, int width, int height, int channels, const char* what) {
    if (img.empty()) {
        return;
    }
    if (img.width() != width || img.height() != height || img.channels() != channels) {
        throw std::invalid_argument(std::string("render_backward: ") + what + " gradient has the wrong shape");
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                if (std::isnan(img.at(x, y, c))) {
                    throw std::invalid_argument(std::string("render_backward: NaN in ") + what + " gradient at pixel (" +
                                                std::to_string(x) + ", " + std::to_string(y) + ")");
                }
            }
        }
    }
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

// Chains 2D covariance, mean, color and depth partials of one splat back to
// the Gaussian parameters.
GaussianGrad chain_to_gaussian(const Gaussian3D& g, const Camera& cam, const PreparedSplat& ps, const SplatGrad& sg) {
    GaussianGrad out;
    const Eigen::Matrix2d& q = ps.conic;
    const Eigen::Matrix2d gcov = -q * (0.5 * (sg.conic + sg.conic.transpose())) * q;
    const Eigen::Matrix3d sigma = g.covariance();

    Eigen::Matrix<double, 2, 3> t;
    Eigen::Vector3d g_mean = Eigen::Vector3d::Zero();
    if (const auto* pc = std::get_if<PerspectiveCamera>(&cam)) {
        const Eigen::Matrix3d w = pc->pose.rotation.transpose();
        const Eigen::Vector3d p = w * (g.mean - pc->pose.translation);
        const double iz = 1.0 / p.z();
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        Eigen::Matrix<double, 2, 3> j;
        j << pc->fx * iz, 0.0, -pc->fx * p.x() * iz2, 0.0, pc->fy * iz, -pc->fy * p.y() * iz2;
        t = j * w;
        const Eigen::Matrix<double, 2, 3> gt = 2.0 * gcov * t * sigma;
        const Eigen::Matrix<double, 2, 3> gj = gt * w.transpose();

        Eigen::Vector3d gp = Eigen::Vector3d::Zero();
        gp.x() += sg.mean.x() * pc->fx * iz;
        gp.y() += sg.mean.y() * pc->fy * iz;
        gp.z() += -sg.mean.x() * pc->fx * p.x() * iz2 - sg.mean.y() * pc->fy * p.y() * iz2;
        gp.z() += sg.depth;
        gp.x() += gj(0, 2) * (-pc->fx * iz2);
        gp.y() += gj(1, 2) * (-pc->fy * iz2);
        gp.z() += gj(0, 0) * (-pc->fx * iz2) + gj(0, 2) * (2.0 * pc->fx * p.x() * iz3) + gj(1, 1) * (-pc->fy * iz2) +
                  gj(1, 2) * (2.0 * pc->fy * p.y() * iz3);
        g_mean += w.transpose() * gp;
    } else {
        const auto& oc = std::get<OrthoCamera>(cam);
        const double r = oc.resolution;
        t << r, 0.0, 0.0, 0.0, -r, 0.0;
        g_mean.x() += sg.mean.x() * r;
        g_mean.y() += -sg.mean.y() * r;
        g_mean.z() += -sg.depth;
    }

    // Color through the clamp and the SH basis.
    const Eigen::Vector3d dir = view_direction(g, cam);
    const Eigen::Vector4d basis(kShC0, -kShC1 * dir.y(), kShC1 * dir.z(), -kShC1 * dir.x());
    const Eigen::Vector3d raw = g.sh * basis;
    Eigen::Vector3d gc = sg.color;
    for (int c = 0; c < 3; ++c) {
        if (!(raw[c] + 0.5 > 0.0)) {
            gc[c] = 0.0;
        }
    }
    out.sh = gc * basis.transpose();
    if (const auto* pc = std::get_if<PerspectiveCamera>(&cam)) {
        const Eigen::Vector3d v = g.mean - pc->center();
        const double n = v.norm();
        if (n > 0.0) {
            const Eigen::Vector4d gb = g.sh.transpose() * gc;
            const Eigen::Vector3d gdir(-kShC1 * gb[3], -kShC1 * gb[1], kShC1 * gb[2]);
            g_mean += (Eigen::Matrix3d::Identity() - dir * dir.transpose()) * gdir / n;
        }
    }
    out.mean = g_mean;

    const double o = ps.opacity;
    out.opacity_logit = sg.opacity * o * (1.0 - o);

    // Sigma = M M^T with M = R S.
    const Eigen::Matrix3d gsigma = t.transpose() * gcov * t;
    const Eigen::Matrix3d rot = g.rotation_matrix();
    const Eigen::Vector3d s = g.log_scale.array().exp();
    const Eigen::Matrix3d m = rot * s.asDiagonal();
    const Eigen::Matrix3d gm = (gsigma + gsigma.transpose()) * m;
    for (int k = 0; k < 3; ++k) {
        out.log_scale[k] = gm.col(k).dot(rot.col(k)) * s[k];
    }
    const Eigen::Matrix3d gr = gm * s.asDiagonal();
    for (int k = 0; k < 3; ++k) {
        out.rotation[k] = (gr.array() * (rot * skew(Eigen::Vector3d::Unit(k))).array()).sum();
    }
    return out;
}

} // namespace

ForwardPass render_forward(const GaussianSet& gaussians, const Camera& cam, const RenderConfig& config) {
    ForwardPass fwd;
    fwd.plan = prepare_splats(gaussians, cam, config);
    fwd.output = rasterize(fwd.plan, config);
    return fwd;
}

GradientSet render_backward(const GaussianSet& gaussians, const Camera& cam, const ForwardPass& forward,
                            const RenderGrad& grad, const RenderConfig& config) {
    const RasterPlan& plan = forward.plan;
    check_grad_image(grad.color, plan.width, plan.height, 3, "color");
    check_grad_image(grad.depth, plan.width, plan.height, 1, "depth");
    check_grad_image(grad.alpha, plan.width, plan.height, 1, "alpha");

    const int workers = std::max(1, std::min(config.workers > 0 ? config.workers : worker_count(), plan.height));
    std::vector<std::vector<SplatGrad>> buffers(static_cast<std::size_t>(workers),
                                                std::vector<SplatGrad>(plan.splats.size()));

    parallel_chunks(0, plan.height, workers, [&](int worker, int row_begin, int row_end) {
        std::vector<SplatGrad>& acc = buffers[static_cast<std::size_t>(worker)];
        std::vector<PixelEntry> entries;
        for (int y = row_begin; y < row_end; ++y) {
            for (int x = 0; x < plan.width; ++x) {
                entries.clear();
                double transmittance = 1.0;
                double depth_sum = 0.0;
                for (const int k : plan.splats_for_pixel(x, y)) {
                    const PreparedSplat& s = plan.splats[static_cast<std::size_t>(k)];
                    const Eigen::Vector2d d(x - s.mean.x(), y - s.mean.y());
                    const double m = s.conic(0, 0) * d.x() * d.x() + 2.0 * s.conic(0, 1) * d.x() * d.y() +
                                     s.conic(1, 1) * d.y() * d.y();
                    const double gauss = std::exp(-0.5 * m);
                    const double raw = s.opacity * gauss;
                    const double alpha = std::min(raw, config.alpha_max);
                    if (alpha < config.alpha_min) {
                        continue;
                    }
                    entries.push_back({k, alpha, gauss, raw > config.alpha_max, transmittance, d});
                    depth_sum += alpha * transmittance * s.depth;
                    transmittance *= 1.0 - alpha;
                }
                if (entries.empty()) {
                    continue;
                }
                const Eigen::Vector3d g_color =
                    grad.color.empty() ? Eigen::Vector3d::Zero()
                                       : Eigen::Vector3d(grad.color.at(x, y, 0), grad.color.at(x, y, 1),
                                                         grad.color.at(x, y, 2));
                const double g_depth = grad.depth.empty() ? 0.0 : grad.depth.at(x, y);
                const double g_alpha = grad.alpha.empty() ? 0.0 : grad.alpha.at(x, y);
                const double acc_alpha = 1.0 - transmittance;
                const double g_depth_sum = g_depth / std::max(acc_alpha, config.depth_eps);
                double g_alpha_eff = g_alpha;
                if (acc_alpha > config.depth_eps) {
                    g_alpha_eff -= g_depth * depth_sum / (acc_alpha * acc_alpha);
                }

                Eigen::Vector3d suffix_color = config.background;
                double suffix_depth = 0.0;
                double suffix_alpha = 0.0;
                for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
                    const PreparedSplat& s = plan.splats[static_cast<std::size_t>(it->k)];
                    SplatGrad& sg = acc[static_cast<std::size_t>(it->k)];
                    const double weight = it->alpha * it->transmittance;
                    sg.touched = true;
                    sg.color += weight * g_color;
                    sg.depth += weight * g_depth_sum;
                    const double g_a = it->transmittance * (g_color.dot(s.color - suffix_color) +
                                                            g_depth_sum * (s.depth - suffix_depth) +
                                                            g_alpha_eff * (1.0 - suffix_alpha));
                    if (!it->clamped) {
                        sg.opacity += g_a * it->gauss;
                        const double g_m = -0.5 * s.opacity * it->gauss * g_a;
                        sg.conic += g_m * it->d * it->d.transpose();
                        sg.mean += -2.0 * g_m * (s.conic * it->d);
                    }
                    suffix_color = it->alpha * s.color + (1.0 - it->alpha) * suffix_color;
                    suffix_depth = it->alpha * s.depth + (1.0 - it->alpha) * suffix_depth;
                    suffix_alpha = it->alpha + (1.0 - it->alpha) * suffix_alpha;
                }
            }
        }
    });

    std::vector<SplatGrad>& total = buffers.front();
    for (std::size_t w = 1; w < buffers.size(); ++w) {
        for (std::size_t k = 0; k < total.size(); ++k) {
            total[k] += buffers[w][k];
        }
    }

    GradientSet out(gaussians.size());
    for (std::size_t k = 0; k < plan.splats.size(); ++k) {
        if (!total[k].touched) {
            continue;
        }
        const PreparedSplat& ps = plan.splats[k];
        out[static_cast<std::size_t>(ps.index)] =
            chain_to_gaussian(gaussians[static_cast<std::size_t>(ps.index)], cam, ps, total[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd flatten(const GradientSet& grads) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(grads.size()) * kParamsPerGaussian);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const GaussianGrad& g = grads[i];
        auto seg = v.segment(static_cast<Eigen::Index>(i) * kParamsPerGaussian, kParamsPerGaussian);
        seg.segment<3>(0) = g.mean;
        seg.segment<3>(3) = g.log_scale;
        seg.segment<3>(6) = g.rotation;
        seg[9] = g.opacity_logit;
        for (int c = 0; c < 3; ++c) {
            for (int b = 0; b < 4; ++b) {
                seg[10 + c * 4 + b] = g.sh(c, b);
            }
        }
    }
    return v;
}

GaussianSet perturb_parameter(const GaussianSet& gaussians, int index, double step) {
    GaussianSet out = gaussians;
    Gaussian3D& g = out.at(static_cast<std::size_t>(index / kParamsPerGaussian));
    const int p = index % kParamsPerGaussian;
    if (p < 3) {
        g.mean[p] += step;
    } else if (p < 6) {
        g.log_scale[p - 3] += step;
    } else if (p < 9) {
        g.rotation = apply_tangent(g.rotation, step * Eigen::Vector3d::Unit(p - 6));
    } else if (p == 9) {
        g.opacity_logit += step;
    } else {
        g.sh((p - 10) / 4, (p - 10) % 4) += step;
    }
    return out;
}

Eigen::VectorXd finite_difference_gradient(const GaussianSet& gaussians,
                                           const std::function<double(const GaussianSet&)>& loss, double h) {
    const int n = static_cast<int>(gaussians.size()) * kParamsPerGaussian;
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) {
        g[i] = (loss(perturb_parameter(gaussians, i, h)) - loss(perturb_parameter(gaussians, i, -h))) / (2.0 * h);
    }
    return g;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("max_relative_error: size mismatch");
    }
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double den = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / den);
    }
    return worst;
}

// ---------------------------------------------------------------------------

ViewLoss view_loss(const RenderOutput& render, const FitTarget& target, const loss::LossWeights& weights) {
    ViewLoss out;
    const bool perceptual =
        target.image.width() >= metrics::kSsimWindow && target.image.height() >= metrics::kSsimWindow;
    const loss::ImageLoss rgb = loss::rgb_loss(render.color, target.image, perceptual ? weights.perceptual : 0.0,
                                               perceptual ? loss::PerceptualHook(loss::ssim_perceptual)
                                                          : loss::PerceptualHook());
    out.value = weights.rgb_ground * rgb.value;
    out.grad.color = rgb.grad;
    for (double& v : out.grad.color.data()) {
        v *= weights.rgb_ground;
    }
    out.grad.depth = Image(render.depth.width(), render.depth.height(), 1);
    out.grad.alpha = Image(render.alpha.width(), render.alpha.height(), 1);
    if (target.depth) {
        const loss::ConfidenceLoss d =
            loss::depth_loss(render.depth, *target.depth, Image(), weights.alpha_conf, loss::Reduction::Mean);
        out.value += weights.depth * d.value;
        for (std::size_t i = 0; i < out.grad.depth.size(); ++i) {
            out.grad.depth.data()[i] += weights.depth * d.grad_pred.data()[i];
        }
    }
    if (target.sky_mask) {
        const loss::SkyLoss s =
            loss::sky_losses(render.depth, render.alpha, *target.sky_mask, weights.sky_tau, loss::Reduction::Mean);
        out.value += weights.sky * (s.depth_value + s.alpha_value);
        for (std::size_t i = 0; i < out.grad.depth.size(); ++i) {
            out.grad.depth.data()[i] += weights.sky * s.grad_depth.data()[i];
            out.grad.alpha.data()[i] += weights.sky * s.grad_alpha.data()[i];
        }
    }
    return out;
}

FitResult fit_scene(const std::vector<FitTarget>& targets, const GaussianSet& init, const FitConfig& config) {
    if (targets.empty()) {
        throw std::invalid_argument("fit_scene: at least one target is required");
    }
    if (config.steps < 0) {
        throw std::invalid_argument("fit_scene: steps must be non-negative");
    }
    const LearningRates& lr = config.lr;
    if (lr.mean < 0 || lr.sh < 0 || lr.opacity < 0 || lr.scale < 0 || lr.rotation < 0) {
        throw std::invalid_argument("fit_scene: learning rates must be non-negative");
    }
    for (const FitTarget& t : targets) {
        if (t.image.width() != camera_width(t.camera) || t.image.height() != camera_height(t.camera) ||
            t.image.channels() != 3) {
            throw std::invalid_argument("fit_scene: target image does not match its camera");
        }
    }

    FitResult result;
    result.gaussians = init;
    const Eigen::Index n = static_cast<Eigen::Index>(init.size()) * kParamsPerGaussian;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rates(kParamsPerGaussian);
    rates << Eigen::Vector3d::Constant(lr.mean), Eigen::Vector3d::Constant(lr.scale),
        Eigen::Vector3d::Constant(lr.rotation), lr.opacity, Eigen::VectorXd::Constant(12, lr.sh);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(targets.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t per_step = config.views_per_step > 0
                                     ? std::min<std::size_t>(static_cast<std::size_t>(config.views_per_step), order.size())
                                     : order.size();

    for (int step = 0; step < config.steps; ++step) {
        if (per_step < order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        double value = 0.0;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
        for (std::size_t v = 0; v < per_step; ++v) {
            const FitTarget& target = targets[order[v]];
            const ForwardPass fwd = render_forward(result.gaussians, target.camera, config.render);
            const ViewLoss vl = view_loss(fwd.output, target, config.weights);
            value += vl.value;
            grad += flatten(render_backward(result.gaussians, target.camera, fwd, vl.grad, config.render));
        }
        result.loss_trace.push_back(value);
        if (!std::isfinite(value) || value > config.divergence_threshold) {
            throw FitDivergedError("fit_scene: loss diverged at step " + std::to_string(step), result.loss_trace);
        }

        const double t = step + 1;
        const double c1 = 1.0 - std::pow(config.beta1, t);
        const double c2 = 1.0 - std::pow(config.beta2, t);
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseAbs2();
        for (std::size_t i = 0; i < result.gaussians.size(); ++i) {
            Gaussian3D& g = result.gaussians[i];
            const Eigen::Index base = static_cast<Eigen::Index>(i) * kParamsPerGaussian;
            Eigen::VectorXd delta(kParamsPerGaussian);
            for (int p = 0; p < kParamsPerGaussian; ++p) {
                const double mh = m1[base + p] / c1;
                const double vh = m2[base + p] / c2;
                delta[p] = -rates[p] * mh / (std::sqrt(vh) + config.epsilon);
            }
            g.mean += delta.segment<3>(0);
            g.log_scale += delta.segment<3>(3);
            g.rotation = apply_tangent(g.rotation, delta.segment<3>(6));
            g.opacity_logit += delta[9];
            for (int c = 0; c < 3; ++c) {
                for (int b = 0; b < 4; ++b) {
                    g.sh(c, b) += delta[10 + c * 4 + b];
                }
            }
        }
    }
    return result;
}

} // namespace xvs
