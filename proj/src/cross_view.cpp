// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/cross_view.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "xvs/json_io.hpp"

namespace xvs {

GaussianSet heightmap_to_gaussians(const HeightMap& hm, const Image& colors, const SplatDefaults& defaults) {
    const Image& h = hm.heights;
    if (h.empty() || h.channels() != 1) {
        throw std::invalid_argument("heightmap_to_gaussians: heights must be a non-empty single-channel grid");
    }
    if (colors.width() != h.width() || colors.height() != h.height() || colors.channels() != 3) {
        throw std::invalid_argument("heightmap_to_gaussians: color mosaic and height map dimensions differ");
    }
    if (!(hm.resolution > 0.0)) {
        throw std::invalid_argument("heightmap_to_gaussians: resolution must be positive");
    }
    const int w = h.width();
    const int hh = h.height();
    const double r = hm.resolution;
    const double cx = w / 2;
    const double cy = hh / 2;
    const double log_sigma = std::log(defaults.scale_factor / r);
    const double opacity_logit = logit(defaults.opacity);
    GaussianSet out;
    out.reserve(h.pixel_count());
    for (int v = 0; v < hh; ++v) {
        for (int u = 0; u < w; ++u) {
            const double height = h.at(u, v);
            if (!std::isfinite(height)) {
                throw std::invalid_argument("heightmap_to_gaussians: non-finite height");
            }
            Gaussian3D g;
            g.mean = Eigen::Vector3d((u - cx) / r, -(v - cy) / r, height);
            g.log_scale.setConstant(log_sigma);
            g.opacity_logit = opacity_logit;
            for (int c = 0; c < 3; ++c) {
                g.sh(c, 0) = rgb_to_sh0(colors.at(u, v, c));
            }
            out.push_back(g);
        }
    }
    return out;
}

Image gaussians_to_heights(const GaussianSet& gaussians, int width, int height) {
    if (gaussians.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("gaussians_to_heights: Gaussian count does not match the grid");
    }
    Image out(width, height, 1);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        out.data()[i] = gaussians[i].mean.z();
    }
    return out;
}

std::vector<Eigen::Vector3d> backproject(const DepthView& view) {
    const PerspectiveCamera& cam = view.camera;
    std::vector<Eigen::Vector3d> pts;
    for (int v = 0; v < view.depth.height(); ++v) {
        for (int u = 0; u < view.depth.width(); ++u) {
            const double d = view.depth.at(u, v);
            if (!std::isfinite(d) || !(d > 0.0)) {
                continue;
            }
            const Eigen::Vector3d pc(d * (u - cam.cx) / cam.fx, d * (v - cam.cy) / cam.fy, d);
            pts.push_back(cam.pose.apply(pc));
        }
    }
    return pts;
}

SceneScale compute_scene_scale(std::span<const DepthView> views) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const DepthView& view : views) {
        for (const Eigen::Vector3d& p : backproject(view)) {
            sum += p.norm();
            ++count;
        }
    }
    if (count == 0) {
        throw std::invalid_argument("compute_scene_scale: no valid depth pixels");
    }
    const double s = sum / static_cast<double>(count);
    if (!(s > 0.0)) {
        throw std::invalid_argument("compute_scene_scale: all points at the origin");
    }
    return {s};
}

NormalizedScene normalize_scene(const SceneScale& scale, std::span<const DepthView> views, const HeightMap& heightmap) {
    if (!(scale.s > 0.0)) {
        throw std::invalid_argument("normalize_scene: scale must be positive");
    }
    const double inv = 1.0 / scale.s;
    NormalizedScene out;
    for (const DepthView& view : views) {
        DepthView nv = view;
        nv.camera.pose.translation *= inv;
        for (double& d : nv.depth.data()) {
            d *= inv;
        }
        out.views.push_back(std::move(nv));
    }
    out.heightmap = heightmap;
    for (double& h : out.heightmap.heights.data()) {
        h *= inv;
    }
    out.heightmap.resolution = heightmap.resolution * scale.s;
    return out;
}

GaussianSet normalize_gaussians(const SceneScale& scale, const GaussianSet& gaussians) {
    if (!(scale.s > 0.0)) {
        throw std::invalid_argument("normalize_gaussians: scale must be positive");
    }
    const double log_s = std::log(scale.s);
    GaussianSet out = gaussians;
    for (Gaussian3D& g : out) {
        g.mean /= scale.s;
        g.log_scale.array() -= log_s;
    }
    return out;
}

RenderOutput render_combined_exact(const GaussianSet& ground, const GaussianSet& sat, const Camera& cam,
                                   const RenderConfig& config) {
    GaussianSet all;
    all.reserve(ground.size() + sat.size());
    all.insert(all.end(), ground.begin(), ground.end());
    all.insert(all.end(), sat.begin(), sat.end());
    return render(all, cam, config);
}

RenderOutput render_combined_two_pass(const GaussianSet& ground, const GaussianSet& sat, const Camera& cam,
                                      const RenderConfig& config) {
    RenderConfig black = config;
    black.background.setZero();
    const RenderOutput g = render(ground, cam, black);
    const RenderOutput s = render(sat, cam, black);
    RenderOutput out;
    out.color = Image(g.color.width(), g.color.height(), 3);
    out.depth = Image(g.depth.width(), g.depth.height(), 1);
    out.alpha = Image(g.alpha.width(), g.alpha.height(), 1);
    out.diagnostics.culled = g.diagnostics.culled + s.diagnostics.culled;
    out.diagnostics.degenerate = g.diagnostics.degenerate + s.diagnostics.degenerate;
    out.diagnostics.rasterized = g.diagnostics.rasterized + s.diagnostics.rasterized;
    for (int y = 0; y < out.color.height(); ++y) {
        for (int x = 0; x < out.color.width(); ++x) {
            const double ag = g.alpha.at(x, y);
            const double as = s.alpha.at(x, y);
            const double tg = 1.0 - ag;
            const double t = tg * (1.0 - as);
            for (int c = 0; c < 3; ++c) {
                out.color.at(x, y, c) = g.color.at(x, y, c) + tg * s.color.at(x, y, c) + t * config.background[c];
            }
            const double alpha = 1.0 - t;
            out.alpha.at(x, y) = alpha;
            const double depth_sum = ag * g.depth.at(x, y) + tg * as * s.depth.at(x, y);
            out.depth.at(x, y) = depth_sum / std::max(alpha, config.depth_eps);
        }
    }
    return out;
}

RenderOutput render_bev_combined(const GaussianSet& ground, const GaussianSet& sat, const OrthoCamera& cam,
                                 const RenderConfig& config) {
    return render_combined_exact(ground, sat, cam, config);
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& npy) {
    std::filesystem::path p = npy;
    return p.replace_extension(".json");
}

std::filesystem::path confidence_path(const std::filesystem::path& npy) {
    std::filesystem::path p = npy;
    return p.replace_extension(".confidence.npy");
}

} // namespace

void write_heightmap(const std::filesystem::path& npy_path, const HeightMapFile& file) {
    const HeightMap& hm = file.heightmap;
    write_npy(hm.heights, npy_path);
    nlohmann::json j;
    j["resolution_ppm"] = hm.resolution;
    j["extent_m"] = hm.heights.width() / hm.resolution;
    j["center"] = file.center;
    j["width"] = hm.heights.width();
    j["height"] = hm.heights.height();
    if (!hm.confidence.empty()) {
        write_npy(hm.confidence, confidence_path(npy_path));
        j["confidence"] = confidence_path(npy_path).filename().string();
    }
    write_file_atomic(sidecar_path(npy_path), j.dump(2) + "\n");
}

HeightMapFile read_heightmap(const std::filesystem::path& npy_path) {
    HeightMapFile file;
    file.heightmap.heights = read_npy(npy_path);
    const auto side = sidecar_path(npy_path);
    std::ifstream in(side);
    if (!in) {
        throw FormatError("read_heightmap: missing sidecar " + side.string());
    }
    nlohmann::json j;
    try {
        in >> j;
        file.heightmap.resolution = j.at("resolution_ppm").get<double>();
        file.center = j.at("center").get<geo::GeoPose>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_heightmap: bad sidecar " + side.string() + ": " + e.what());
    }
    if (j.contains("confidence")) {
        file.heightmap.confidence = read_npy(npy_path.parent_path() / j["confidence"].get<std::string>());
    }
    return file;
}

} // namespace xvs
