// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "xvs/geodesy.hpp"
#include "xvs/image.hpp"
#include "xvs/splat.hpp"

namespace xvs {

/// Per-pixel heights relative to the zero-altitude plane.
struct HeightMap {
    Image heights;      ///< H x W
    Image confidence;   ///< optional H x W, empty when absent
    double resolution = 2.0; ///< pixels per world unit
};

struct SplatDefaults {
    double scale_factor = 0.7; ///< isotropic sigma in mosaic pixels
    double opacity = 0.9;
};

/// One Gaussian per pixel (row-major order). Pixel (u, v) maps to
/// ((u - W/2) / r, -(v - H/2) / r, h(u, v)); the degree-0 SH reproduces the
/// pixel color and the degree-1 terms are zero.
GaussianSet heightmap_to_gaussians(const HeightMap& hm, const Image& colors, const SplatDefaults& defaults = {});

/// Heights read back from the means produced by heightmap_to_gaussians.
Image gaussians_to_heights(const GaussianSet& gaussians, int width, int height);

struct DepthView {
    PerspectiveCamera camera;
    Image depth; ///< camera-frame z per pixel; non-finite or <= 0 is invalid
};

struct SceneScale {
    double s = 1.0;
};

/// World points for every valid depth pixel, p = T (d K^-1 (u, v, 1)).
std::vector<Eigen::Vector3d> backproject(const DepthView& view);

/// Mean L2 norm of all backprojected points. Throws if no pixel is valid.
SceneScale compute_scene_scale(std::span<const DepthView> views);

struct NormalizedScene {
    std::vector<DepthView> views;
    HeightMap heightmap;
};

/// Divides translations, depths and heights by s and multiplies the height
/// map resolution by s.
NormalizedScene normalize_scene(const SceneScale& scale, std::span<const DepthView> views, const HeightMap& heightmap);

/// Divides means by s and shifts log scales by -log s.
GaussianSet normalize_gaussians(const SceneScale& scale, const GaussianSet& gaussians);

/// Render of the concatenated set with one global depth sort.
RenderOutput render_combined_exact(const GaussianSet& ground, const GaussianSet& sat, const Camera& cam,
                                   const RenderConfig& config = {});

/// Ground render composited over the satellite render:
/// C = C_g + (1 - a_g) C_s + (1 - a_g)(1 - a_s) background.
RenderOutput render_combined_two_pass(const GaussianSet& ground, const GaussianSet& sat, const Camera& cam,
                                      const RenderConfig& config = {});

RenderOutput render_bev_combined(const GaussianSet& ground, const GaussianSet& sat, const OrthoCamera& cam,
                                 const RenderConfig& config = {});

/// Height map stored as `.npy` heights plus a JSON sidecar
/// `<stem>.json` = {"resolution_ppm", "extent_m", "center": {"lat", "lon", "heading"}}.
/// A confidence map, when present, is written to `<stem>.confidence.npy`.
struct HeightMapFile {
    HeightMap heightmap;
    geo::GeoPose center;
};

void write_heightmap(const std::filesystem::path& npy_path, const HeightMapFile& file);
HeightMapFile read_heightmap(const std::filesystem::path& npy_path);

} // namespace xvs
