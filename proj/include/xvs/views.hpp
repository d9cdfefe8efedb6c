// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "xvs/diff_render.hpp"
#include "xvs/splat.hpp"

namespace xvs {

/// One camera of a scene description. Image paths are resolved relative to
/// the description file.
struct ViewSpec {
    std::string name;
    Camera camera;
    std::filesystem::path image;
    std::filesystem::path sky_mask;
    std::filesystem::path depth;
};

struct SceneDescription {
    std::vector<ViewSpec> views;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

/// Perspective: {"model": "perspective", fx, fy, cx, cy, width, height,
/// "rotation": 3x3 rows or "quaternion": [w, x, y, z], "translation": [x, y, z]}
/// (camera-to-world). Orthographic: {"model": "orthographic", resolution,
/// width, height, "center_offset": [u, v]} (defaults to the image center).
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

/// {"background": [r, g, b], "views": [{"name", "camera", "image", "sky_mask", "depth"}]}.
SceneDescription load_scene_description(const std::filesystem::path& path);
void save_scene_description(const SceneDescription& scene, const std::filesystem::path& path);

/// Fit targets for every view that names an image.
std::vector<FitTarget> load_fit_targets(const SceneDescription& scene);

} // namespace xvs
