// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/views.hpp"

#include <fstream>
#include <stdexcept>

#include <Eigen/Geometry>

#include "xvs/image.hpp"

namespace xvs {

namespace {

using nlohmann::json;

Eigen::Vector3d vec3(const json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3) {
        throw std::invalid_argument(std::string("scene description: '") + key + "' must have 3 entries");
    }
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Eigen::Matrix3d rotation_from_json(const json& j) {
    if (j.contains("quaternion")) {
        const auto& q = j.at("quaternion");
        if (!q.is_array() || q.size() != 4) {
            throw std::invalid_argument("scene description: 'quaternion' must be [w, x, y, z]");
        }
        Eigen::Quaterniond quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
        if (!(quat.norm() > 0.0)) {
            throw std::invalid_argument("scene description: zero quaternion");
        }
        return quat.normalized().toRotationMatrix();
    }
    if (!j.contains("rotation")) {
        return Eigen::Matrix3d::Identity();
    }
    const auto& r = j.at("rotation");
    if (!r.is_array() || r.size() != 3) {
        throw std::invalid_argument("scene description: 'rotation' must be 3 rows of 3");
    }
    Eigen::Matrix3d m;
    for (int row = 0; row < 3; ++row) {
        if (!r[row].is_array() || r[row].size() != 3) {
            throw std::invalid_argument("scene description: 'rotation' must be 3 rows of 3");
        }
        for (int col = 0; col < 3; ++col) {
            m(row, col) = r[row][col].get<double>();
        }
    }
    if ((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 || m.determinant() < 0.0) {
        throw std::invalid_argument("scene description: 'rotation' is not a rotation matrix");
    }
    return m;
}

std::filesystem::path resolve(const std::filesystem::path& base, const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return {};
    }
    const std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

} // namespace

json camera_to_json(const Camera& cam) {
    if (const auto* p = std::get_if<PerspectiveCamera>(&cam)) {
        json rot = json::array();
        for (int r = 0; r < 3; ++r) {
            rot.push_back({p->pose.rotation(r, 0), p->pose.rotation(r, 1), p->pose.rotation(r, 2)});
        }
        const Eigen::Vector3d& t = p->pose.translation;
        return {{"model", "perspective"}, {"fx", p->fx},         {"fy", p->fy},
                {"cx", p->cx},            {"cy", p->cy},         {"width", p->width},
                {"height", p->height},    {"rotation", rot},     {"translation", {t.x(), t.y(), t.z()}}};
    }
    const auto& o = std::get<OrthoCamera>(cam);
    return {{"model", "orthographic"},
            {"resolution", o.resolution},
            {"width", o.width},
            {"height", o.height},
            {"center_offset", {o.center_offset.x(), o.center_offset.y()}}};
}

Camera camera_from_json(const json& j) {
    try {
        const std::string model = j.value("model", "perspective");
        const int width = j.at("width").get<int>();
        const int height = j.at("height").get<int>();
        if (width <= 0 || height <= 0) {
            throw std::invalid_argument("scene description: camera size must be positive");
        }
        if (model == "perspective") {
            PerspectiveCamera c;
            c.fx = j.at("fx").get<double>();
            c.fy = j.at("fy").get<double>();
            c.cx = j.value("cx", width / 2.0);
            c.cy = j.value("cy", height / 2.0);
            c.width = width;
            c.height = height;
            c.pose.rotation = rotation_from_json(j);
            c.pose.translation = j.contains("translation") ? vec3(j, "translation") : Eigen::Vector3d::Zero();
            if (!(c.fx > 0.0) || !(c.fy > 0.0)) {
                throw std::invalid_argument("scene description: focal lengths must be positive");
            }
            return c;
        }
        if (model == "orthographic") {
            OrthoCamera c = OrthoCamera::centered(j.at("resolution").get<double>(), width, height);
            if (j.contains("center_offset")) {
                const auto& a = j.at("center_offset");
                c.center_offset = Eigen::Vector2d(a.at(0).get<double>(), a.at(1).get<double>());
            }
            if (!(c.resolution > 0.0)) {
                throw std::invalid_argument("scene description: resolution must be positive");
            }
            return c;
        }
        throw std::invalid_argument("scene description: unknown camera model '" + model + "'");
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("scene description: ") + e.what());
    }
}

SceneDescription load_scene_description(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open scene description " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    SceneDescription scene;
    try {
        if (j.contains("background")) {
            scene.background = vec3(j, "background");
        }
        for (const auto& v : j.at("views")) {
            ViewSpec spec;
            spec.name = v.value("name", "view_" + std::to_string(scene.views.size()));
            spec.camera = camera_from_json(v.at("camera"));
            spec.image = resolve(base, v, "image");
            spec.sky_mask = resolve(base, v, "sky_mask");
            spec.depth = resolve(base, v, "depth");
            scene.views.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return scene;
}

void save_scene_description(const SceneDescription& scene, const std::filesystem::path& path) {
    json views = json::array();
    for (const auto& v : scene.views) {
        json e{{"name", v.name}, {"camera", camera_to_json(v.camera)}};
        for (const auto& [key, p] : {std::pair{"image", v.image}, {"sky_mask", v.sky_mask}, {"depth", v.depth}}) {
            if (!p.empty()) {
                e[key] = p.string();
            }
        }
        views.push_back(std::move(e));
    }
    const Eigen::Vector3d& b = scene.background;
    write_file_atomic(path, json{{"background", {b.x(), b.y(), b.z()}}, {"views", views}}.dump(2) + "\n");
}

std::vector<FitTarget> load_fit_targets(const SceneDescription& scene) {
    std::vector<FitTarget> targets;
    for (const auto& v : scene.views) {
        if (v.image.empty()) {
            continue;
        }
        FitTarget t;
        t.camera = v.camera;
        t.image = read_image(v.image);
        if (t.image.width() != camera_width(v.camera) || t.image.height() != camera_height(v.camera)) {
            throw std::invalid_argument("view " + v.name + ": image size does not match the camera");
        }
        if (!v.sky_mask.empty()) {
            t.sky_mask = to_grayscale(read_image(v.sky_mask));
        }
        if (!v.depth.empty()) {
            t.depth = read_npy(v.depth);
        }
        targets.push_back(std::move(t));
    }
    return targets;
}

} // namespace xvs
