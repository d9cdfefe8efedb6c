// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/scene_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "xvs/parallel.hpp"

namespace xvs::scene {

ParseError::ParseError(std::filesystem::path file, int line, const std::string& msg)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + msg), file_(std::move(file)), line_(line) {}

namespace {

struct Line {
    int number;
    std::string text;
};

std::vector<Line> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<Line> lines;
    std::string text;
    int n = 0;
    while (std::getline(in, text)) {
        ++n;
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        lines.push_back({n, text});
    }
    return lines;
}

bool is_comment_or_blank(const std::string& s) {
    const auto pos = s.find_first_not_of(" \t");
    return pos == std::string::npos || s[pos] == '#';
}

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string t;
    while (in >> t) {
        out.push_back(t);
    }
    return out;
}

class Reader {
  public:
    Reader(const std::filesystem::path& file, int line) : file_(file), line_(line) {}

    template <typename T>
    T integer(const std::string& tok, const char* what) const {
        T v{};
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            fail(std::string("invalid ") + what + " '" + tok + "'");
        }
        return v;
    }

    double real(const std::string& tok, const char* what) const {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v)) {
            fail(std::string("invalid ") + what + " '" + tok + "'");
        }
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(file_, line_, msg); }

  private:
    const std::filesystem::path& file_;
    int line_;
};

int param_count(const std::string& model) {
    static const std::map<std::string, int> counts = {
        {"SIMPLE_PINHOLE", 3}, {"PINHOLE", 4}, {"SIMPLE_RADIAL", 4}, {"RADIAL", 5}, {"OPENCV", 8}, {"FULL_OPENCV", 12},
        {"SIMPLE_RADIAL_FISHEYE", 4}, {"RADIAL_FISHEYE", 5}, {"OPENCV_FISHEYE", 8}};
    const auto it = counts.find(model);
    return it == counts.end() ? -1 : it->second;
}

void parse_cameras(const std::filesystem::path& path, SparseScene& scene) {
    for (const Line& line : read_lines(path)) {
        if (is_comment_or_blank(line.text)) {
            continue;
        }
        const Reader r(path, line.number);
        const auto t = tokens(line.text);
        if (t.size() < 4) {
            r.fail("camera line needs CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]");
        }
        SparseCamera cam;
        cam.id = r.integer<int>(t[0], "camera id");
        cam.model = t[1];
        const int expected = param_count(cam.model);
        if (expected < 0) {
            r.fail("unsupported camera model " + cam.model);
        }
        cam.width = r.integer<int>(t[2], "width");
        cam.height = r.integer<int>(t[3], "height");
        if (cam.width <= 0 || cam.height <= 0) {
            r.fail("camera size must be positive");
        }
        if (static_cast<int>(t.size()) - 4 != expected) {
            r.fail(cam.model + " expects " + std::to_string(expected) + " parameters");
        }
        for (std::size_t i = 4; i < t.size(); ++i) {
            cam.params.push_back(r.real(t[i], "camera parameter"));
        }
        if (!scene.cameras.emplace(cam.id, cam).second) {
            r.fail("duplicate camera id " + t[0]);
        }
    }
}

void parse_images(const std::filesystem::path& path, SparseScene& scene) {
    const auto lines = read_lines(path);
    std::size_t i = 0;
    while (i < lines.size()) {
        const Line& header = lines[i++];
        if (is_comment_or_blank(header.text)) {
            continue;
        }
        const Reader r(path, header.number);
        const auto t = tokens(header.text);
        if (t.size() != 10) {
            r.fail("image line needs IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME");
        }
        SparseImage img;
        img.id = r.integer<int>(t[0], "image id");
        img.q_world_to_camera = Eigen::Quaterniond(r.real(t[1], "qw"), r.real(t[2], "qx"), r.real(t[3], "qy"),
                                                   r.real(t[4], "qz"));
        const double qn = img.q_world_to_camera.norm();
        if (std::abs(qn - 1.0) > 1e-3) {
            r.fail("quaternion is not unit length");
        }
        img.q_world_to_camera.normalize();
        img.t_world_to_camera = Eigen::Vector3d(r.real(t[5], "tx"), r.real(t[6], "ty"), r.real(t[7], "tz"));
        img.camera_id = r.integer<int>(t[8], "camera id");
        img.name = t[9];
        if (i < lines.size()) {
            const Line& pts = lines[i++];
            const Reader rp(path, pts.number);
            const auto p = tokens(pts.text);
            if (p.size() % 3 != 0) {
                rp.fail("POINTS2D line needs (X, Y, POINT3D_ID) triples");
            }
            for (std::size_t k = 0; k < p.size(); k += 3) {
                Observation o;
                o.xy = Eigen::Vector2d(rp.real(p[k], "x"), rp.real(p[k + 1], "y"));
                o.point3d_id = rp.integer<std::int64_t>(p[k + 2], "point3D id");
                if (o.point3d_id < -1) {
                    rp.fail("point3D id must be >= -1");
                }
                img.observations.push_back(o);
            }
        }
        if (!scene.images.emplace(img.id, img).second) {
            r.fail("duplicate image id " + t[0]);
        }
    }
}

void parse_points(const std::filesystem::path& path, SparseScene& scene) {
    for (const Line& line : read_lines(path)) {
        if (is_comment_or_blank(line.text)) {
            continue;
        }
        const Reader r(path, line.number);
        const auto t = tokens(line.text);
        if (t.size() < 8 || (t.size() - 8) % 2 != 0) {
            r.fail("point line needs POINT3D_ID X Y Z R G B ERROR TRACK[] pairs");
        }
        SparsePoint p;
        p.id = r.integer<std::int64_t>(t[0], "point3D id");
        p.xyz = Eigen::Vector3d(r.real(t[1], "x"), r.real(t[2], "y"), r.real(t[3], "z"));
        for (int c = 0; c < 3; ++c) {
            p.rgb[c] = r.integer<int>(t[4 + c], "color");
            if (p.rgb[c] < 0 || p.rgb[c] > 255) {
                r.fail("color out of range");
            }
        }
        p.error = r.real(t[7], "error");
        for (std::size_t k = 8; k < t.size(); k += 2) {
            p.track.push_back({r.integer<int>(t[k], "track image id"), r.integer<int>(t[k + 1], "track point2D index")});
        }
        if (!scene.points.emplace(p.id, p).second) {
            r.fail("duplicate point3D id " + t[0]);
        }
    }
}

} // namespace

Eigen::Vector4d SparseCamera::pinhole() const {
    if (model == "PINHOLE" || model == "OPENCV" || model == "FULL_OPENCV" || model == "OPENCV_FISHEYE") {
        return {params[0], params[1], params[2], params[3]};
    }
    return {params[0], params[0], params[1], params[2]};
}

Rigid3 SparseImage::camera_to_world() const {
    Rigid3 w2c;
    w2c.rotation = q_world_to_camera.normalized().toRotationMatrix();
    w2c.translation = t_world_to_camera;
    return w2c.inverse();
}

std::vector<int> SparseScene::ordered_image_ids() const {
    std::vector<int> ids;
    for (const auto& [id, img] : images) {
        ids.push_back(id);
    }
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return images.at(a).name < images.at(b).name; });
    return ids;
}

PerspectiveCamera SparseScene::perspective_camera(int image_id) const {
    const SparseImage& img = images.at(image_id);
    const SparseCamera& cam = cameras.at(img.camera_id);
    const Eigen::Vector4d k = cam.pinhole();
    PerspectiveCamera pc;
    pc.fx = k[0];
    pc.fy = k[1];
    pc.cx = k[2] - 0.5;
    pc.cy = k[3] - 0.5;
    pc.width = cam.width;
    pc.height = cam.height;
    pc.pose = img.camera_to_world();
    return pc;
}

std::set<std::int64_t> SparseScene::visible_points(int image_id) const {
    std::set<std::int64_t> out;
    for (const Observation& o : images.at(image_id).observations) {
        if (o.point3d_id < 0) {
            continue;
        }
        const auto it = points.find(o.point3d_id);
        if (it != points.end() && it->second.track.size() >= 2) {
            out.insert(o.point3d_id);
        }
    }
    return out;
}

void validate(const SparseScene& scene) {
    for (const auto& [id, img] : scene.images) {
        if (!scene.cameras.contains(img.camera_id)) {
            throw ValidationError("image " + std::to_string(id) + " references missing camera " +
                                  std::to_string(img.camera_id));
        }
        for (const Observation& o : img.observations) {
            if (o.point3d_id >= 0 && !scene.points.contains(o.point3d_id)) {
                throw ValidationError("image " + std::to_string(id) + " references missing point3D " +
                                      std::to_string(o.point3d_id));
            }
        }
    }
    for (const auto& [id, p] : scene.points) {
        for (const TrackElement& t : p.track) {
            const auto it = scene.images.find(t.image_id);
            if (it == scene.images.end()) {
                throw ValidationError("point3D " + std::to_string(id) + " track references missing image " +
                                      std::to_string(t.image_id));
            }
            if (t.point2d_index < 0 || t.point2d_index >= static_cast<int>(it->second.observations.size())) {
                throw ValidationError("point3D " + std::to_string(id) + " track references missing point2D " +
                                      std::to_string(t.point2d_index) + " of image " + std::to_string(t.image_id));
            }
        }
    }
}

SparseScene parse_sparse(const std::filesystem::path& dir) {
    SparseScene scene;
    parse_cameras(dir / "cameras.txt", scene);
    parse_images(dir / "images.txt", scene);
    parse_points(dir / "points3D.txt", scene);
    validate(scene);
    return scene;
}

void write_sparse(const SparseScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto fmt = [](std::ostream& os) -> std::ostream& { return os << std::setprecision(17); };
    {
        std::ostringstream os;
        fmt(os) << "# Camera list with one line of data per camera:\n";
        os << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
        for (const auto& [id, c] : scene.cameras) {
            os << id << ' ' << c.model << ' ' << c.width << ' ' << c.height;
            for (double p : c.params) {
                os << ' ' << p;
            }
            os << '\n';
        }
        write_file_atomic(dir / "cameras.txt", os.str());
    }
    {
        std::ostringstream os;
        fmt(os) << "# Image list with two lines of data per image:\n";
        os << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
        os << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
        for (const auto& [id, img] : scene.images) {
            const auto& q = img.q_world_to_camera;
            const auto& t = img.t_world_to_camera;
            os << id << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << t.x() << ' ' << t.y()
               << ' ' << t.z() << ' ' << img.camera_id << ' ' << img.name << '\n';
            for (std::size_t k = 0; k < img.observations.size(); ++k) {
                const Observation& o = img.observations[k];
                os << (k ? " " : "") << o.xy.x() << ' ' << o.xy.y() << ' ' << o.point3d_id;
            }
            os << '\n';
        }
        write_file_atomic(dir / "images.txt", os.str());
    }
    {
        std::ostringstream os;
        fmt(os) << "# 3D point list with one line of data per point:\n";
        os << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
        for (const auto& [id, p] : scene.points) {
            os << id << ' ' << p.xyz.x() << ' ' << p.xyz.y() << ' ' << p.xyz.z() << ' ' << p.rgb.x() << ' '
               << p.rgb.y() << ' ' << p.rgb.z() << ' ' << p.error;
            for (const TrackElement& t : p.track) {
                os << ' ' << t.image_id << ' ' << t.point2d_index;
            }
            os << '\n';
        }
        write_file_atomic(dir / "points3D.txt", os.str());
    }
}

namespace {

double iou_of(const std::set<std::int64_t>& a, const std::set<std::int64_t>& b) {
    if (a.empty() || b.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    for (const auto id : a) {
        inter += b.count(id);
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

} // namespace

double pair_iou(const SparseScene& scene, int image_a, int image_b) {
    if (!scene.images.contains(image_a) || !scene.images.contains(image_b)) {
        throw std::out_of_range("pair_iou: unknown image id");
    }
    const auto a = scene.visible_points(image_a);
    const auto b = scene.visible_points(image_b);
    if (a.empty() || b.empty()) {
        std::clog << "warning: pair_iou: image " << (a.empty() ? image_a : image_b) << " has no tracked points\n";
    }
    return iou_of(a, b);
}

Eigen::MatrixXd iou_matrix(const SparseScene& scene, int workers) {
    const std::vector<int> ids = scene.ordered_image_ids();
    const int n = static_cast<int>(ids.size());
    std::vector<std::set<std::int64_t>> vis;
    for (int id : ids) {
        vis.push_back(scene.visible_points(id));
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    parallel_chunks(0, n, workers > 0 ? workers : worker_count(), [&](int, int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            for (int j = 0; j < n; ++j) {
                m(i, j) = iou_of(vis[static_cast<std::size_t>(i)], vis[static_cast<std::size_t>(j)]);
            }
        }
    });
    return m;
}

SplitConfig SplitConfig::dl3dv(int n_context) { return {n_context, 0.15, {0.02, 0.05, 0.07, 0.1}, false}; }

SplitConfig SplitConfig::tanks_and_temples(int n_context) {
    return {n_context, 0.25, {0.03, 0.07, 0.1, 0.15}, false};
}

ViewSplit select_splits(const Eigen::MatrixXd& iou, const SplitConfig& config) {
    const int n = static_cast<int>(iou.rows());
    if (config.n_context < 1) {
        throw std::invalid_argument("select_splits: n_context must be at least 1");
    }
    if (n < config.n_context + static_cast<int>(config.target_ious.size())) {
        throw std::invalid_argument("select_splits: not enough images for the requested split");
    }
    ViewSplit split;
    split.config = config;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    split.context.push_back(0);
    used[0] = true;
    const auto mean_to_context = [&](int i) {
        double sum = 0.0;
        for (int c : split.context) {
            sum += iou(i, c);
        }
        return sum / static_cast<double>(split.context.size());
    };
    while (static_cast<int>(split.context.size()) < config.n_context) {
        int best = -1;
        double best_score = 0.0;
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) {
                continue;
            }
            const double overlap = config.against_all_prior ? mean_to_context(i) : iou(i, split.context.front());
            const double score = std::abs(overlap - config.context_target_iou);
            if (best < 0 || score < best_score) {
                best = i;
                best_score = score;
            }
        }
        split.context.push_back(best);
        used[static_cast<std::size_t>(best)] = true;
    }
    for (const double target : config.target_ious) {
        int best = -1;
        double best_score = 0.0;
        double best_iou = 0.0;
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) {
                continue;
            }
            const double overlap = mean_to_context(i);
            const double score = std::abs(overlap - target);
            if (best < 0 || score < best_score) {
                best = i;
                best_score = score;
                best_iou = overlap;
            }
        }
        split.targets.push_back({best, best_iou});
        used[static_cast<std::size_t>(best)] = true;
    }
    return split;
}

ViewSplit select_splits(const SparseScene& scene, const SplitConfig& config) {
    return select_splits(iou_matrix(scene), config);
}

std::string split_to_json(const ViewSplit& split, const std::vector<std::string>& names) {
    nlohmann::json j;
    j["context"] = split.context;
    j["targets"] = nlohmann::json::array();
    for (const TargetChoice& t : split.targets) {
        nlohmann::json e{{"index", t.index}, {"iou", t.iou}};
        if (!names.empty()) {
            e["name"] = names.at(static_cast<std::size_t>(t.index));
        }
        j["targets"].push_back(e);
    }
    if (!names.empty()) {
        nlohmann::json cn = nlohmann::json::array();
        for (int c : split.context) {
            cn.push_back(names.at(static_cast<std::size_t>(c)));
        }
        j["context_names"] = cn;
    }
    j["config"] = {{"n_context", split.config.n_context},
                   {"context_target_iou", split.config.context_target_iou},
                   {"target_ious", split.config.target_ious},
                   {"against_all_prior", split.config.against_all_prior}};
    return j.dump(2);
}

geo::GeoPose perturb_geopose(const geo::GeoPose& pose, double sigma_translation, double sigma_rotation,
                             std::uint64_t seed) {
    if (sigma_translation < 0.0 || sigma_rotation < 0.0) {
        throw std::invalid_argument("perturb_geopose: sigmas must be non-negative");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double east = sigma_translation * unit(rng);
    const double north = sigma_translation * unit(rng);
    const double dh = sigma_rotation * unit(rng);
    geo::GeoPose north_up = pose;
    north_up.heading = 0.0;
    geo::GeoPose out = geo::local_to_geo(north_up, {east, north, 0.0});
    out.heading = geo::wrap_degrees(pose.heading + dh);
    return out;
}

} // namespace xvs::scene
