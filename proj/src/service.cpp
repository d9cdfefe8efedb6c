// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/service.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace xvs::service {

namespace {

using nlohmann::json;

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

void send_json(httplib::Response& res, const std::string& body, int status = 200) {
    res.status = status;
    res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, json{{"error", msg}}.dump(), status);
}

} // namespace

AlignServer::AlignServer(ServerConfig config, scene::SparseScene scene, tiles::SatMosaic mosaic)
    : config_(std::move(config)), scene_(std::move(scene)), mosaic_(std::move(mosaic)) {
    if (config_.state_dir.empty()) {
        config_.state_dir = config_.scene_dir;
    }
    std::vector<Eigen::Vector3d> all;
    for (const auto& [id, p] : scene_.points) {
        all.push_back(p.xyz);
    }
    if (all.size() > kMaxUiPoints) {
        std::vector<std::size_t> idx(all.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(config_.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(kMaxUiPoints);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
            points_.push_back(all[i]);
        }
    } else {
        points_ = std::move(all);
    }
    satellite_png_ = encode_png(mosaic_.pixels);
    const auto path = alignment_path();
    if (std::filesystem::exists(path)) {
        const auto bytes = read_file_bytes(path);
        alignment_ = align::alignment_from_json(std::string(bytes.begin(), bytes.end()));
    }
}

AlignServer::~AlignServer() { stop(); }

std::filesystem::path AlignServer::alignment_path() const { return config_.state_dir / "alignment.json"; }

align::Sim2Alignment AlignServer::alignment() const {
    std::lock_guard lock(mutex_);
    return alignment_;
}

void AlignServer::set_alignment(const align::Sim2Alignment& a) {
    a.validate();
    std::lock_guard lock(mutex_);
    write_file_atomic(alignment_path(), align::to_json(a) + "\n");
    alignment_ = a;
}

std::string AlignServer::scene_json() const {
    json j;
    j["points"] = json::array();
    for (const auto& p : points_) {
        j["points"].push_back(vec_json(p));
    }
    j["images"] = json::array();
    for (int id : scene_.ordered_image_ids()) {
        const auto& img = scene_.images.at(id);
        const Rigid3 pose = img.camera_to_world();
        json rot = json::array();
        for (int r = 0; r < 3; ++r) {
            rot.push_back(json::array({pose.rotation(r, 0), pose.rotation(r, 1), pose.rotation(r, 2)}));
        }
        const PerspectiveCamera cam = scene_.perspective_camera(id);
        j["images"].push_back({{"name", img.name},
                               {"pose", {{"rotation", rot}, {"translation", vec_json(pose.translation)}}},
                               {"intrinsics", {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}}},
                               {"width", cam.width},
                               {"height", cam.height}});
    }
    return j.dump();
}

std::string AlignServer::project_json(const std::string& space) const {
    const align::Sim2Alignment a = alignment();
    json pts = json::array();
    if (space == "sat") {
        for (const auto& p : points_) {
            const Eigen::Vector2d px = align::apply_sim2(a, p, mosaic_);
            pts.push_back(json::array({px.x(), px.y()}));
        }
        return json{{"space", space}, {"points", pts}}.dump();
    }
    const std::string prefix = "ground:";
    if (space.rfind(prefix, 0) != 0) {
        throw std::invalid_argument("space must be 'sat' or 'ground:<name>'");
    }
    const std::string name = space.substr(prefix.size());
    int image_id = -1;
    for (const auto& [id, img] : scene_.images) {
        if (img.name == name) {
            image_id = id;
        }
    }
    if (image_id < 0) {
        throw std::out_of_range("unknown ground image " + name);
    }
    // Lift the planar similarity to 3D and move points and camera together.
    const double t = geo::deg2rad(a.theta_deg);
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r.topLeftCorner<2, 2>() << std::cos(t), std::sin(t), -std::sin(t), std::cos(t);
    PerspectiveCamera cam = scene_.perspective_camera(image_id);
    cam.pose.rotation = r * cam.pose.rotation;
    cam.pose.translation = a.scale * (r * cam.pose.translation);
    for (const auto& p : points_) {
        Gaussian3D g;
        g.mean = a.scale * (r * p);
        const Splat2D s = project_perspective(g, cam);
        if (s.visible) {
            pts.push_back(json::array({s.mean.x(), s.mean.y()}));
        } else {
            pts.push_back(nullptr);
        }
    }
    return json{{"space", space}, {"points", pts}}.dump();
}

void AlignServer::install_routes() {
    httplib::Server& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/scene", [this](const httplib::Request&, httplib::Response& res) { send_json(res, scene_json()); });

    s.Get("/satellite", [this](const httplib::Request&, httplib::Response& res) {
        res.set_header("X-Center-Lat", std::to_string(mosaic_.center.latitude));
        res.set_header("X-Center-Lon", std::to_string(mosaic_.center.longitude));
        res.set_header("X-Resolution", std::to_string(mosaic_.resolution));
        res.set_header("X-Orientation", std::to_string(mosaic_.orientation_deg));
        res.set_header("Access-Control-Expose-Headers", "X-Center-Lat, X-Center-Lon, X-Resolution, X-Orientation");
        res.set_content(reinterpret_cast<const char*>(satellite_png_.data()), satellite_png_.size(), "image/png");
    });

    s.Get(R"(/ground/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string name = req.matches[1];
        bool known = false;
        for (const auto& [id, img] : scene_.images) {
            known = known || img.name == name;
        }
        const auto path = config_.images_dir / name;
        if (!known || config_.images_dir.empty() || name.find("..") != std::string::npos ||
            !std::filesystem::exists(path)) {
            send_error(res, 404, "no ground image " + name);
            return;
        }
        const auto bytes = encode_jpeg(read_image(path));
        res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/jpeg");
    });

    s.Get("/alignment", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, align::to_json(alignment()));
    });

    s.Post("/alignment", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const align::Sim2Alignment a = align::alignment_from_json(req.body);
            set_alignment(a);
            send_json(res, align::to_json(a));
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, e.what());
        }
    });

    s.Get("/project", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string space = req.has_param("space") ? req.get_param_value("space") : "sat";
        try {
            send_json(res, project_json(space));
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, e.what());
        } catch (const std::out_of_range& e) {
            send_error(res, 404, e.what());
        }
    });

    s.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
        const auto ids = scene_.ordered_image_ids();
        if (ids.empty()) {
            send_error(res, 409, "scene has no images");
            return;
        }
        const Eigen::Vector3d ref = scene_.images.at(ids.front()).camera_to_world().translation;
        send_json(res, align::to_json(align::export_alignment(alignment(), mosaic_, ref)));
    });

    if (!config_.static_dir.empty()) {
        s.set_mount_point("/", config_.static_dir.string());
    }
}

void AlignServer::bind() {
    server_ = std::make_unique<httplib::Server>();
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    install_routes();
    if (config_.port == 0) {
        port_ = server_->bind_to_any_port(config_.host);
        if (port_ < 0) {
            throw std::runtime_error("serve-align: cannot bind any port on " + config_.host);
        }
    } else {
        if (!server_->bind_to_port(config_.host, config_.port)) {
            throw std::runtime_error("serve-align: port " + std::to_string(config_.port) + " is busy or unavailable");
        }
        port_ = config_.port;
    }
}

void AlignServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void AlignServer::run() {
    bind();
    server_->listen_after_bind();
}

void AlignServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace xvs::service
