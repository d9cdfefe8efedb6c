// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "xvs/align.hpp"
#include "xvs/sat_tiles.hpp"
#include "xvs/scene_io.hpp"

namespace httplib {
class Server;
}

namespace xvs::service {

inline constexpr std::size_t kMaxUiPoints = 20000;

struct ServerConfig {
    std::filesystem::path scene_dir;  ///< COLMAP text model
    std::filesystem::path images_dir; ///< ground photos served by /ground/{name}; may be empty
    std::filesystem::path state_dir;  ///< holds alignment.json; defaults to scene_dir
    std::filesystem::path static_dir; ///< optional UI bundle mounted at /
    std::string host = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    std::uint64_t seed = 0;
};

/// HTTP backend of the alignment tool.
///
/// GET /scene, /satellite, /ground/{name}, /alignment, /project, /export and
/// POST /alignment. The alignment is only mutated by POST and persisted to
/// alignment.json after every accepted update.
class AlignServer {
  public:
    AlignServer(ServerConfig config, scene::SparseScene scene, tiles::SatMosaic mosaic);
    ~AlignServer();

    AlignServer(const AlignServer&) = delete;
    AlignServer& operator=(const AlignServer&) = delete;

    /// Binds and serves on a background thread. Throws if the port is busy.
    void start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const { return port_; }

    align::Sim2Alignment alignment() const;
    /// Points sent to the UI (at most kMaxUiPoints, fixed-seed subsample).
    const std::vector<Eigen::Vector3d>& ui_points() const { return points_; }
    std::filesystem::path alignment_path() const;

    std::string scene_json() const;
    std::string project_json(const std::string& space) const;

  private:
    void bind();
    void install_routes();
    void set_alignment(const align::Sim2Alignment& a);

    ServerConfig config_;
    scene::SparseScene scene_;
    tiles::SatMosaic mosaic_;
    std::vector<Eigen::Vector3d> points_;
    std::vector<std::uint8_t> satellite_png_;
    mutable std::mutex mutex_;
    align::Sim2Alignment alignment_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace xvs::service
