// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "image_util.hpp"
#include "xvs/align.hpp"
#include "xvs/service.hpp"

#include <httplib.h>

using namespace xvs;
using namespace xvs::align;
using nlohmann::json;

namespace {

const std::filesystem::path kData = XVS_TEST_DATA_DIR;

tiles::SatMosaic test_mosaic(double orientation = 0.0) {
    tiles::SatMosaic m;
    m.pixels = xvs::testing::random_image(5, 64, 64, 3);
    m.center = {37.5, -122.25, 0.0};
    m.resolution = 2.0;
    m.zoom = 19;
    m.orientation_deg = orientation;
    return m;
}

Sim2Alignment random_alignment(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> t(-40.0, 40.0);
    std::uniform_real_distribution<double> th(-180.0, 180.0);
    std::uniform_real_distribution<double> s(0.2, 5.0);
    return {t(rng), t(rng), th(rng), s(rng)};
}

Eigen::Vector3d random_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-20.0, 20.0);
    return {d(rng), d(rng), d(rng)};
}

// Rotation about +z matching the clockwise heading convention.
Eigen::Vector3d rotate_heading(const Eigen::Vector3d& p, double deg) {
    const double t = deg * M_PI / 180.0;
    return {std::cos(t) * p.x() + std::sin(t) * p.y(), -std::sin(t) * p.x() + std::cos(t) * p.y(), p.z()};
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace

TEST(Sim2, IdentityMapsToCenter) {
    const auto m = test_mosaic();
    const Eigen::Vector2d px = apply_sim2(Sim2Alignment::identity(), Eigen::Vector3d(0, 0, 7.5), m);
    EXPECT_EQ(px, Eigen::Vector2d(32, 32));
}

TEST(Sim2, ScaleDoublesOffsets) {
    const auto m = test_mosaic();
    const Eigen::Vector3d p(3.0, -1.5, 2.0);
    const Sim2Alignment a{0.0, 0.0, 25.0, 1.0};
    Sim2Alignment b = a;
    b.scale = 2.0;
    const Eigen::Vector2d c(32, 32);
    EXPECT_LT(((apply_sim2(b, p, m) - c) - 2.0 * (apply_sim2(a, p, m) - c)).norm(), 1e-12);
}

TEST(Sim2, AxesFollowNorthUpMap) {
    const auto m = test_mosaic();
    // +y is north (up), +x is east (right) at theta 0.
    EXPECT_LT((apply_sim2({}, Eigen::Vector3d(0, 1, 0), m) - Eigen::Vector2d(32, 30)).norm(), 1e-12);
    EXPECT_LT((apply_sim2({}, Eigen::Vector3d(1, 0, 0), m) - Eigen::Vector2d(34, 32)).norm(), 1e-12);
    // theta 90 turns +y toward east.
    EXPECT_LT((apply_sim2({0, 0, 90, 1}, Eigen::Vector3d(0, 1, 0), m) - Eigen::Vector2d(34, 32)).norm(), 1e-12);
}

TEST(Sim2, CompositionMatchesSequentialApplication) {
    std::mt19937_64 rng(3);
    const auto m = test_mosaic();
    const Eigen::Vector2d center(32, 32);
    for (int i = 0; i < 200; ++i) {
        const Sim2Alignment a = random_alignment(rng);
        const Sim2Alignment b = random_alignment(rng);
        const Eigen::Vector3d p = random_point(rng);
        const Eigen::Vector2d d = apply_sim2(a, p, m) - center;
        const Eigen::Vector3d q(d.x() / m.resolution, -d.y() / m.resolution, 0.0);
        const Eigen::Vector2d expected = apply_sim2(b, q, m);
        EXPECT_LT((apply_sim2(compose(a, b), p, m) - expected).norm(), 1e-9);
    }
}

TEST(Sim2, RotationEquivariance) {
    std::mt19937_64 rng(4);
    const auto m = test_mosaic();
    std::uniform_real_distribution<double> phi(-180.0, 180.0);
    for (int i = 0; i < 200; ++i) {
        Sim2Alignment a = random_alignment(rng);
        const Eigen::Vector3d p = random_point(rng);
        const double f = phi(rng);
        const Eigen::Vector2d rotated = apply_sim2(a, rotate_heading(p, f), m);
        a.theta_deg += f;
        EXPECT_LT((rotated - apply_sim2(a, p, m)).norm(), 1e-9);
    }
}

TEST(Sim2, ZIsDropped) {
    std::mt19937_64 rng(5);
    const auto m = test_mosaic();
    const Sim2Alignment a = random_alignment(rng);
    EXPECT_EQ(apply_sim2(a, Eigen::Vector3d(1, 2, -50), m), apply_sim2(a, Eigen::Vector3d(1, 2, 80), m));
}

TEST(Sim2, JsonRoundTripAndValidation) {
    const Sim2Alignment a{1.25, -3.5, 12.0, 0.75};
    EXPECT_EQ(alignment_from_json(to_json(a)), a);
    EXPECT_THROW(alignment_from_json(R"({"tx":0,"ty":0,"theta":0,"scale":0})"), std::invalid_argument);
    EXPECT_THROW(alignment_from_json(R"({"tx":0,"ty":0,"theta":0})"), std::invalid_argument);
    EXPECT_THROW(alignment_from_json("not json"), std::invalid_argument);
    EXPECT_THROW(alignment_from_json(R"({"tx":"a","ty":0,"theta":0,"scale":1})"), std::invalid_argument);
}

TEST(Export, IdentityIsMosaicCenter) {
    const auto m = test_mosaic();
    const ExportedAlignment e = export_alignment({}, m, Eigen::Vector3d::Zero());
    EXPECT_NEAR(e.pose.latitude, m.center.latitude, 1e-12);
    EXPECT_NEAR(e.pose.longitude, m.center.longitude, 1e-12);
    EXPECT_EQ(e.pose.heading, 0.0);
    EXPECT_EQ(e.scale, 1.0);
    EXPECT_TRUE(e.inside_mosaic);
}

TEST(Export, HeadingFollowsThetaAndOrientation) {
    EXPECT_NEAR(export_alignment({0, 0, 90, 1}, test_mosaic(), Eigen::Vector3d::Zero()).pose.heading, 90.0, 1e-12);
    EXPECT_NEAR(export_alignment({0, 0, 90, 1}, test_mosaic(30.0), Eigen::Vector3d::Zero()).pose.heading, 120.0,
                1e-12);
}

TEST(Export, PixelOffsetMatchesGeodesicDistance) {
    const auto m = test_mosaic();
    // 20 px east at 2 px/m is 10 m east.
    const ExportedAlignment e = export_alignment({20, 0, 0, 1}, m, Eigen::Vector3d::Zero());
    const geo::LocalOffset en = geo::geo_to_local(m.center, e.pose);
    EXPECT_NEAR(en.right, 10.0, 1e-3);
    EXPECT_NEAR(en.forward, 0.0, 1e-3);
}

TEST(Export, OutsideMosaicIsFlaggedButExported) {
    const ExportedAlignment e = export_alignment({500, 0, 0, 1}, test_mosaic(), Eigen::Vector3d::Zero());
    EXPECT_FALSE(e.inside_mosaic);
    EXPECT_GT(e.pose.longitude, test_mosaic().center.longitude);
}

TEST(Export, RoundTripReproducesPixels) {
    std::mt19937_64 rng(6);
    for (double orientation : {0.0, 37.0, -120.0}) {
        const auto m = test_mosaic(orientation);
        for (int i = 0; i < 100; ++i) {
            const Sim2Alignment a = random_alignment(rng);
            const Eigen::Vector3d ref = random_point(rng);
            const Sim2Alignment b = import_alignment(export_alignment(a, m, ref), m, ref);
            for (int k = 0; k < 5; ++k) {
                const Eigen::Vector3d p = random_point(rng);
                ASSERT_LT((apply_sim2(a, p, m) - apply_sim2(b, p, m)).norm(), 0.5);
                EXPECT_LT((apply_sim2(a, p, m) - apply_sim2(b, p, m)).norm(), 1e-6);
            }
        }
    }
}

TEST(Export, GeoPixelRoundTrip) {
    const auto m = test_mosaic(45.0);
    const Eigen::Vector2d px(10.25, 50.5);
    EXPECT_LT((geo_to_pixel(pixel_to_geo(px, m), m) - px).norm(), 1e-6);
}

class AlignServiceTest : public ::testing::Test {
  protected:
    void SetUp() override {
        state_ = fresh_dir("xvs_align_state");
        images_ = fresh_dir("xvs_align_images");
        write_image(xvs::testing::random_image(7, 40, 30, 3), images_ / "frame_000.jpg");
        server_ = make_server();
        server_->start();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", server_->port());
    }

    void TearDown() override {
        client_.reset();
        server_.reset();
        std::filesystem::remove_all(state_);
        std::filesystem::remove_all(images_);
    }

    std::unique_ptr<service::AlignServer> make_server(int port = 0) {
        service::ServerConfig c;
        c.scene_dir = kData / "sparse_basic";
        c.images_dir = images_;
        c.state_dir = state_;
        c.port = port;
        return std::make_unique<service::AlignServer>(c, scene::parse_sparse(c.scene_dir), test_mosaic());
    }

    std::filesystem::path state_;
    std::filesystem::path images_;
    std::unique_ptr<service::AlignServer> server_;
    std::unique_ptr<httplib::Client> client_;
};

TEST_F(AlignServiceTest, SceneListsFixturePoints) {
    const auto res = client_->Get("/scene");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const json j = json::parse(res->body);
    ASSERT_EQ(j["points"].size(), 3u);
    EXPECT_EQ(j["points"][0], json::array({0.5, -0.25, 4.0}));
    ASSERT_EQ(j["images"].size(), 2u);
    EXPECT_EQ(j["images"][0]["name"], "frame_000.jpg");
    EXPECT_TRUE(j["images"][1].contains("pose"));
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(AlignServiceTest, SatelliteServesPngWithGeoreference) {
    const auto res = client_->Get("/satellite");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
    EXPECT_NEAR(std::stod(res->get_header_value("X-Center-Lat")), 37.5, 1e-6);
    EXPECT_NEAR(std::stod(res->get_header_value("X-Center-Lon")), -122.25, 1e-6);
    EXPECT_NEAR(std::stod(res->get_header_value("X-Resolution")), 2.0, 1e-6);
    const std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
    const Image img = decode_png(bytes);
    const Image expected = test_mosaic().pixels;
    ASSERT_EQ(img.width(), expected.width());
    for (std::size_t i = 0; i < img.size(); ++i) {
        ASSERT_LE(std::abs(img.data()[i] - expected.data()[i]), 0.5 / 255.0 + 1e-12);
    }
}

TEST_F(AlignServiceTest, GroundServesJpegOrNotFound) {
    const auto res = client_->Get("/ground/frame_000.jpg");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/jpeg");
    const Image img = decode_jpeg(std::vector<std::uint8_t>(res->body.begin(), res->body.end()));
    EXPECT_EQ(img.width(), 40);
    EXPECT_EQ(img.height(), 30);
    EXPECT_EQ(client_->Get("/ground/frame_001.jpg")->status, 404);
    EXPECT_EQ(client_->Get("/ground/unknown.jpg")->status, 404);
    EXPECT_EQ(client_->Get("/ground/..%2Fsecret.jpg")->status, 404);
}

TEST_F(AlignServiceTest, AlignmentStartsAtIdentity) {
    const auto res = client_->Get("/alignment");
    ASSERT_TRUE(res);
    EXPECT_EQ(alignment_from_json(res->body), Sim2Alignment::identity());
    EXPECT_FALSE(std::filesystem::exists(server_->alignment_path()));
}

TEST_F(AlignServiceTest, PostThenGetRoundTripsAndPersists) {
    const Sim2Alignment a{4.5, -2.25, 33.0, 1.5};
    const auto post = client_->Post("/alignment", to_json(a), "application/json");
    ASSERT_TRUE(post);
    EXPECT_EQ(post->status, 200);
    const auto get = client_->Get("/alignment");
    EXPECT_EQ(json::parse(get->body), json::parse(to_json(a)));
    EXPECT_EQ(server_->alignment(), a);
    const auto bytes = read_file_bytes(server_->alignment_path());
    EXPECT_EQ(alignment_from_json(std::string(bytes.begin(), bytes.end())), a);
}

TEST_F(AlignServiceTest, InvalidPostIsRejectedWithoutSideEffects) {
    const Sim2Alignment a{1, 2, 3, 4};
    client_->Post("/alignment", to_json(a), "application/json");
    for (const char* body : {R"({"tx":0,"ty":0,"theta":0,"scale":-1})", R"({"tx":0})", "{", ""}) {
        const auto res = client_->Post("/alignment", body, "application/json");
        ASSERT_TRUE(res);
        EXPECT_EQ(res->status, 400) << body;
        EXPECT_TRUE(json::parse(res->body).contains("error"));
    }
    EXPECT_EQ(server_->alignment(), a);
    const auto bytes = read_file_bytes(server_->alignment_path());
    EXPECT_EQ(alignment_from_json(std::string(bytes.begin(), bytes.end())), a);
}

TEST_F(AlignServiceTest, RestartKeepsOnlyPersistedAlignment) {
    const Sim2Alignment a{-7, 8, -45, 0.5};
    client_->Post("/alignment", to_json(a), "application/json");
    client_.reset();
    server_.reset();
    server_ = make_server();
    server_->start();
    httplib::Client c("127.0.0.1", server_->port());
    EXPECT_EQ(alignment_from_json(c.Get("/alignment")->body), a);
}

TEST_F(AlignServiceTest, ProjectSatEqualsApplySim2) {
    const Sim2Alignment a{3, -4, 60, 2.5};
    client_->Post("/alignment", to_json(a), "application/json");
    const auto res = client_->Get("/project?space=sat");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const json j = json::parse(res->body);
    const auto expected = apply_sim2(a, server_->ui_points(), test_mosaic());
    ASSERT_EQ(j["points"].size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(j["points"][i][0].get<double>(), expected[i].x(), 1e-9);
        EXPECT_NEAR(j["points"][i][1].get<double>(), expected[i].y(), 1e-9);
    }
    EXPECT_EQ(json::parse(client_->Get("/project")->body), j);
}

TEST_F(AlignServiceTest, ProjectGroundUsesAlignedPerspectiveCamera) {
    const scene::SparseScene s = scene::parse_sparse(kData / "sparse_basic");
    const PerspectiveCamera cam = s.perspective_camera(1);
    // A similarity moving points and camera together leaves every pixel fixed.
    for (const Sim2Alignment& a : {Sim2Alignment{}, Sim2Alignment{10, 20, 70, 3}}) {
        client_->Post("/alignment", to_json(a), "application/json");
        const auto res = client_->Get("/project?space=ground:frame_000.jpg");
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200);
        const json j = json::parse(res->body);
        ASSERT_EQ(j["points"].size(), 3u);
        int i = 0;
        for (const auto& [id, p] : s.points) {
            Gaussian3D g;
            g.mean = p.xyz;
            const Splat2D sp = project_perspective(g, cam);
            ASSERT_TRUE(sp.visible);
            EXPECT_NEAR(j["points"][i][0].get<double>(), sp.mean.x(), 1e-6);
            EXPECT_NEAR(j["points"][i][1].get<double>(), sp.mean.y(), 1e-6);
            ++i;
        }
    }
    // Pinhole oracle for the identity-pose camera.
    Eigen::Vector3d p = s.points.at(1).xyz;
    const json j = json::parse(client_->Get("/project?space=ground:frame_000.jpg")->body);
    EXPECT_NEAR(j["points"][0][0].get<double>(), cam.fx * p.x() / p.z() + cam.cx, 1e-6);
    EXPECT_NEAR(j["points"][0][1].get<double>(), cam.fy * p.y() / p.z() + cam.cy, 1e-6);
}

TEST_F(AlignServiceTest, ProjectErrors) {
    EXPECT_EQ(client_->Get("/project?space=orbit")->status, 400);
    EXPECT_EQ(client_->Get("/project?space=ground:missing.jpg")->status, 404);
}

TEST_F(AlignServiceTest, ExportMatchesDirectCall) {
    const Sim2Alignment a{5, 5, 90, 1.25};
    client_->Post("/alignment", to_json(a), "application/json");
    const auto res = client_->Get("/export");
    ASSERT_TRUE(res);
    const json j = json::parse(res->body);
    const scene::SparseScene s = scene::parse_sparse(kData / "sparse_basic");
    const Eigen::Vector3d ref = s.images.at(1).camera_to_world().translation;
    const ExportedAlignment e = export_alignment(a, test_mosaic(), ref);
    EXPECT_NEAR(j["lat"].get<double>(), e.pose.latitude, 1e-12);
    EXPECT_NEAR(j["lon"].get<double>(), e.pose.longitude, 1e-12);
    EXPECT_NEAR(j["heading"].get<double>(), 90.0, 1e-12);
    EXPECT_EQ(j["scale"].get<double>(), 1.25);
}

TEST_F(AlignServiceTest, CorsPreflight) {
    const auto res = client_->Options("/alignment");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
    EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST_F(AlignServiceTest, BusyPortFailsAtStartup) {
    auto other = make_server(server_->port());
    EXPECT_THROW(other->start(), std::runtime_error);
}

TEST_F(AlignServiceTest, ConcurrentPostsLeaveConsistentState) {
    std::vector<std::thread> threads;
    std::vector<Sim2Alignment> posted;
    for (int t = 0; t < 4; ++t) {
        posted.push_back({double(t), double(-t), 10.0 * t, 1.0 + t});
    }
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            httplib::Client c("127.0.0.1", server_->port());
            for (int k = 0; k < 10; ++k) {
                c.Post("/alignment", to_json(posted[t]), "application/json");
                c.Get("/project");
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    const Sim2Alignment final_state = server_->alignment();
    EXPECT_NE(std::find(posted.begin(), posted.end(), final_state), posted.end());
    const auto bytes = read_file_bytes(server_->alignment_path());
    EXPECT_EQ(alignment_from_json(std::string(bytes.begin(), bytes.end())), final_state);
}

TEST(AlignService, SubsamplesLargeClouds) {
    scene::SparseScene s;
    for (int i = 0; i < 25000; ++i) {
        scene::SparsePoint p;
        p.id = i;
        p.xyz = Eigen::Vector3d(i, 0, 0);
        s.points[i] = p;
    }
    service::ServerConfig c;
    c.state_dir = fresh_dir("xvs_align_big");
    c.seed = 9;
    const service::AlignServer a(c, s, test_mosaic());
    const service::AlignServer b(c, s, test_mosaic());
    EXPECT_EQ(a.ui_points().size(), service::kMaxUiPoints);
    EXPECT_EQ(a.ui_points(), b.ui_points());
    std::filesystem::remove_all(c.state_dir);
}
