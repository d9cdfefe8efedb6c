// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "xvs/geodesy.hpp"
#include "xvs/json_io.hpp"
#include "xvs/splat.hpp"

using namespace xvs;
using namespace xvs::geo;

TEST(Geodesy, MercatorOrigin) {
    const MercatorPoint m = latlon_to_mercator({0.0, 0.0, 0.0});
    EXPECT_EQ(m.x, 0.0);
    EXPECT_EQ(m.y, 0.0);
}

TEST(Geodesy, MercatorAntimeridian) {
    const MercatorPoint m = latlon_to_mercator({0.0, 180.0, 0.0});
    EXPECT_NEAR(m.x, std::numbers::pi * 6378137.0, 1e-6);
    EXPECT_NEAR(m.x, 20037508.34, 0.01);
    EXPECT_NEAR(m.y, 0.0, 1e-9);
}

TEST(Geodesy, MercatorMatchesClosedForm) {
    const double lat = 48.8566;
    const double lon = 2.3522;
    const double lr = lat * std::numbers::pi / 180.0;
    const MercatorPoint m = latlon_to_mercator({lat, lon, 0.0});
    EXPECT_NEAR(m.x, 6378137.0 * lon * std::numbers::pi / 180.0, 1e-6);
    EXPECT_NEAR(m.y, 6378137.0 * std::log(std::tan(std::numbers::pi / 4 + lr / 2)), 1e-6);
}

TEST(Geodesy, MercatorRejectsPolarLatitude) {
    EXPECT_THROW(latlon_to_mercator({86.0, 0.0, 0.0}), std::domain_error);
    EXPECT_THROW(latlon_to_mercator({std::nan(""), 0.0, 0.0}), std::domain_error);
}

TEST(Geodesy, MercatorRoundTripGrid) {
    double worst = 0.0;
    for (int i = 0; i < 40; ++i) {
        for (int j = 0; j < 25; ++j) {
            const GeoPose p{-85.0 + 170.0 * i / 39.0, -180.0 + 359.99 * j / 24.0, 0.0};
            const GeoPose q = mercator_to_latlon(latlon_to_mercator(p));
            worst = std::max({worst, std::abs(q.latitude - p.latitude), std::abs(q.longitude - p.longitude)});
        }
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(Geodesy, LocalIdentity) {
    const GeoPose p{37.0, -122.0, 33.0};
    const LocalOffset o = geo_to_local(p, p);
    EXPECT_EQ(o.right, 0.0);
    EXPECT_EQ(o.forward, 0.0);
    EXPECT_EQ(o.rel_heading, 0.0);
}

TEST(Geodesy, LocalEastAtEquator) {
    const LocalOffset o = geo_to_local({0.0, 0.0, 0.0}, {0.0, 0.001, 0.0});
    EXPECT_NEAR(o.right, std::numbers::pi * 6378137.0 / 180.0 * 0.001, 1e-9);
    EXPECT_NEAR(o.right, 111.32, 0.01);
    EXPECT_NEAR(o.forward, 0.0, 1e-12);
}

TEST(Geodesy, LocalHeading90RotatesComponents) {
    const GeoPose other{0.0005, 0.0007, 10.0};
    const LocalOffset a = geo_to_local({0.0, 0.0, 0.0}, other);
    const LocalOffset b = geo_to_local({0.0, 0.0, 90.0}, other);
    // Facing east: forward is east, right is south.
    EXPECT_NEAR(b.forward, a.right, 1e-9);
    EXPECT_NEAR(b.right, -a.forward, 1e-9);
    EXPECT_NEAR(b.rel_heading, 280.0, 1e-12);
}

TEST(Geodesy, LocalAntiSymmetry) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lat(-60.0, 60.0);
    std::uniform_real_distribution<double> lon(-179.0, 179.0);
    std::uniform_real_distribution<double> off(-0.006, 0.006);
    std::uniform_real_distribution<double> hd(0.0, 360.0);
    for (int i = 0; i < 200; ++i) {
        const GeoPose a{lat(rng), lon(rng), hd(rng)};
        const GeoPose b{a.latitude + off(rng), a.longitude + off(rng), hd(rng)};
        const LocalOffset ab = geo_to_local(a, b);
        const LocalOffset ba = geo_to_local(b, a);
        if (std::hypot(ab.right, ab.forward) > 1000.0) {
            continue;
        }
        // Vectors in heading frames: v_h = Rot(-h) * (e, n) as (right, forward).
        const double d = (a.heading - b.heading) * std::numbers::pi / 180.0;
        const double rr = std::cos(d) * ba.right - std::sin(d) * ba.forward;
        const double rf = std::sin(d) * ba.right + std::cos(d) * ba.forward;
        EXPECT_NEAR(ab.right, -rr, 1e-6);
        EXPECT_NEAR(ab.forward, -rf, 1e-6);
    }
}

TEST(Geodesy, LocalRoundTrip) {
    const GeoPose origin{51.5, -0.12, 200.0};
    const LocalOffset o{123.0, -45.0, 17.0};
    const LocalOffset back = geo_to_local(origin, local_to_geo(origin, o));
    EXPECT_NEAR(back.right, o.right, 1e-6);
    EXPECT_NEAR(back.forward, o.forward, 1e-6);
    EXPECT_NEAR(back.rel_heading, o.rel_heading, 1e-9);
}

TEST(Geodesy, LocalSeparationLimit) {
    EXPECT_THROW(geo_to_local({0, 0, 0}, {0.2, 0, 0}), ApproximationError);
}

TEST(Geodesy, ReferenceCameraIsIdentityInReferenceFrame) {
    const Rigid3 t = local_to_reference_frame({0.0, 0.0, 0.0});
    EXPECT_TRUE(t.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    EXPECT_EQ(t.translation.norm(), 0.0);
}

TEST(Geodesy, ForwardDisplacementAlongZ) {
    const Rigid3 t = local_to_reference_frame({0.0, 10.0, 0.0});
    EXPECT_TRUE(t.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    EXPECT_NEAR(t.translation.z(), 10.0, 1e-12);
    EXPECT_NEAR(t.translation.x(), 0.0, 1e-12);
    EXPECT_NEAR(t.translation.y(), 0.0, 1e-12);
    // A shared world point projects consistently: point 5 m ahead of the
    // second camera sits 15 m ahead of the reference.
    const Eigen::Vector3d in_ref = t.apply(Eigen::Vector3d(0, 0, 5));
    EXPECT_NEAR(in_ref.z(), 15.0, 1e-12);
}

TEST(Geodesy, HeadingFlipIsAntiParallel) {
    const Rigid3 a = local_to_world_convention({0.0, 0.0, 0.0});
    const Rigid3 b = local_to_world_convention({0.0, 0.0, 180.0});
    EXPECT_NEAR(a.rotation.col(2).dot(b.rotation.col(2)), -1.0, 1e-12);
}

TEST(Geodesy, CameraUpBelowTerrainConvention) {
    const LocalFrame f;
    EXPECT_EQ(f.camera_height, 2.0);
    EXPECT_EQ(f.terrain_to_relative(0.0), -2.0);
}

TEST(Geodesy, LookAtMapsToSatelliteUp) {
    const Rigid3 ref = local_to_world_convention({0.0, 0.0, 0.0});
    const Eigen::Vector3d fwd = ref.rotation * Eigen::Vector3d(0, 0, 1);
    const OrthoCamera cam = OrthoCamera::centered(2.0, 64, 64);
    const Eigen::Vector2d d = cam.project(fwd) - cam.project(Eigen::Vector3d::Zero());
    EXPECT_NEAR(d.x(), 0.0, 1e-12);
    EXPECT_LT(d.y(), 0.0);
}

TEST(Geodesy, GeoPoseJson) {
    const nlohmann::json j = GeoPose{1.5, -2.5, 90.0};
    EXPECT_EQ(j.at("lat").get<double>(), 1.5);
    EXPECT_EQ(j.at("lon").get<double>(), -2.5);
    EXPECT_EQ(j.at("heading").get<double>(), 90.0);
    const GeoPose p = nlohmann::json::parse(R"({"lat": 3, "lon": 4})").get<GeoPose>();
    EXPECT_EQ(p.latitude, 3.0);
    EXPECT_EQ(p.heading, 0.0);
}

TEST(Geodesy, WrapHelpers) {
    EXPECT_EQ(wrap_degrees(-90.0), 270.0);
    EXPECT_EQ(wrap_degrees(360.0), 0.0);
    EXPECT_EQ(wrap_longitude(180.0), -180.0);
    EXPECT_EQ(wrap_longitude(190.0), -170.0);
}
