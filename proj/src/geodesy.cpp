// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/geodesy.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace xvs::geo {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double wrap_degrees(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w < 0.0) {
        w += 360.0;
    }
    return w >= 360.0 ? 0.0 : w;
}

double wrap_longitude(double deg) {
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) {
        w += 360.0;
    }
    return w - 180.0;
}

void validate(const GeoPose& pose) {
    if (!std::isfinite(pose.latitude) || !std::isfinite(pose.longitude) || !std::isfinite(pose.heading)) {
        throw std::domain_error("GeoPose: non-finite field");
    }
    if (pose.latitude < -90.0 || pose.latitude > 90.0) {
        throw std::domain_error("GeoPose: latitude out of range: " + std::to_string(pose.latitude));
    }
    if (pose.longitude < -180.0 || pose.longitude > 180.0) {
        throw std::domain_error("GeoPose: longitude out of range: " + std::to_string(pose.longitude));
    }
}

MercatorPoint latlon_to_mercator(const GeoPose& pose) {
    validate(pose);
    if (std::abs(pose.latitude) > kMaxMercatorLatitude) {
        throw std::domain_error("latitude outside the Web Mercator band: " + std::to_string(pose.latitude));
    }
    const double lat = deg2rad(pose.latitude);
    return {kEarthRadius * deg2rad(pose.longitude),
            kEarthRadius * std::atanh(std::sin(lat))};
}

GeoPose mercator_to_latlon(const MercatorPoint& p) {
    GeoPose out;
    out.longitude = rad2deg(p.x / kEarthRadius);
    out.latitude = rad2deg(2.0 * std::atan(std::exp(p.y / kEarthRadius)) - std::numbers::pi / 2.0);
    return out;
}

double mercator_scale(double latitude) { return 1.0 / std::cos(deg2rad(latitude)); }

namespace {

// Rotates an (east, north) vector into the (right, forward) axes of a frame
// whose forward direction has azimuth `heading_deg`.
Eigen::Vector2d en_to_heading_frame(double east, double north, double heading_deg) {
    const double h = deg2rad(heading_deg);
    const double c = std::cos(h);
    const double s = std::sin(h);
    return {east * c - north * s, east * s + north * c};
}

Eigen::Vector2d heading_frame_to_en(double right, double forward, double heading_deg) {
    const double h = deg2rad(heading_deg);
    const double c = std::cos(h);
    const double s = std::sin(h);
    return {right * c + forward * s, -right * s + forward * c};
}

} // namespace

LocalOffset geo_to_local(const GeoPose& origin, const GeoPose& other) {
    validate(origin);
    validate(other);
    const double mean_lat = deg2rad(0.5 * (origin.latitude + other.latitude));
    const double dlon = deg2rad(wrap_longitude(other.longitude - origin.longitude));
    const double east = kEarthRadius * std::cos(mean_lat) * dlon;
    const double north = kEarthRadius * deg2rad(other.latitude - origin.latitude);
    if (std::hypot(east, north) > kMaxLocalSeparation) {
        throw ApproximationError("geo_to_local: separation " + std::to_string(std::hypot(east, north)) +
                                 " m exceeds the tangent-plane limit");
    }
    const Eigen::Vector2d rf = en_to_heading_frame(east, north, origin.heading);
    return {rf.x(), rf.y(), wrap_degrees(other.heading - origin.heading)};
}

GeoPose local_to_geo(const GeoPose& origin, const LocalOffset& offset) {
    validate(origin);
    const Eigen::Vector2d en = heading_frame_to_en(offset.right, offset.forward, origin.heading);
    GeoPose out;
    out.latitude = origin.latitude + rad2deg(en.y() / kEarthRadius);
    // geo_to_local scales by the mean latitude; invert that exactly.
    const double mean_lat = deg2rad(0.5 * (origin.latitude + out.latitude));
    out.longitude = wrap_longitude(origin.longitude + rad2deg(en.x() / (kEarthRadius * std::cos(mean_lat))));
    out.heading = wrap_degrees(origin.heading + offset.rel_heading);
    return out;
}

Eigen::Matrix3d reference_camera_to_world() {
    Eigen::Matrix3d r;
    // Columns: camera x (right), y (down), z (forward) in world coordinates.
    r.col(0) = Eigen::Vector3d(1.0, 0.0, 0.0);
    r.col(1) = Eigen::Vector3d(0.0, 0.0, -1.0);
    r.col(2) = Eigen::Vector3d(0.0, 1.0, 0.0);
    return r;
}

Rigid3 local_to_world_convention(const LocalOffset& offset, double up) {
    const double h = deg2rad(offset.rel_heading);
    const Eigen::Vector3d forward(std::sin(h), std::cos(h), 0.0);
    const Eigen::Vector3d right(std::cos(h), -std::sin(h), 0.0);
    Rigid3 pose;
    pose.rotation.col(0) = right;
    pose.rotation.col(1) = Eigen::Vector3d(0.0, 0.0, -1.0);
    pose.rotation.col(2) = forward;
    pose.translation = Eigen::Vector3d(offset.right, offset.forward, up);
    return pose;
}

Rigid3 local_to_reference_frame(const LocalOffset& offset, double up) {
    Rigid3 world_from_ref;
    world_from_ref.rotation = reference_camera_to_world();
    return world_from_ref.inverse() * local_to_world_convention(offset, up);
}

} // namespace xvs::geo
