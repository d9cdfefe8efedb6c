// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "xvs/pose.hpp"

namespace xvs::geo {

inline constexpr double kEarthRadius = 6378137.0;
inline constexpr double kMaxMercatorLatitude = 85.05112878;
inline constexpr double kDefaultCameraHeight = 2.0;
/// geo_to_local refuses separations beyond this (tangent-plane validity).
inline constexpr double kMaxLocalSeparation = 10000.0;

/// GPS fix plus heading in degrees clockwise from true north. The heading is
/// taken to be the azimuth of the camera's optical axis.
struct GeoPose {
    double latitude = 0.0;
    double longitude = 0.0;
    double heading = 0.0;
};

/// Thrown when a local tangent-plane conversion is asked to span too far.
class ApproximationError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Local frame anchored at the reference ground image. Its optical center is
/// the zero-altitude point; terrain lies `camera_height` below it.
struct LocalFrame {
    GeoPose origin;
    double camera_height = kDefaultCameraHeight;

    /// Converts a terrain height measured from the ground under the reference
    /// camera into a height relative to the reference optical center.
    double terrain_to_relative(double terrain_height) const { return terrain_height - camera_height; }
};

struct MercatorPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Planar offset in the origin's heading-aligned frame. With origin heading 0
/// `right` is east and `forward` is north.
struct LocalOffset {
    double right = 0.0;
    double forward = 0.0;
    double rel_heading = 0.0;
};

double deg2rad(double deg);
double rad2deg(double rad);
/// Wraps into [0, 360).
double wrap_degrees(double deg);
/// Wraps into [-180, 180).
double wrap_longitude(double deg);

/// Throws std::domain_error for non-finite or out-of-range fields.
void validate(const GeoPose& pose);

/// Spherical Web Mercator (EPSG:3857) in meters.
MercatorPoint latlon_to_mercator(const GeoPose& pose);
GeoPose mercator_to_latlon(const MercatorPoint& p);

/// Mercator units per ground meter at `latitude` (1 / cos(lat)).
double mercator_scale(double latitude);

/// Equirectangular tangent-plane offset of `other` relative to `origin`,
/// scaled by cos of the mean latitude so the map is exactly anti-symmetric.
LocalOffset geo_to_local(const GeoPose& origin, const GeoPose& other);

/// Inverse of geo_to_local for a fixed origin.
GeoPose local_to_geo(const GeoPose& origin, const LocalOffset& offset);

/// Fixed rotation taking reference-camera axes (x right, y down, z forward)
/// to the z-up world frame (x right, y forward, z up).
Eigen::Matrix3d reference_camera_to_world();

/// Camera-to-world pose in the z-up world frame for a camera at `offset`
/// from the reference, `up` meters above it. The reference camera maps to
/// reference_camera_to_world() with zero translation.
Rigid3 local_to_world_convention(const LocalOffset& offset, double up = 0.0);

/// Same pose expressed relative to the reference camera (identity for the
/// reference itself, forward displacement along +z).
Rigid3 local_to_reference_frame(const LocalOffset& offset, double up = 0.0);

} // namespace xvs::geo
