// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xvs/geodesy.hpp"
#include "xvs/sat_tiles.hpp"

namespace xvs::align {

/// Planar similarity from reconstruction units to satellite pixels.
/// `theta_deg` rotates clockwise as seen on a north-up map, so a camera
/// looking along reconstruction +y ends up with heading theta_deg.
struct Sim2Alignment {
    double tx = 0.0; ///< satellite pixels
    double ty = 0.0;
    double theta_deg = 0.0;
    double scale = 1.0; ///< reconstruction units to meters

    static Sim2Alignment identity() { return {}; }
    bool operator==(const Sim2Alignment&) const = default;
    void validate() const;
};

/// Pixel offset from the mosaic center before translation:
/// r * scale * R_cw(theta) (x, y), with world +y mapped to decreasing v.
Eigen::Vector2d rotate_scale(const Sim2Alignment& a, const Eigen::Vector2d& xy, double resolution);

Eigen::Vector2d apply_sim2(const Sim2Alignment& a, const Eigen::Vector3d& point, const tiles::SatMosaic& mosaic);
std::vector<Eigen::Vector2d> apply_sim2(const Sim2Alignment& a, std::span<const Eigen::Vector3d> points,
                                        const tiles::SatMosaic& mosaic);

/// Alignment equal to applying `first`, reading its pixel offsets from the
/// center back as plane coordinates (v flipped, divided by the resolution)
/// and applying `second`.
Sim2Alignment compose(const Sim2Alignment& first, const Sim2Alignment& second);

struct ExportedAlignment {
    geo::GeoPose pose;
    double scale = 1.0;
    bool inside_mosaic = true;
};

/// GeoPose of the reference camera center `ref` under the alignment.
ExportedAlignment export_alignment(const Sim2Alignment& a, const tiles::SatMosaic& mosaic, const Eigen::Vector3d& ref);

/// Inverse of export_alignment for the same mosaic and reference center.
Sim2Alignment import_alignment(const ExportedAlignment& e, const tiles::SatMosaic& mosaic, const Eigen::Vector3d& ref);

/// Satellite pixel of a geographic position in the mosaic.
Eigen::Vector2d geo_to_pixel(const geo::GeoPose& pose, const tiles::SatMosaic& mosaic);
geo::GeoPose pixel_to_geo(const Eigen::Vector2d& pixel, const tiles::SatMosaic& mosaic);

std::string to_json(const Sim2Alignment& a);
Sim2Alignment alignment_from_json(const std::string& text);
std::string to_json(const ExportedAlignment& e);

} // namespace xvs::align
