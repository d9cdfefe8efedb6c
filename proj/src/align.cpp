// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/align.hpp"

#include <cmath>
#include <stdexcept>

#include "xvs/json_io.hpp"

namespace xvs::align {

namespace {

Eigen::Matrix2d rotation_cw(double deg) {
    const double t = geo::deg2rad(deg);
    const double c = std::cos(t);
    const double s = std::sin(t);
    Eigen::Matrix2d r;
    r << c, s, -s, c;
    return r;
}

Eigen::Vector2d mosaic_center(const tiles::SatMosaic& m) {
    return {static_cast<double>(m.pixels.width() / 2), static_cast<double>(m.pixels.height() / 2)};
}

// East/north meters to mosaic pixel offsets, honoring the mosaic orientation.
Eigen::Vector2d world_to_pixel_offset(const Eigen::Vector2d& east_north, const tiles::SatMosaic& m) {
    const Eigen::Vector2d local = rotation_cw(-m.orientation_deg) * east_north;
    return {m.resolution * local.x(), -m.resolution * local.y()};
}

Eigen::Vector2d pixel_offset_to_world(const Eigen::Vector2d& offset, const tiles::SatMosaic& m) {
    const Eigen::Vector2d local(offset.x() / m.resolution, -offset.y() / m.resolution);
    return rotation_cw(m.orientation_deg) * local;
}

} // namespace

void Sim2Alignment::validate() const {
    if (!std::isfinite(tx) || !std::isfinite(ty) || !std::isfinite(theta_deg) || !std::isfinite(scale) ||
        !(scale > 0.0)) {
        throw std::invalid_argument("Sim2Alignment: fields must be finite with scale > 0");
    }
}

Eigen::Vector2d rotate_scale(const Sim2Alignment& a, const Eigen::Vector2d& xy, double resolution) {
    const Eigen::Vector2d w = rotation_cw(a.theta_deg) * (a.scale * xy) * resolution;
    return {w.x(), -w.y()};
}

Eigen::Vector2d apply_sim2(const Sim2Alignment& a, const Eigen::Vector3d& point, const tiles::SatMosaic& mosaic) {
    return rotate_scale(a, point.head<2>(), mosaic.resolution) + Eigen::Vector2d(a.tx, a.ty) + mosaic_center(mosaic);
}

std::vector<Eigen::Vector2d> apply_sim2(const Sim2Alignment& a, std::span<const Eigen::Vector3d> points,
                                        const tiles::SatMosaic& mosaic) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(apply_sim2(a, p, mosaic));
    }
    return out;
}

Sim2Alignment compose(const Sim2Alignment& first, const Sim2Alignment& second) {
    Sim2Alignment out;
    out.theta_deg = first.theta_deg + second.theta_deg;
    out.scale = first.scale * second.scale;
    // Offsets live in pixel space (v down); rotate them with the same flip.
    const Eigen::Vector2d t1(first.tx, -first.ty);
    const Eigen::Vector2d r = second.scale * (rotation_cw(second.theta_deg) * t1);
    out.tx = r.x() + second.tx;
    out.ty = -r.y() + second.ty;
    return out;
}

Eigen::Vector2d geo_to_pixel(const geo::GeoPose& pose, const tiles::SatMosaic& mosaic) {
    const geo::MercatorPoint c = geo::latlon_to_mercator(mosaic.center);
    const geo::MercatorPoint p = geo::latlon_to_mercator(pose);
    const double k = geo::mercator_scale(mosaic.center.latitude);
    const Eigen::Vector2d east_north((p.x - c.x) / k, (p.y - c.y) / k);
    return mosaic_center(mosaic) + world_to_pixel_offset(east_north, mosaic);
}

geo::GeoPose pixel_to_geo(const Eigen::Vector2d& pixel, const tiles::SatMosaic& mosaic) {
    const Eigen::Vector2d en = pixel_offset_to_world(pixel - mosaic_center(mosaic), mosaic);
    const geo::MercatorPoint c = geo::latlon_to_mercator(mosaic.center);
    const double k = geo::mercator_scale(mosaic.center.latitude);
    return geo::mercator_to_latlon({c.x + en.x() * k, c.y + en.y() * k});
}

ExportedAlignment export_alignment(const Sim2Alignment& a, const tiles::SatMosaic& mosaic, const Eigen::Vector3d& ref) {
    a.validate();
    const Eigen::Vector2d px = apply_sim2(a, ref, mosaic);
    ExportedAlignment e;
    e.pose = pixel_to_geo(px, mosaic);
    e.pose.heading = geo::wrap_degrees(a.theta_deg + mosaic.orientation_deg);
    e.scale = a.scale;
    e.inside_mosaic = px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= mosaic.pixels.width() - 1 &&
                      px.y() <= mosaic.pixels.height() - 1;
    return e;
}

Sim2Alignment import_alignment(const ExportedAlignment& e, const tiles::SatMosaic& mosaic, const Eigen::Vector3d& ref) {
    Sim2Alignment a;
    a.scale = e.scale;
    a.theta_deg = geo::wrap_degrees(e.pose.heading - mosaic.orientation_deg);
    const Eigen::Vector2d px = geo_to_pixel(e.pose, mosaic);
    const Eigen::Vector2d t = px - mosaic_center(mosaic) - rotate_scale(a, ref.head<2>(), mosaic.resolution);
    a.tx = t.x();
    a.ty = t.y();
    a.validate();
    return a;
}

std::string to_json(const Sim2Alignment& a) {
    return nlohmann::json{{"tx", a.tx}, {"ty", a.ty}, {"theta", a.theta_deg}, {"scale", a.scale}}.dump();
}

Sim2Alignment alignment_from_json(const std::string& text) {
    Sim2Alignment a;
    try {
        const auto j = nlohmann::json::parse(text);
        a.tx = j.at("tx").get<double>();
        a.ty = j.at("ty").get<double>();
        a.theta_deg = j.at("theta").get<double>();
        a.scale = j.at("scale").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("alignment JSON: ") + e.what());
    }
    a.validate();
    return a;
}

std::string to_json(const ExportedAlignment& e) {
    return nlohmann::json{{"lat", e.pose.latitude},
                          {"lon", e.pose.longitude},
                          {"heading", e.pose.heading},
                          {"scale", e.scale},
                          {"inside_mosaic", e.inside_mosaic}}
        .dump();
}

} // namespace xvs::align
