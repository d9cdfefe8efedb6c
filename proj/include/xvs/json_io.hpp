// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "xvs/geodesy.hpp"

namespace xvs::geo {

inline void to_json(nlohmann::json& j, const GeoPose& p) {
    j = nlohmann::json{{"lat", p.latitude}, {"lon", p.longitude}, {"heading", p.heading}};
}

inline void from_json(const nlohmann::json& j, GeoPose& p) {
    p.latitude = j.at("lat").get<double>();
    p.longitude = j.at("lon").get<double>();
    p.heading = j.value("heading", 0.0);
}

} // namespace xvs::geo
