// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "xvs/splat.hpp"

namespace xvs {

/// Binary little-endian splat PLY with float properties x, y, z, f_dc_0..2,
/// f_rest_0..8 (channel-major), opacity (logit), scale_0..2 (log), rot_0..3
/// (w, x, y, z). Reading accepts any property order and ignores unknown ones.
void write_ply(const GaussianSet& gaussians, const std::filesystem::path& path);
GaussianSet read_ply(const std::filesystem::path& path);

} // namespace xvs
