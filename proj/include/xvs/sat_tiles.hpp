// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvs/geodesy.hpp"
#include "xvs/image.hpp"

namespace xvs::tiles {

inline constexpr int kTileSize = 256;
inline constexpr int kDefaultMosaicSize = 512;
inline constexpr double kDefaultResolution = 2.0; ///< pixels per meter
inline constexpr double kEvaluationExtent = 244.0; ///< meters per side

struct TileId {
    int zoom = 0;
    int x = 0;
    int y = 0;

    bool operator==(const TileId&) const = default;
    auto operator<=>(const TileId&) const = default;
    std::string str() const;
};

/// Geographic bounds of a tile in degrees.
struct TileBounds {
    double west = 0.0;
    double east = 0.0;
    double north = 0.0;
    double south = 0.0;

    /// Half-open containment: west <= lon < east and south < lat <= north.
    bool contains(const geo::GeoPose& p) const;
};

/// Standard slippy-map tile containing `pose`; indices are clamped to the grid.
TileId tile_index(const geo::GeoPose& pose, int zoom);
TileBounds tile_bounds(const TileId& tile);

/// Native ground meters per pixel at `latitude` and `zoom`.
double native_meters_per_pixel(double latitude, int zoom, int tile_size = kTileSize);

/// Smallest zoom whose native ground resolution is at most 1/target meters
/// per pixel (relative tolerance 1e-6), clamped to `max_zoom`.
int select_zoom(double latitude, double target_resolution, int max_zoom = 22, int tile_size = kTileSize);

/// Georeferenced satellite image. `orientation_deg` is the heading the image
/// "up" direction points to (0 = north-up).
struct SatMosaic {
    Image pixels;
    geo::GeoPose center;
    double resolution = kDefaultResolution; ///< pixels per meter
    int zoom = 0;
    double orientation_deg = 0.0;

    double extent() const { return pixels.width() / resolution; }
};

struct ProviderConfig {
    std::string name;
    /// URL with {z}, {x}, {y} and optionally {api_key} placeholders.
    std::string url_template;
    int max_zoom = 19;
    std::string api_key_env; ///< environment variable holding the key, may be empty
    std::string extension = "png";
    int tile_size = kTileSize;

    /// Concrete URL for `tile`. Throws if the API key variable is required but unset.
    std::string url_for(const TileId& tile) const;
};

/// JSON provider file: either one provider object or
/// {"providers": {"<name>": {...}}}. Keys: url_template, max_zoom,
/// api_key_env, extension, tile_size.
ProviderConfig load_provider(const std::filesystem::path& path, const std::string& name = "");

class FetchError : public std::runtime_error {
  public:
    FetchError(const TileId& tile, const std::string& what) : std::runtime_error(what), tile_(tile) {}
    const TileId& tile() const { return tile_; }

  private:
    TileId tile_;
};

/// Disk cache laid out as <root>/<provider>/<z>/<x>/<y>.<ext>. Entries are
/// written once through an atomic rename.
class TileCache {
  public:
    explicit TileCache(std::filesystem::path root) : root_(std::move(root)) {}

    std::filesystem::path path(const ProviderConfig& provider, const TileId& tile) const;
    std::optional<std::vector<std::uint8_t>> read(const ProviderConfig& provider, const TileId& tile) const;
    /// Returns false when the entry already existed.
    bool write(const ProviderConfig& provider, const TileId& tile, const std::vector<std::uint8_t>& bytes) const;

  private:
    std::filesystem::path root_;
};

struct FetchOptions {
    std::filesystem::path cache_dir = ".xvs_cache";
    int attempts = 3;
    std::chrono::milliseconds backoff{250};
    int max_in_flight = 8;
    std::chrono::seconds timeout{10};
};

struct FetchStats {
    std::size_t cache_hits = 0;
    std::size_t downloaded = 0;
    std::size_t http_requests = 0;
};

/// Encoded tile bytes for every id, from cache or over HTTP.
std::vector<std::vector<std::uint8_t>> fetch_tiles(const std::vector<TileId>& tiles, const ProviderConfig& provider,
                                                   const FetchOptions& options, FetchStats* stats = nullptr);

using TileSource = std::function<Image(const TileId&)>;

/// Tiles needed to cover a size_px mosaic centered on `center`.
std::vector<TileId> mosaic_tiles(const geo::GeoPose& center, double resolution, int size_px, int zoom,
                                 int tile_size = kTileSize);

/// North-up mosaic bilinearly resampled from Mercator pixel space so that
/// pixel (size/2, size/2) is the center's Mercator position. Pixels outside
/// the world are black.
SatMosaic assemble_mosaic(const geo::GeoPose& center, double resolution, int size_px, int zoom,
                          const TileSource& source, int tile_size = kTileSize);

SatMosaic fetch_mosaic(const geo::GeoPose& center, double resolution, int size_px, const ProviderConfig& provider,
                       const FetchOptions& options = {}, FetchStats* stats = nullptr);

/// Rotates by -heading about (W/2, H/2) so that the heading direction points
/// toward decreasing v. Multiples of 90 degrees are exact pixel permutations.
SatMosaic rotate_to_heading(const SatMosaic& mosaic, double heading);

/// Resamples about the center so the mosaic spans `extent_m` at `size_px`.
SatMosaic resample_to_extent(const SatMosaic& mosaic, double extent_m, int size_px);

/// PNG plus `<stem>.json` sidecar {center, resolution_ppm, extent_m, zoom, orientation_deg}.
void save_mosaic(const SatMosaic& mosaic, const std::filesystem::path& png_path);
SatMosaic load_mosaic(const std::filesystem::path& png_path);

} // namespace xvs::tiles
