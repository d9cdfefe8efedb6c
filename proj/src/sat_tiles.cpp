// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/sat_tiles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

#include <httplib.h>

#include "xvs/json_io.hpp"

namespace xvs::tiles {

namespace {

constexpr double kPi = std::numbers::pi;

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

double tile_lat(int y, int zoom) {
    const double n = kPi - 2.0 * kPi * y / std::ldexp(1.0, zoom);
    return geo::rad2deg(std::atan(std::sinh(n)));
}

struct SplitUrl {
    std::string origin; ///< scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw std::invalid_argument("tile URL lacks a scheme: " + url);
    }
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

// Bilinear lookup in world Mercator pixel space with periodic x.
class WorldSampler {
  public:
    WorldSampler(int zoom, int tile_size, std::map<TileId, Image> tiles)
        : zoom_(zoom), tile_size_(tile_size), world_(tile_size * (1LL << zoom)), tiles_(std::move(tiles)) {}

    long long world() const { return world_; }

    double texel(long long px, long long py, int c) const {
        if (py < 0 || py >= world_) {
            return 0.0;
        }
        px = ((px % world_) + world_) % world_;
        const TileId id{zoom_, static_cast<int>(px / tile_size_), static_cast<int>(py / tile_size_)};
        const auto it = tiles_.find(id);
        if (it == tiles_.end()) {
            return 0.0;
        }
        return it->second.at(static_cast<int>(px % tile_size_), static_cast<int>(py % tile_size_), c);
    }

    double sample(double x, double y, int c) const {
        const double fx0 = std::floor(x);
        const double fy0 = std::floor(y);
        const auto x0 = static_cast<long long>(fx0);
        const auto y0 = static_cast<long long>(fy0);
        const double fx = x - fx0;
        const double fy = y - fy0;
        const double a = texel(x0, y0, c);
        const double b = texel(x0, y0 + 1, c);
        const double top = a + fx * (texel(x0 + 1, y0, c) - a);
        const double bottom = b + fx * (texel(x0 + 1, y0 + 1, c) - b);
        return top + fy * (bottom - top);
    }

  private:
    int zoom_;
    int tile_size_;
    long long world_;
    std::map<TileId, Image> tiles_;
};

struct MosaicGeometry {
    double gx = 0.0;    ///< center in world pixels
    double gy = 0.0;
    double step = 0.0;  ///< world pixels per output pixel
};

MosaicGeometry mosaic_geometry(const geo::GeoPose& center, double resolution, int zoom, int tile_size) {
    if (!(resolution > 0.0)) {
        throw std::invalid_argument("mosaic resolution must be positive");
    }
    const geo::MercatorPoint m = geo::latlon_to_mercator(center);
    const double world = tile_size * std::ldexp(1.0, zoom);
    const double circumference = 2.0 * kPi * geo::kEarthRadius;
    MosaicGeometry g;
    g.gx = (m.x / circumference + 0.5) * world;
    g.gy = (0.5 - m.y / circumference) * world;
    g.step = geo::mercator_scale(center.latitude) * world / (circumference * resolution);
    return g;
}

bool snap_quarter_turn(double heading, double& c, double& s) {
    const double h = geo::wrap_degrees(heading);
    static constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
    for (int k = 0; k < 4; ++k) {
        if (h == 90.0 * k) {
            c = kCos[k];
            s = kSin[k];
            return true;
        }
    }
    return false;
}

std::filesystem::path sidecar(const std::filesystem::path& png) {
    std::filesystem::path p = png;
    return p.replace_extension(".json");
}

} // namespace

std::string TileId::str() const {
    return std::to_string(zoom) + "/" + std::to_string(x) + "/" + std::to_string(y);
}

bool TileBounds::contains(const geo::GeoPose& p) const {
    constexpr double kTol = 1e-12;
    return p.longitude >= west - kTol && p.longitude < east + kTol && p.latitude > south - kTol &&
           p.latitude <= north + kTol;
}

TileId tile_index(const geo::GeoPose& pose, int zoom) {
    if (zoom < 0 || zoom > 30) {
        throw std::domain_error("tile_index: zoom out of range");
    }
    if (!(std::abs(pose.latitude) <= geo::kMaxMercatorLatitude) || !std::isfinite(pose.longitude)) {
        throw std::domain_error("tile_index: pose outside the Web Mercator band");
    }
    const double n = std::ldexp(1.0, zoom);
    const double lat = geo::deg2rad(pose.latitude);
    const double fx = (geo::wrap_longitude(pose.longitude) + 180.0) / 360.0 * n;
    const double fy = (1.0 - std::log(std::tan(lat) + 1.0 / std::cos(lat)) / kPi) / 2.0 * n;
    const int max_index = static_cast<int>(n) - 1;
    return {zoom, std::clamp(static_cast<int>(std::floor(fx)), 0, max_index),
            std::clamp(static_cast<int>(std::floor(fy)), 0, max_index)};
}

TileBounds tile_bounds(const TileId& tile) {
    const double n = std::ldexp(1.0, tile.zoom);
    TileBounds b;
    b.west = tile.x / n * 360.0 - 180.0;
    b.east = (tile.x + 1) / n * 360.0 - 180.0;
    b.north = tile_lat(tile.y, tile.zoom);
    b.south = tile_lat(tile.y + 1, tile.zoom);
    return b;
}

double native_meters_per_pixel(double latitude, int zoom, int tile_size) {
    return 2.0 * kPi * geo::kEarthRadius * std::cos(geo::deg2rad(latitude)) / (tile_size * std::ldexp(1.0, zoom));
}

int select_zoom(double latitude, double target_resolution, int max_zoom, int tile_size) {
    if (!(target_resolution > 0.0)) {
        throw std::invalid_argument("select_zoom: target resolution must be positive");
    }
    const double limit = (1.0 / target_resolution) * (1.0 + 1e-6);
    for (int z = 0; z < max_zoom; ++z) {
        if (native_meters_per_pixel(latitude, z, tile_size) <= limit) {
            return z;
        }
    }
    return std::max(max_zoom, 0);
}

std::string ProviderConfig::url_for(const TileId& tile) const {
    std::string url = url_template;
    url = replace_all(url, "{z}", std::to_string(tile.zoom));
    url = replace_all(url, "{x}", std::to_string(tile.x));
    url = replace_all(url, "{y}", std::to_string(tile.y));
    if (url.find("{api_key}") != std::string::npos) {
        const char* key = api_key_env.empty() ? nullptr : std::getenv(api_key_env.c_str());
        if (key == nullptr) {
            throw FetchError(tile, "provider " + name + " needs an API key in $" + api_key_env);
        }
        url = replace_all(url, "{api_key}", key);
    }
    return url;
}

ProviderConfig load_provider(const std::filesystem::path& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open provider config " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("provider config " + path.string() + ": " + e.what());
    }
    std::string chosen = name;
    if (j.contains("providers")) {
        const auto& all = j.at("providers");
        if (chosen.empty()) {
            if (all.size() != 1) {
                throw std::invalid_argument("provider config lists several providers; pick one by name");
            }
            chosen = all.begin().key();
        }
        if (!all.contains(chosen)) {
            throw std::invalid_argument("unknown provider " + chosen);
        }
        j = all.at(chosen);
    }
    ProviderConfig p;
    try {
        p.name = chosen.empty() ? j.value("name", std::string("default")) : chosen;
        p.url_template = j.at("url_template").get<std::string>();
        p.max_zoom = j.value("max_zoom", 19);
        p.api_key_env = j.value("api_key_env", std::string());
        p.extension = j.value("extension", std::string("png"));
        p.tile_size = j.value("tile_size", kTileSize);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("provider config " + path.string() + ": " + e.what());
    }
    return p;
}

std::filesystem::path TileCache::path(const ProviderConfig& provider, const TileId& tile) const {
    return root_ / provider.name / std::to_string(tile.zoom) / std::to_string(tile.x) /
           (std::to_string(tile.y) + "." + provider.extension);
}

std::optional<std::vector<std::uint8_t>> TileCache::read(const ProviderConfig& provider, const TileId& tile) const {
    const auto p = path(provider, tile);
    if (!std::filesystem::exists(p)) {
        return std::nullopt;
    }
    return read_file_bytes(p);
}

bool TileCache::write(const ProviderConfig& provider, const TileId& tile, const std::vector<std::uint8_t>& bytes) const {
    const auto p = path(provider, tile);
    if (std::filesystem::exists(p)) {
        return false;
    }
    write_file_atomic(p, bytes);
    return true;
}

std::vector<std::vector<std::uint8_t>> fetch_tiles(const std::vector<TileId>& tiles, const ProviderConfig& provider,
                                                   const FetchOptions& options, FetchStats* stats) {
    const TileCache cache(options.cache_dir);
    std::vector<std::vector<std::uint8_t>> out(tiles.size());
    std::vector<std::size_t> misses;
    std::map<TileId, std::size_t> first_index;
    std::vector<std::pair<std::size_t, std::size_t>> duplicates;
    FetchStats local;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const auto [it, fresh] = first_index.emplace(tiles[i], i);
        if (!fresh) {
            duplicates.emplace_back(i, it->second);
            continue;
        }
        if (auto bytes = cache.read(provider, tiles[i])) {
            out[i] = std::move(*bytes);
            ++local.cache_hits;
        } else {
            misses.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> requests{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        std::unique_ptr<httplib::Client> client;
        std::string origin;
        while (true) {
            const std::size_t slot = next.fetch_add(1);
            if (slot >= misses.size()) {
                return;
            }
            {
                std::lock_guard lock(error_mutex);
                if (error) {
                    return;
                }
            }
            const std::size_t i = misses[slot];
            const TileId& tile = tiles[i];
            try {
                const SplitUrl url = split_url(provider.url_for(tile));
                if (!client || origin != url.origin) {
                    origin = url.origin;
                    client = std::make_unique<httplib::Client>(origin);
                    if (!client->is_valid()) {
                        throw FetchError(tile, "unsupported tile endpoint " + origin);
                    }
                    client->set_connection_timeout(options.timeout);
                    client->set_read_timeout(options.timeout);
                    client->set_follow_location(true);
                }
                std::string failure;
                bool ok = false;
                for (int attempt = 0; attempt < std::max(1, options.attempts) && !ok; ++attempt) {
                    if (attempt > 0) {
                        std::this_thread::sleep_for(options.backoff * (1 << (attempt - 1)));
                    }
                    ++requests;
                    const auto res = client->Get(url.path);
                    if (!res) {
                        failure = httplib::to_string(res.error());
                    } else if (res->status != 200) {
                        failure = "HTTP " + std::to_string(res->status);
                    } else {
                        out[i].assign(res->body.begin(), res->body.end());
                        ok = true;
                    }
                }
                if (!ok) {
                    throw FetchError(tile, "tile " + tile.str() + " failed after " +
                                               std::to_string(std::max(1, options.attempts)) + " attempts: " + failure);
                }
                decode_image(out[i]);
                cache.write(provider, tile, out[i]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    const int n_workers = static_cast<int>(std::min<std::size_t>(std::max(1, options.max_in_flight), misses.size()));
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
    for (const auto& [dup, first] : duplicates) {
        out[dup] = out[first];
    }
    local.downloaded = misses.size();
    local.http_requests = requests.load();
    if (stats != nullptr) {
        *stats = local;
    }
    return out;
}

std::vector<TileId> mosaic_tiles(const geo::GeoPose& center, double resolution, int size_px, int zoom, int tile_size) {
    const MosaicGeometry g = mosaic_geometry(center, resolution, zoom, tile_size);
    const double half = size_px / 2;
    const double x0 = g.gx + (0 - half) * g.step - 0.5;
    const double x1 = g.gx + (size_px - 1 - half) * g.step - 0.5;
    const double y0 = g.gy + (0 - half) * g.step - 0.5;
    const double y1 = g.gy + (size_px - 1 - half) * g.step - 0.5;
    const long long n = 1LL << zoom;
    const auto px0 = static_cast<long long>(std::floor(x0));
    const auto px1 = static_cast<long long>(std::floor(x1)) + 1;
    const auto py0 = std::max(0LL, static_cast<long long>(std::floor(y0)));
    const auto py1 = std::min(n * tile_size - 1, static_cast<long long>(std::floor(y1)) + 1);
    const auto floor_div = [](long long a, long long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    std::vector<TileId> out;
    for (long long ty = floor_div(py0, tile_size); ty <= floor_div(py1, tile_size); ++ty) {
        for (long long tx = floor_div(px0, tile_size); tx <= floor_div(px1, tile_size); ++tx) {
            const TileId id{zoom, static_cast<int>(((tx % n) + n) % n), static_cast<int>(ty)};
            if (std::find(out.begin(), out.end(), id) == out.end()) {
                out.push_back(id);
            }
        }
    }
    return out;
}

SatMosaic assemble_mosaic(const geo::GeoPose& center, double resolution, int size_px, int zoom,
                          const TileSource& source, int tile_size) {
    if (size_px <= 0) {
        throw std::invalid_argument("assemble_mosaic: size must be positive");
    }
    std::map<TileId, Image> tiles;
    for (const TileId& id : mosaic_tiles(center, resolution, size_px, zoom, tile_size)) {
        Image img = source(id);
        if (img.width() != tile_size || img.height() != tile_size || img.channels() != 3) {
            throw FormatError("tile " + id.str() + " is not a " + std::to_string(tile_size) + " px RGB tile");
        }
        tiles.emplace(id, std::move(img));
    }
    const WorldSampler sampler(zoom, tile_size, std::move(tiles));
    const MosaicGeometry g = mosaic_geometry(center, resolution, zoom, tile_size);
    SatMosaic m;
    m.pixels = Image(size_px, size_px, 3);
    m.center = center;
    m.center.heading = 0.0;
    m.resolution = resolution;
    m.zoom = zoom;
    const double half = size_px / 2;
    for (int v = 0; v < size_px; ++v) {
        const double sy = g.gy + (v - half) * g.step - 0.5;
        for (int u = 0; u < size_px; ++u) {
            const double sx = g.gx + (u - half) * g.step - 0.5;
            for (int c = 0; c < 3; ++c) {
                m.pixels.at(u, v, c) = sampler.sample(sx, sy, c);
            }
        }
    }
    return m;
}

SatMosaic fetch_mosaic(const geo::GeoPose& center, double resolution, int size_px, const ProviderConfig& provider,
                       const FetchOptions& options, FetchStats* stats) {
    geo::validate(center);
    const int zoom = select_zoom(center.latitude, resolution, provider.max_zoom, provider.tile_size);
    const std::vector<TileId> ids = mosaic_tiles(center, resolution, size_px, zoom, provider.tile_size);
    const auto bytes = fetch_tiles(ids, provider, options, stats);
    std::map<TileId, Image> decoded;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        decoded.emplace(ids[i], decode_image(bytes[i]));
    }
    return assemble_mosaic(
        center, resolution, size_px, zoom, [&](const TileId& id) { return decoded.at(id); }, provider.tile_size);
}

SatMosaic rotate_to_heading(const SatMosaic& mosaic, double heading) {
    const Image& src = mosaic.pixels;
    if (src.width() != src.height()) {
        throw std::invalid_argument("rotate_to_heading: mosaic must be square");
    }
    double c = 0.0;
    double s = 0.0;
    if (!snap_quarter_turn(heading, c, s)) {
        c = std::cos(geo::deg2rad(heading));
        s = std::sin(geo::deg2rad(heading));
    }
    SatMosaic out = mosaic;
    out.pixels = Image(src.width(), src.height(), src.channels());
    out.orientation_deg = geo::wrap_degrees(mosaic.orientation_deg + heading);
    const double cx = src.width() / 2;
    const double cy = src.height() / 2;
    std::vector<double> px(static_cast<std::size_t>(src.channels()));
    for (int v = 0; v < src.height(); ++v) {
        for (int u = 0; u < src.width(); ++u) {
            const double dx = u - cx;
            const double dy = v - cy;
            if (sample_bilinear(src, cx + dx * c - dy * s, cy + dx * s + dy * c, px)) {
                for (int k = 0; k < src.channels(); ++k) {
                    out.pixels.at(u, v, k) = px[static_cast<std::size_t>(k)];
                }
            }
        }
    }
    return out;
}

SatMosaic resample_to_extent(const SatMosaic& mosaic, double extent_m, int size_px) {
    if (!(extent_m > 0.0) || size_px <= 0) {
        throw std::invalid_argument("resample_to_extent: extent and size must be positive");
    }
    const Image& src = mosaic.pixels;
    SatMosaic out = mosaic;
    out.resolution = size_px / extent_m;
    out.pixels = Image(size_px, size_px, src.channels());
    const double ratio = mosaic.resolution / out.resolution;
    const double half_out = size_px / 2;
    const double sx0 = src.width() / 2;
    const double sy0 = src.height() / 2;
    std::vector<double> px(static_cast<std::size_t>(src.channels()));
    for (int v = 0; v < size_px; ++v) {
        for (int u = 0; u < size_px; ++u) {
            if (sample_bilinear(src, sx0 + (u - half_out) * ratio, sy0 + (v - half_out) * ratio, px)) {
                for (int k = 0; k < src.channels(); ++k) {
                    out.pixels.at(u, v, k) = px[static_cast<std::size_t>(k)];
                }
            }
        }
    }
    return out;
}

void save_mosaic(const SatMosaic& mosaic, const std::filesystem::path& png_path) {
    write_image(mosaic.pixels, png_path);
    nlohmann::json j;
    j["center"] = mosaic.center;
    j["resolution_ppm"] = mosaic.resolution;
    j["extent_m"] = mosaic.extent();
    j["zoom"] = mosaic.zoom;
    j["orientation_deg"] = mosaic.orientation_deg;
    write_file_atomic(sidecar(png_path), j.dump(2) + "\n");
}

SatMosaic load_mosaic(const std::filesystem::path& png_path) {
    SatMosaic m;
    m.pixels = read_image(png_path);
    std::ifstream in(sidecar(png_path));
    if (!in) {
        throw FormatError("missing mosaic sidecar " + sidecar(png_path).string());
    }
    try {
        nlohmann::json j;
        in >> j;
        m.center = j.at("center").get<geo::GeoPose>();
        m.resolution = j.at("resolution_ppm").get<double>();
        m.zoom = j.value("zoom", 0);
        m.orientation_deg = j.value("orientation_deg", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad mosaic sidecar: " + std::string(e.what()));
    }
    return m;
}

} // namespace xvs::tiles
