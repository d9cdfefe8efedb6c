// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "xvs/cross_view.hpp"
#include "xvs/diff_render.hpp"
#include "xvs/json_io.hpp"
#include "xvs/losses.hpp"
#include "xvs/metrics.hpp"
#include "xvs/ply_io.hpp"
#include "xvs/sat_tiles.hpp"
#include "xvs/scene_io.hpp"
#include "xvs/service.hpp"
#include "xvs/views.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xvs;

namespace {

// ---------------------------------------------------------------------------
// Configuration: command-line flags override XVS_<NAME> environment
// variables, which override the TOML config file, which overrides defaults.

std::string env_name(const std::string& long_name) {
    std::string s = "XVS_" + long_name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return c == '-' ? '_' : std::toupper(c); });
    return s;
}

std::optional<fs::path> find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) {
            return fs::path(argv[i + 1]);
        }
        if (a.rfind("--config=", 0) == 0) {
            return fs::path(a.substr(9));
        }
    }
    if (const char* e = std::getenv("XVS_CONFIG"); e && *e) {
        return fs::path(e);
    }
    return std::nullopt;
}

void add_env_names(CLI::App& app) {
    for (CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (!opt->get_lnames().empty() && name != "help" && name != "config") {
            opt->envname(env_name(opt->get_lnames().front()));
        }
    }
    for (CLI::App* sub : app.get_subcommands({})) {
        add_env_names(*sub);
    }
}

/// Keys at the top level apply to every subcommand that defines them; keys in
/// a [subcommand] table apply to that subcommand only.
void apply_config_file(CLI::App& app, const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw CLI::FileError::Missing(path.string());
    }
    const std::vector<CLI::ConfigItem> items = CLI::ConfigTOML().from_config(in);
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--" || item.inputs.empty()) {
            continue;
        }
        std::vector<CLI::App*> scopes;
        if (item.parents.empty()) {
            scopes = app.get_subcommands({});
        } else if (item.parents.size() == 1) {
            if (CLI::App* sub = app.get_subcommand_no_throw(item.parents.front())) {
                scopes.push_back(sub);
            }
        }
        bool used = false;
        for (CLI::App* scope : scopes) {
            CLI::Option* opt = scope->get_option_no_throw("--" + item.name);
            if (!opt) {
                continue;
            }
            std::string value = item.inputs.front();
            for (std::size_t i = 1; i < item.inputs.size(); ++i) {
                value += " " + item.inputs[i];
            }
            opt->default_val(value);
            used = true;
        }
        if (!used) {
            throw CLI::ConversionError(path.string() + ": unknown configuration key '" + item.fullname() + "'");
        }
    }
}

// ---------------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    write_file_atomic(path, text);
}

void emit_json(const std::string& out, const json& j) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << "\n";
    } else {
        write_text(out, j.dump(2) + "\n");
        spdlog::info("wrote {}", out);
    }
}

struct FetchSatArgs {
    double lat = 0.0;
    double lon = 0.0;
    double heading = 0.0;
    double ppm = tiles::kDefaultResolution;
    int size = tiles::kDefaultMosaicSize;
    double extent = 0.0;
    std::string provider;
    std::string providers_file = "providers.json";
    std::string cache_dir = ".xvs_cache";
    std::string out = "mosaic.png";
};

int run_fetch_sat(const FetchSatArgs& a) {
    const tiles::ProviderConfig provider = tiles::load_provider(a.providers_file, a.provider);
    tiles::FetchOptions opts;
    opts.cache_dir = a.cache_dir;
    tiles::FetchStats stats;
    const geo::GeoPose center{a.lat, a.lon, 0.0};
    geo::validate(center);
    tiles::SatMosaic m = tiles::fetch_mosaic(center, a.ppm, a.size, provider, opts, &stats);
    spdlog::info("zoom {}: {} cached, {} downloaded, {} HTTP requests", m.zoom, stats.cache_hits, stats.downloaded,
                 stats.http_requests);
    if (a.heading != 0.0) {
        m = tiles::rotate_to_heading(m, a.heading);
    }
    if (a.extent > 0.0) {
        m = tiles::resample_to_extent(m, a.extent, a.size);
    }
    if (fs::path(a.out).has_parent_path()) {
        fs::create_directories(fs::path(a.out).parent_path());
    }
    tiles::save_mosaic(m, a.out);
    spdlog::info("wrote {} ({:.1f} m across)", a.out, m.extent());
    return 0;
}

struct RenderArgs {
    std::string scene;
    std::string splats;
    std::string out_dir = "renders";
    bool depth = false;
};

int run_render(const RenderArgs& a) {
    const SceneDescription scene = load_scene_description(a.scene);
    const GaussianSet gs = read_ply(a.splats);
    RenderConfig cfg;
    cfg.background = scene.background;
    fs::create_directories(a.out_dir);
    for (const auto& v : scene.views) {
        const RenderOutput out = render(gs, v.camera, cfg);
        write_image(out.color, fs::path(a.out_dir) / (v.name + ".png"));
        if (a.depth) {
            write_npy(out.depth, fs::path(a.out_dir) / (v.name + ".depth.npy"));
            write_npy(out.alpha, fs::path(a.out_dir) / (v.name + ".alpha.npy"));
        }
        spdlog::info("{}: {} splats rasterized, {} culled", v.name, out.diagnostics.rasterized,
                     out.diagnostics.culled);
    }
    return 0;
}

struct FitArgs {
    std::string scene;
    std::string init;
    std::string out = "fitted.ply";
    std::string trace;
    FitConfig config;
};

int run_fit(const FitArgs& a) {
    const SceneDescription scene = load_scene_description(a.scene);
    const std::vector<FitTarget> targets = load_fit_targets(scene);
    FitConfig cfg = a.config;
    cfg.render.background = scene.background;
    const GaussianSet init = read_ply(a.init);
    std::vector<double> trace;
    int status = 0;
    GaussianSet fitted;
    try {
        FitResult r = fit_scene(targets, init, cfg);
        trace = std::move(r.loss_trace);
        fitted = std::move(r.gaussians);
    } catch (const FitDivergedError& e) {
        spdlog::error("{}", e.what());
        trace = e.trace();
        status = 3;
    }
    if (!a.trace.empty()) {
        std::string csv = "step,loss\n";
        for (std::size_t i = 0; i < trace.size(); ++i) {
            csv += std::to_string(i) + "," + fmt::format("{:.17g}", trace[i]) + "\n";
        }
        write_text(a.trace, csv);
    }
    if (status != 0) {
        return status;
    }
    write_ply(fitted, a.out);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& t : targets) {
        worst = std::min(worst, metrics::psnr(render(fitted, t.camera, cfg.render).color, t.image));
    }
    spdlog::info("wrote {} after {} steps, min training PSNR {:.2f} dB", a.out, trace.size(), worst);
    return 0;
}

struct SelectViewsArgs {
    std::string sparse;
    std::string preset = "dl3dv";
    int n_context = 2;
    bool all_prior = false;
    std::string out;
};

int run_select_views(const SelectViewsArgs& a) {
    const scene::SparseScene s = scene::parse_sparse(a.sparse);
    scene::validate(s);
    scene::SplitConfig cfg;
    if (a.preset == "dl3dv") {
        cfg = scene::SplitConfig::dl3dv(a.n_context);
    } else if (a.preset == "tanks_and_temples" || a.preset == "tnt") {
        cfg = scene::SplitConfig::tanks_and_temples(a.n_context);
    } else {
        throw CLI::ValidationError("--preset", "must be dl3dv or tanks_and_temples");
    }
    cfg.against_all_prior = a.all_prior;
    const scene::ViewSplit split = scene::select_splits(s, cfg);
    std::vector<std::string> names;
    for (int id : s.ordered_image_ids()) {
        names.push_back(s.images.at(id).name);
    }
    emit_json(a.out, json::parse(scene::split_to_json(split, names)));
    return 0;
}

struct MetricsArgs {
    std::string pred;
    std::string gt;
    std::string out;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int run_metrics(const MetricsArgs& a) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.gt)) {
        const std::string ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) {
            files.push_back(e.path().filename());
        }
    }
    std::sort(files.begin(), files.end());
    json per = json::array();
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    int finite = 0;
    int count = 0;
    for (const auto& f : files) {
        const fs::path pred = fs::path(a.pred) / f;
        if (!fs::exists(pred)) {
            spdlog::warn("no prediction for {}", f.string());
            continue;
        }
        const metrics::MetricReport r = metrics::evaluate(read_image(pred), read_image(fs::path(a.gt) / f));
        per.push_back({{"name", f.string()}, {"psnr", finite_or_null(r.psnr)}, {"ssim", r.ssim}});
        if (std::isfinite(r.psnr)) {
            psnr_sum += r.psnr;
            ++finite;
        }
        ssim_sum += r.ssim;
        ++count;
    }
    if (count == 0) {
        throw std::runtime_error("metrics: no matching image pairs between " + a.pred + " and " + a.gt);
    }
    emit_json(a.out, {{"images", per},
                      {"mean", {{"psnr", finite > 0 ? json(psnr_sum / finite) : json(nullptr)}, {"ssim", ssim_sum / count}}},
                      {"count", count}});
    return 0;
}

struct LossReportArgs {
    std::string terms;
    std::vector<std::string> inline_terms;
    loss::LossWeights weights;
};

int run_loss_report(const LossReportArgs& a) {
    std::map<std::string, double*> fields;
    loss::LossTerms t;
    fields = {{"cam", &t.cam},
              {"depth", &t.depth},
              {"consistency", &t.consistency},
              {"height", &t.height},
              {"rgb_ground", &t.rgb_ground},
              {"rgb_combined", &t.rgb_combined},
              {"rgb_sat", &t.rgb_sat},
              {"sky_depth", &t.sky_depth},
              {"sky_alpha", &t.sky_alpha},
              {"bev", &t.bev}};
    const auto set = [&](const std::string& key, double v) {
        const auto it = fields.find(key);
        if (it == fields.end()) {
            throw CLI::ValidationError("loss term", "unknown term '" + key + "'");
        }
        *it->second = v;
    };
    if (!a.terms.empty()) {
        std::ifstream in(a.terms);
        if (!in) {
            throw CLI::FileError::Missing(a.terms);
        }
        const json terms = json::parse(in);
        for (const auto& [k, v] : terms.items()) {
            set(k, v.get<double>());
        }
    }
    for (const auto& kv : a.inline_terms) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw CLI::ValidationError("--term", "expected name=value, got '" + kv + "'");
        }
        set(kv.substr(0, eq), std::stod(kv.substr(eq + 1)));
    }
    const loss::TotalLoss total = loss::total_loss(t, a.weights);
    json breakdown = json::object();
    for (const auto& [name, v] : total.breakdown) {
        breakdown[name] = v;
    }
    emit_json("", {{"total", total.total}, {"breakdown", breakdown}});
    return 0;
}

struct SplatFromHeightArgs {
    std::string heightmap;
    std::string colors;
    std::string out = "splats.ply";
    SplatDefaults defaults;
};

int run_splat_from_height(const SplatFromHeightArgs& a) {
    const HeightMapFile hm = read_heightmap(a.heightmap);
    const Image colors = read_image(a.colors);
    const GaussianSet gs = heightmap_to_gaussians(hm.heightmap, colors, a.defaults);
    write_ply(gs, a.out);
    spdlog::info("wrote {} Gaussians to {}", gs.size(), a.out);
    return 0;
}

struct ServeAlignArgs {
    service::ServerConfig server;
    std::string mosaic;
};

service::AlignServer* g_server = nullptr;

int run_serve_align(ServeAlignArgs a) {
    scene::SparseScene s = scene::parse_sparse(a.server.scene_dir);
    scene::validate(s);
    tiles::SatMosaic m = tiles::load_mosaic(a.mosaic);
    service::AlignServer server(a.server, std::move(s), std::move(m));
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) {
            g_server->stop();
        }
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) {
            g_server->stop();
        }
    });
    spdlog::info("starting alignment service on http://{}:{} (state in {})", a.server.host,
                 a.server.port == 0 ? std::string("<auto>") : std::to_string(a.server.port),
                 server.alignment_path().string());
    server.run();
    g_server = nullptr;
    return 0;
}

struct PerturbArgs {
    double lat = 0.0;
    double lon = 0.0;
    double heading = 0.0;
    double sigma_t = 0.0;
    double sigma_r = 0.0;
    std::uint64_t seed = 0;
};

int run_perturb(const PerturbArgs& a) {
    const geo::GeoPose p{a.lat, a.lon, a.heading};
    geo::validate(p);
    const geo::GeoPose q = scene::perturb_geopose(p, a.sigma_t, a.sigma_r, a.seed);
    emit_json("", json(q));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("xvs"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"xvs: cross-view Gaussian splatting toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path,
                   "TOML config file (also XVS_CONFIG). Precedence: flags > XVS_<NAME> env > config file");
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->envname("XVS_LOG_LEVEL");

    FetchSatArgs fetch;
    auto* fetch_cmd = app.add_subcommand("fetch-sat", "Fetch a north-up satellite mosaic and rotate it to a heading");
    fetch_cmd->add_option("--lat", fetch.lat)->required();
    fetch_cmd->add_option("--lon", fetch.lon)->required();
    fetch_cmd->add_option("--heading", fetch.heading, "Degrees clockwise from north")->capture_default_str();
    fetch_cmd->add_option("--ppm", fetch.ppm, "Pixels per meter")->capture_default_str()->check(CLI::PositiveNumber);
    fetch_cmd->add_option("--size", fetch.size, "Mosaic side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    fetch_cmd->add_option("--extent", fetch.extent, "Resample to this many meters across (0 keeps ppm)");
    fetch_cmd->add_option("--provider", fetch.provider, "Provider name in the providers file");
    fetch_cmd->add_option("--providers-file", fetch.providers_file, "JSON provider configuration")
        ->capture_default_str();
    fetch_cmd->add_option("--cache-dir", fetch.cache_dir)->capture_default_str();
    fetch_cmd->add_option("--out", fetch.out)->capture_default_str();

    RenderArgs rend;
    auto* render_cmd = app.add_subcommand("render", "Render splats from every camera of a scene description");
    render_cmd->add_option("--scene", rend.scene, "scene.json")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--splats", rend.splats, "Splat PLY")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--out-dir", rend.out_dir)->capture_default_str();
    render_cmd->add_flag("--depth", rend.depth, "Also write depth and alpha .npy files");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit splats to the images of a scene description");
    fit_cmd->add_option("--scene", fit.scene, "scene.json")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--init", fit.init, "Initial splat PLY")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--steps", fit.config.steps)->capture_default_str()->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--out", fit.out)->capture_default_str();
    fit_cmd->add_option("--trace", fit.trace, "CSV loss trace");
    fit_cmd->add_option("--seed", fit.config.seed)->capture_default_str();
    fit_cmd->add_option("--views-per-step", fit.config.views_per_step)->capture_default_str();
    fit_cmd->add_option("--lr-mean", fit.config.lr.mean)->capture_default_str();
    fit_cmd->add_option("--lr-sh", fit.config.lr.sh)->capture_default_str();
    fit_cmd->add_option("--lr-opacity", fit.config.lr.opacity)->capture_default_str();
    fit_cmd->add_option("--lr-scale", fit.config.lr.scale)->capture_default_str();
    fit_cmd->add_option("--lr-rotation", fit.config.lr.rotation)->capture_default_str();
    fit_cmd->add_option("--perceptual", fit.config.weights.perceptual, "Weight of the (1 - SSIM) / 2 term")
        ->capture_default_str();

    SelectViewsArgs sel;
    auto* sel_cmd = app.add_subcommand("select-views", "IoU-based context/target split of a COLMAP model");
    sel_cmd->add_option("--sparse", sel.sparse, "COLMAP text model directory")->required()->check(CLI::ExistingDirectory);
    sel_cmd->add_option("--preset", sel.preset, "dl3dv or tanks_and_temples")->capture_default_str();
    sel_cmd->add_option("--n-context", sel.n_context)->capture_default_str()->check(CLI::PositiveNumber);
    sel_cmd->add_flag("--all-prior", sel.all_prior, "Measure context overlap against all prior context frames");
    sel_cmd->add_option("--out", sel.out, "split.json (stdout when omitted)");

    MetricsArgs met;
    auto* met_cmd = app.add_subcommand("metrics", "PSNR and SSIM of predictions against ground truth");
    met_cmd->add_option("--pred", met.pred)->required()->check(CLI::ExistingDirectory);
    met_cmd->add_option("--gt", met.gt)->required()->check(CLI::ExistingDirectory);
    met_cmd->add_option("--out", met.out, "report.json (stdout when omitted)");

    LossReportArgs lr;
    auto* loss_cmd = app.add_subcommand("loss-report", "Weighted total loss with its itemized breakdown");
    loss_cmd->add_option("--terms", lr.terms, "JSON object of unweighted term values")->check(CLI::ExistingFile);
    loss_cmd->add_option("--term", lr.inline_terms, "name=value, repeatable");
    loss_cmd->add_option("--lambda-cam", lr.weights.cam)->capture_default_str();
    loss_cmd->add_option("--lambda-depth", lr.weights.depth)->capture_default_str();
    loss_cmd->add_option("--lambda-consistency", lr.weights.consistency)->capture_default_str();
    loss_cmd->add_option("--lambda-height", lr.weights.height)->capture_default_str();
    loss_cmd->add_option("--lambda-rgb-ground", lr.weights.rgb_ground)->capture_default_str();
    loss_cmd->add_option("--lambda-rgb-combined", lr.weights.rgb_combined)->capture_default_str();
    loss_cmd->add_option("--lambda-rgb-sat", lr.weights.rgb_sat)->capture_default_str();
    loss_cmd->add_option("--lambda-sky", lr.weights.sky)->capture_default_str();
    loss_cmd->add_option("--lambda-bev", lr.weights.bev)->capture_default_str();

    SplatFromHeightArgs sfh;
    auto* sfh_cmd = app.add_subcommand("splat-from-height", "One Gaussian per height-map pixel");
    sfh_cmd->add_option("--heightmap", sfh.heightmap, ".npy height map with JSON sidecar")
        ->required()
        ->check(CLI::ExistingFile);
    sfh_cmd->add_option("--colors", sfh.colors, "Satellite mosaic image")->required()->check(CLI::ExistingFile);
    sfh_cmd->add_option("--out", sfh.out)->capture_default_str();
    sfh_cmd->add_option("--scale-factor", sfh.defaults.scale_factor, "Sigma in mosaic pixels")->capture_default_str();
    sfh_cmd->add_option("--opacity", sfh.defaults.opacity)->capture_default_str()->check(CLI::Range(0.0, 1.0));

    ServeAlignArgs serve;
    std::string scene_dir, images_dir, state_dir, static_dir;
    auto* serve_cmd = app.add_subcommand("serve-align", "HTTP backend for the geoalignment UI");
    serve_cmd->add_option("--scene-dir", scene_dir, "COLMAP text model")->required()->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--mosaic", serve.mosaic, "Mosaic PNG with JSON sidecar")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--images-dir", images_dir, "Ground photos served by /ground");
    serve_cmd->add_option("--state-dir", state_dir, "Directory holding alignment.json (default: scene dir)");
    serve_cmd->add_option("--static-dir", static_dir, "UI bundle served at /");
    serve_cmd->add_option("--host", serve.server.host)->capture_default_str();
    serve_cmd->add_option("--port", serve.server.port)->capture_default_str()->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--seed", serve.server.seed, "Point subsampling seed")->capture_default_str();

    PerturbArgs pert;
    auto* pert_cmd = app.add_subcommand("perturb-gps", "Add Gaussian noise to a GeoPose");
    pert_cmd->add_option("--lat", pert.lat)->required();
    pert_cmd->add_option("--lon", pert.lon)->required();
    pert_cmd->add_option("--heading", pert.heading)->capture_default_str();
    pert_cmd->add_option("--sigma-t", pert.sigma_t, "Meters")->capture_default_str()->check(CLI::NonNegativeNumber);
    pert_cmd->add_option("--sigma-r", pert.sigma_r, "Degrees")->capture_default_str()->check(CLI::NonNegativeNumber);
    pert_cmd->add_option("--seed", pert.seed)->capture_default_str();

    add_env_names(app);
    try {
        if (const auto cfg = find_config_path(argc, argv)) {
            apply_config_file(app, *cfg);
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    serve.server.scene_dir = scene_dir;
    serve.server.images_dir = images_dir;
    serve.server.state_dir = state_dir;
    serve.server.static_dir = static_dir;

    try {
        if (*fetch_cmd) {
            return run_fetch_sat(fetch);
        }
        if (*render_cmd) {
            return run_render(rend);
        }
        if (*fit_cmd) {
            return run_fit(fit);
        }
        if (*sel_cmd) {
            return run_select_views(sel);
        }
        if (*met_cmd) {
            return run_metrics(met);
        }
        if (*loss_cmd) {
            return run_loss_report(lr);
        }
        if (*sfh_cmd) {
            return run_splat_from_height(sfh);
        }
        if (*serve_cmd) {
            return run_serve_align(serve);
        }
        if (*pert_cmd) {
            return run_perturb(pert);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
