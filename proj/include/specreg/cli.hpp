/**
 * @file cli.hpp
 * @brief Subcommands behind the specreg executable: register, evaluate,
 *        synth and overlay.
 *
 * Exit codes: 0 success, 1 usage or input error, 2 processing error.
 */
#pragma once

#include "evaluate.hpp"
#include "io.hpp"
#include "pipeline.hpp"
#include "synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace specreg {

/// Bad flags, unreadable inputs or malformed side files (exit 1).
class UsageError : public Error {
public:
    using Error::Error;
};

namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline void write_trace_csv(const fs::path& path, const OptimizerTrace& trace) {
    std::string s = "iteration,level,objective,step,grad_norm\n";
    for (const auto& e : trace.entries)
        s += std::to_string(e.iteration) + "," + std::to_string(e.level) + "," + format_real(e.objective) + "," +
             format_real(e.step) + "," + format_real(e.grad_norm) + "\n";
    write_atomic(path, s);
}

/// Manifests are recognized by extension; everything else is a single image.
inline bool is_manifest(const fs::path& p) {
    const std::string e = detail::lower_ext(p);
    return e == ".txt" || e == ".lst" || e == ".manifest";
}

template <class F>
auto as_input(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const IoError& e) {
        throw UsageError(e.what());
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir.string() + "'");
}

inline json transform_json(const HomogeneousTransform2D& t) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) rows.push_back({t(r, 0), t(r, 1), t(r, 2)});
    return rows;
}

inline json config_json(const RegistrationConfig& c) {
    json j;
    j["measure"] = std::string(to_string(c.similarity.measure));
    j["bins"] = c.similarity.bins;
    j["rc_alpha"] = c.similarity.rc_alpha;
    j["lmi_window"] = c.similarity.lmi_window;
    j["lmi_stride"] = c.similarity.lmi_stride;
    j["max_iters"] = c.optimizer.max_iters;
    j["initial_step"] = c.optimizer.initial_step;
    j["backtrack_factor"] = c.optimizer.backtrack_factor;
    j["min_step"] = c.optimizer.min_step;
    j["rel_tol"] = c.optimizer.rel_tol;
    j["pyramid_levels"] = c.optimizer.pyramid_levels;
    j["prereg"] = c.prereg_enabled;
    j["moving_channel"] = c.moving_channel ? json(*c.moving_channel) : json("mean");
    j["coarse_spacing"] = c.coarse_spacing;
    return j;
}

inline json result_json(const RegistrationResult& r) {
    json j;
    j["prereg"] = transform_json(r.prereg);
    j["score_before"] = r.score_before;
    j["score_after"] = r.score_after;
    j["iterations"] = r.trace.iterations();
    j["aborted"] = r.trace.aborted;
    j["grid"] = {{"nx", r.grid.nx}, {"ny", r.grid.ny}, {"spacing", r.grid.spacing_x}};
    return j;
}

/// Flags shared by register and synth that shape the registration config.
struct ConfigFlags {
    std::string config;
    std::string measure;
    std::string channel;
    int levels = 0;

    void add(CLI::App& app) {
        app.add_option("--config", config, "key = value configuration file");
        app.add_option("--measure", measure, "ssd|cc|cr|mi|nmi|lmi|rc");
        app.add_option("--channel", channel, "moving channel index or 'mean'");
        app.add_option("--levels", levels, "pyramid levels")->check(CLI::PositiveNumber);
    }

    RegistrationConfig build() const {
        return as_input([&] {
            RegistrationConfig cfg;
            if (!config.empty()) cfg = load_config(config);
            if (!measure.empty()) apply_setting(cfg, "measure", measure);
            if (!channel.empty()) apply_setting(cfg, "channel", channel);
            if (levels > 0) cfg.optimizer.pyramid_levels = levels;
            validate(cfg);
            return cfg;
        });
    }
};

// -----------------------------------------------------------------------------
// register
// -----------------------------------------------------------------------------

struct RegisterArgs {
    std::string ref, moving, out_dir;
    ConfigFlags cf;
    std::uint64_t seed = 0;
};

inline void cmd_register(const RegisterArgs& a, std::ostream& out) {
    const RegistrationConfig cfg = a.cf.build();
    const Image2D ref = as_input([&] { return load_image(a.ref); });
    SpectralStack stack = as_input([&] {
        if (is_manifest(a.moving)) return load_stack(a.moving);
        return SpectralStack{{load_image(a.moving)}, {}};
    });
    const Image2D mov = as_input([&] { return moving_image(stack, cfg.moving_channel); });
    ensure_dir(a.out_dir);
    const fs::path dir = a.out_dir;

    const RegistrationResult r = register_images(ref, mov, cfg);
    save_image(r.registered.image, dir / "registered.png");
    if (stack.channels.size() > 1) {
        const WarpedStack ws = warp_stack(stack, r);
        for (std::size_t k = 0; k < ws.stack.channels.size(); ++k)
            save_image(ws.stack.channels[k], dir / ("registered_" + std::to_string(k) + ".png"));
    }
    save_field(total_displacement(r.prereg, r.dense), dir / "field.dfld");
    write_trace_csv(dir / "trace.csv", r.trace);
    json j;
    j["measure"] = std::string(to_string(cfg.similarity.measure));
    j["seed"] = a.seed;
    j["config"] = config_json(cfg);
    j["result"] = result_json(r);
    write_json(dir / "report.json", j);
    out << "registered: score " << r.score_before << " -> " << r.score_after << " (" << r.trace.iterations()
        << " iterations)\n";
}

// -----------------------------------------------------------------------------
// evaluate
// -----------------------------------------------------------------------------

/// Region file: one `name x y w h` per line; the name may contain spaces,
/// blank lines and '#' comments are skipped.
inline std::vector<RegionSpec> parse_regions(const std::string& text, int width, int height) {
    std::vector<RegionSpec> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        const std::string where = "regions line " + std::to_string(lineno);
        if (tok.size() < 5) throw UsageError(where + ": expected 'name x y w h'");
        RegionSpec r;
        int* fields[4] = {&r.x, &r.y, &r.w, &r.h};
        for (int k = 0; k < 4; ++k) {
            const std::string& t = tok[tok.size() - 4 + k];
            std::size_t used = 0;
            try {
                *fields[k] = std::stoi(t, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != t.size()) throw UsageError(where + ": '" + t + "' is not an integer");
        }
        for (std::size_t k = 0; k + 4 < tok.size(); ++k) r.name += (k ? " " : "") + tok[k];
        try {
            validate(r, width, height);
        } catch (const InvalidArgument& e) {
            throw UsageError(where + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) throw UsageError("regions file lists no regions");
    return out;
}

inline std::string file_stem_for(const std::string& name) {
    std::string s;
    for (char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
    return s;
}

inline RgbImage crop(const RgbImage& img, const RegionSpec& r) {
    RgbImage out{r.w, r.h, {}};
    out.pixels.reserve(static_cast<std::size_t>(r.w) * r.h);
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) out.pixels.push_back(img.at(x, y));
    return out;
}

inline constexpr double kEdgePercentile = 90.0;

struct EvaluateArgs {
    std::string ref, before, after, regions, out_dir;
    double percentile = kEdgePercentile;
};

inline void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const Image2D ref = as_input([&] { return load_image(a.ref); });
    const Image2D before = as_input([&] { return load_image(a.before); });
    const Image2D after = as_input([&] { return load_image(a.after); });
    if (!ref.same_shape(before) || !ref.same_shape(after))
        throw UsageError("evaluate: --ref, --before and --after must have equal dimensions");
    const std::string text = as_input([&] {
        const auto b = read_file_bytes(a.regions);
        return std::string(b.begin(), b.end());
    });
    const auto regions = parse_regions(text, ref.width(), ref.height());
    ensure_dir(a.out_dir);
    const fs::path dir = a.out_dir;

    const EvaluationReport rep = region_report(ref, before, after, regions);
    const RgbImage overlay = edge_overlay(sobel_edge_map(ref, a.percentile), sobel_edge_map(after, a.percentile));
    for (std::size_t k = 0; k < regions.size(); ++k)
        save_rgb_png(crop(overlay, regions[k]),
                     dir / ("overlay_" + std::to_string(k) + "_" + file_stem_for(regions[k].name) + ".png"));
    write_json(dir / "report.json", to_json(rep));
    for (const auto& row : rep.rows)
        out << row.name << ": dsc " << row.dsc_before << " -> " << row.dsc_after << "\n";
}

// -----------------------------------------------------------------------------
// synth
// -----------------------------------------------------------------------------

struct SynthArgs {
    std::string image, out_dir;
    ConfigFlags cf;
    std::uint64_t seed = 1;
    double max_disp = 8.0;
    double spacing = 64.0;
    int size = 512;
    double rotation = 0.0, shift_x = 0.0, shift_y = 0.0;
    double bias = 0.0, noise = 0.0;
};

inline void cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (!(a.max_disp >= 0.0 && a.max_disp < 0.4 * a.spacing))
        throw UsageError("synth: --max-disp must be in [0, 0.4 * spacing) to keep the warp fold-free");
    if (!(a.bias >= 0.0 && a.bias < 1.0)) throw UsageError("synth: --bias must be in [0,1)");
    if (!(a.noise >= 0.0)) throw UsageError("synth: --noise must be >= 0");
    RegistrationConfig cfg = a.cf.build();
    if (a.rotation == 0.0 && a.shift_x == 0.0 && a.shift_y == 0.0 && a.cf.config.empty()) cfg.prereg_enabled = false;
    const Image2D img = as_input([&] {
        if (!a.image.empty()) return load_image(a.image);
        return make_document(a.size, a.size, a.seed);
    });
    ensure_dir(a.out_dir);
    const fs::path dir = a.out_dir;

    const SyntheticValidation v = synthetic_validation(img, a.seed, cfg, {a.bias, a.noise}, a.max_disp, a.spacing,
                                                       a.rotation, a.shift_x, a.shift_y);
    if (a.image.empty()) save_image(img, dir / "reference.png");
    save_image(v.pair.moving, dir / "warped.png");
    save_image(v.result.registered.image, dir / "registered.png");
    save_field(v.pair.truth, dir / "truth.dfld");
    save_field(total_displacement(v.result.prereg, v.result.dense), dir / "recovered.dfld");
    write_trace_csv(dir / "trace.csv", v.result.trace);
    json j = to_json(v.report);
    j["measure"] = std::string(to_string(cfg.similarity.measure));
    j["seed"] = a.seed;
    j["max_disp"] = a.max_disp;
    j["distortion"] = {{"rotation_deg", a.rotation}, {"shift_x", a.shift_x}, {"shift_y", a.shift_y},
                       {"bias_amplitude", a.bias},   {"noise_sigma", a.noise}};
    j["result"] = result_json(v.result);
    write_json(dir / "report.json", j);
    out << "field error: mean " << v.report.field->mean << " px, max " << v.report.field->max << " px\n";
}

// -----------------------------------------------------------------------------
// overlay
// -----------------------------------------------------------------------------

struct OverlayArgs {
    std::string ref, moving, out;
    double percentile = kEdgePercentile;
};

inline void cmd_overlay(const OverlayArgs& a, std::ostream& out) {
    const Image2D ref = as_input([&] { return load_image(a.ref); });
    const Image2D mov = as_input([&] { return load_image(a.moving); });
    if (!ref.same_shape(mov)) throw UsageError("overlay: --ref and --moving must have equal dimensions");
    const RgbImage o = edge_overlay(sobel_edge_map(ref, a.percentile), sobel_edge_map(mov, a.percentile));
    const fs::path p = a.out;
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    save_rgb_png(o, p);
    out << "wrote " << p.string() << "\n";
}

} // namespace cli

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Multimodal non-rigid image registration"};
    app.require_subcommand(1);

    cli::RegisterArgs ra;
    auto* reg = app.add_subcommand("register", "register a moving image or stack to a reference");
    reg->add_option("--ref", ra.ref, "reference image")->required();
    reg->add_option("--moving", ra.moving, "moving image or stack manifest (.txt)")->required();
    reg->add_option("--out-dir", ra.out_dir, "output directory")->required();
    reg->add_option("--seed", ra.seed, "recorded in the report");
    ra.cf.add(*reg);

    cli::EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "Dice report and edge overlays per region");
    ev->add_option("--ref", ea.ref, "reference image")->required();
    ev->add_option("--before", ea.before, "moving image before registration")->required();
    ev->add_option("--after", ea.after, "registered image")->required();
    ev->add_option("--regions", ea.regions, "region file: name x y w h per line")->required();
    ev->add_option("--out-dir", ea.out_dir, "output directory")->required();
    ev->add_option("--percentile", ea.percentile, "Sobel edge percentile")->check(CLI::Range(0.0, 100.0));

    cli::SynthArgs sa;
    auto* sy = app.add_subcommand("synth", "deform an image with a known field and register it back");
    sy->add_option("--image,--ref", sa.image, "input image (default: generated document)");
    sy->add_option("--out-dir", sa.out_dir, "output directory")->required();
    sy->add_option("--seed", sa.seed, "deformation seed");
    sy->add_option("--max-disp", sa.max_disp, "max control displacement per component, px");
    sy->add_option("--spacing", sa.spacing, "truth grid spacing, px")->check(CLI::PositiveNumber);
    sy->add_option("--size", sa.size, "generated document side, px")->check(CLI::Range(32, 8192));
    sy->add_option("--rotation", sa.rotation, "rigid rotation, degrees");
    sy->add_option("--shift-x", sa.shift_x, "rigid shift, px");
    sy->add_option("--shift-y", sa.shift_y, "rigid shift, px");
    sy->add_option("--bias", sa.bias, "multiplicative bias amplitude");
    sy->add_option("--noise", sa.noise, "Gaussian noise sigma");
    sa.cf.add(*sy);

    cli::OverlayArgs oa;
    auto* ov = app.add_subcommand("overlay", "color-coded Sobel edge overlay of two images");
    ov->add_option("--ref", oa.ref, "reference image")->required();
    ov->add_option("--moving", oa.moving, "registered image")->required();
    ov->add_option("--out", oa.out, "output PNG")->required();
    ov->add_option("--percentile", oa.percentile, "Sobel edge percentile")->check(CLI::Range(0.0, 100.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*reg) cli::cmd_register(ra, out);
        else if (*ev) cli::cmd_evaluate(ea, out);
        else if (*sy) cli::cmd_synth(sa, out);
        else cli::cmd_overlay(oa, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace specreg
