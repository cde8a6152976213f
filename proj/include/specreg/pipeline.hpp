/**
 * @file pipeline.hpp
 * @brief Two-stage registration: similarity pre-registration, then B-spline
 *        refinement with a chosen measure. Applies the result to stacks.
 */
#pragma once

#include "bspline.hpp"
#include "error.hpp"
#include "filters.hpp"
#include "image.hpp"
#include "optimize.hpp"
#include "similarity.hpp"
#include "transform.hpp"
#include "warp.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace specreg {

struct RegistrationConfig {
    SimilarityConfig similarity;
    OptimizerConfig optimizer;
    bool prereg_enabled = true;
    std::optional<int> moving_channel;  // nullopt = mean over channels
    double coarse_spacing = 64.0;
};

inline void validate(const RegistrationConfig& c) {
    validate(c.similarity);
    validate(c.optimizer);
    if (!(c.coarse_spacing > 0.0)) throw InvalidArgument("RegistrationConfig: coarse_spacing must be > 0");
    if (c.moving_channel && *c.moving_channel < 0) throw InvalidArgument("RegistrationConfig: negative channel");
}

struct RegistrationResult {
    HomogeneousTransform2D prereg;  // reference pixel -> moving pixel
    ControlGrid grid;
    DeformationField dense;
    OptimizerTrace trace;
    double score_before = 0.0;  // objective after pre-registration
    double score_after = 0.0;   // objective after refinement
    WarpResult registered;      // moving image resampled onto the reference lattice
    int moving_width = 0, moving_height = 0;
};

// =============================================================================
// Pre-registration
// =============================================================================

/// Similarity-transform parameters around a fixed anchor (the reference
/// foreground centroid): p -> s R(theta) (p - anchor) + anchor + t.
struct SimilarityParams {
    double tx = 0.0, ty = 0.0, theta = 0.0, scale = 1.0;
};

inline HomogeneousTransform2D similarity_about(const SimilarityParams& q, Point2 anchor) {
    const double c = q.scale * std::cos(q.theta), s = q.scale * std::sin(q.theta);
    return {{c, -s, anchor.x + q.tx - (c * anchor.x - s * anchor.y), s, c,
             anchor.y + q.ty - (s * anchor.x + c * anchor.y), 0, 0, 1}};
}

namespace detail {

struct Blob {
    Point2 centroid;
    double diagonal = 0.0;
};

inline Blob dark_blob(const Image2D& img) {
    const BinaryMask fg = otsu_mask(img, Foreground::Dark);
    if (fg.count() == 0) throw NumericError("pre_register: empty Otsu foreground");
    double sx = 0.0, sy = 0.0;
    int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            if (fg.at(x, y)) {
                sx += x;
                sy += y;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    const double n = static_cast<double>(fg.count());
    return {{sx / n, sy / n}, std::hypot(x1 - x0 + 1.0, y1 - y0 + 1.0)};
}

inline void require_nonconstant(const Image2D& img, const char* what) {
    const auto [mn, mx] = std::minmax_element(img.data().begin(), img.data().end());
    if (!(*mx > *mn)) throw NumericError(std::string(what) + ": constant image");
}

} // namespace detail

/// Similarity transform mapping reference pixels to moving pixels. Initial
/// guess from the dark Otsu foregrounds (centroids, bounding-box diagonal
/// ratio), refined coarse to fine on negated cross-correlation.
inline HomogeneousTransform2D pre_register(const Image2D& ref, const Image2D& mov, int pyramid_levels = 4) {
    detail::require_nonconstant(ref, "pre_register");
    detail::require_nonconstant(mov, "pre_register");
    const detail::Blob br = detail::dark_blob(ref), bm = detail::dark_blob(mov);
    const Point2 anchor = br.centroid;
    SimilarityParams q{bm.centroid.x - br.centroid.x, bm.centroid.y - br.centroid.y, 0.0, bm.diagonal / br.diagonal};
    // Rotation and log-scale are expressed as displacements at radius r so
    // all four parameters are in pixels.
    const double r = std::max(1.0, 0.5 * br.diagonal);

    const int levels = std::min(usable_pyramid_levels(ref.width(), ref.height(), pyramid_levels),
                                usable_pyramid_levels(mov.width(), mov.height(), pyramid_levels));
    const Pyramid pr = build_pyramid(ref, levels), pm = build_pyramid(mov, levels);
    SimilarityConfig cc;
    cc.measure = Measure::CC;

    auto to_params = [&](const std::vector<double>& v) {
        return SimilarityParams{v[0], v[1], v[2] / r, std::exp(v[3] / r)};
    };
    std::vector<double> x{q.tx, q.ty, 0.0, std::log(q.scale) * r};
    for (int l = levels - 1; l >= 0; --l) {
        const Image2D& I = pr.levels[l];
        const Image2D& J = pm.levels[l];
        const BinaryMask region = full_mask(I.width(), I.height());
        const double px = std::ldexp(1.0, l);  // full-resolution pixels per level pixel
        auto cost = [&](const std::vector<double>& v) {
            const auto t = at_pyramid_level(similarity_about(to_params(v), anchor), l);
            const WarpResult w = warp_image(J, t, nullptr, I.width(), I.height());
            try {
                return evaluate(cc, I, w, region);
            } catch (const NumericError&) {
                return std::numeric_limits<double>::infinity();
            }
        };
        const double h = 0.25 * px;
        auto grad = [&](const std::vector<double>& v) {
            std::vector<double> g(4);
            for (int k = 0; k < 4; ++k) {
                auto a = v, b = v;
                a[k] += h;
                b[k] -= h;
                g[k] = (cost(a) - cost(b)) / (2.0 * h);
            }
            return g;
        };
        const double f0 = cost(x);
        if (!std::isfinite(f0)) throw NumericError("pre_register: no overlap between the images");
        const auto g0 = grad(x);
        double gmax = 0.0;
        for (double v : g0) gmax = std::max(gmax, std::abs(v));
        if (!(gmax > 0.0) || !std::isfinite(gmax)) continue;
        const double scale = 1.0 / gmax;
        OptimizerConfig oc;
        oc.max_iters = 100;
        oc.initial_step = 2.0 * px;
        oc.min_step = 1e-3 * px;
        oc.rel_tol = 1e-9;
        auto res = minimize([&](const std::vector<double>& v) {
                                const double c = cost(v);
                                return std::isfinite(c) ? scale * c : c;
                            },
                            [&](const std::vector<double>& v) {
                                auto g = grad(v);
                                for (auto& e : g) e *= scale;
                                return g;
                            },
                            x, oc, l);
        x = res.x;
    }
    return similarity_about(to_params(x), anchor);
}

// =============================================================================
// Registration
// =============================================================================

/// Intensities used for the measure: histogram measures bin [0,1] data, so
/// both images are min-max normalized for them.
inline Image2D measure_input(const Image2D& img, Measure m) {
    return is_histogram_measure(m) ? normalize_minmax(img) : img;
}

inline RegistrationResult register_images(const Image2D& ref, const Image2D& mov, const RegistrationConfig& cfg) {
    validate(cfg);
    detail::require_nonconstant(ref, "register");
    detail::require_nonconstant(mov, "register");
    const int w = ref.width(), h = ref.height();
    RegistrationResult res;
    res.moving_width = mov.width();
    res.moving_height = mov.height();
    res.prereg = cfg.prereg_enabled ? pre_register(ref, mov, cfg.optimizer.pyramid_levels) : HomogeneousTransform2D{};
    if (warp_image(mov, res.prereg, nullptr, w, h).valid.count() == 0)
        throw NumericError("register: empty overlap after pre-registration");

    const Image2D I = measure_input(ref, cfg.similarity.measure);
    const Image2D J = measure_input(mov, cfg.similarity.measure);
    const BinaryMask region = full_mask(w, h);
    const ControlGrid zero = make_control_grid(w, h, cfg.coarse_spacing);
    res.score_before = objective(cfg.similarity, I, J, res.prereg, zero, region);

    ScheduleResult s = schedule(I, J, cfg.optimizer, cfg.similarity, cfg.coarse_spacing, res.prereg);
    res.trace = std::move(s.trace);
    res.grid = extend_to_cover(s.grid, w, h);
    res.score_after = objective(cfg.similarity, I, J, res.prereg, res.grid, region);
    if (!(res.score_after <= res.score_before)) {
        // Refinement is discarded when it ends worse than the pre-registration.
        for (auto& d : res.grid.disp) d = {};
        res.score_after = res.score_before;
    }
    res.dense = densify(res.grid, w, h);
    res.registered = warp_image(mov, res.prereg, &res.dense);
    return res;
}

/// The image that drives registration: one channel or the channel mean.
inline Image2D moving_image(const SpectralStack& stack, std::optional<int> channel) {
    if (stack.channels.empty()) throw InvalidArgument("moving_image: empty stack");
    if (!channel) return stack.mean();
    if (*channel < 0 || *channel >= static_cast<int>(stack.channels.size()))
        throw InvalidArgument("moving_image: channel index out of range");
    return stack.channels[*channel];
}

struct WarpedStack {
    SpectralStack stack;
    BinaryMask valid;  // shared by all channels
};

/// Applies the registration transform to every channel.
inline WarpedStack warp_stack(const SpectralStack& stack, const RegistrationResult& result) {
    if (stack.channels.empty()) throw InvalidArgument("warp_stack: empty stack");
    for (const auto& c : stack.channels)
        if (!c.same_shape(stack.channels.front())) throw InvalidArgument("warp_stack: channel dimensions differ");
    if (stack.width() != result.moving_width || stack.height() != result.moving_height)
        throw InvalidArgument("warp_stack: stack dimensions differ from the registered moving image");
    WarpedStack out{SpectralStack{std::vector<Image2D>(stack.channels.size()), stack.labels},
                    BinaryMask(result.dense.width, result.dense.height)};
    parallel_for(0, static_cast<int>(stack.channels.size()), [&](int k) {
        WarpResult wr = warp_image(stack.channels[k], result.prereg, &result.dense);
        out.stack.channels[k] = std::move(wr.image);
        if (k == 0) out.valid = std::move(wr.valid);
    });
    return out;
}

// =============================================================================
// Configuration file: `key = value` lines, '#' starts a comment
// =============================================================================

namespace detail {

inline std::string trim(std::string s) {
    auto ns = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), ns));
    s.erase(std::find_if(s.rbegin(), s.rend(), ns).base(), s.end());
    return s;
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || !std::isfinite(d)) throw InvalidArgument("config: '" + key + "' expects a number, got '" + v + "'");
    return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
    const double d = parse_real(key, v);
    if (d != std::floor(d) || std::abs(d) > 1e9) throw InvalidArgument("config: '" + key + "' expects an integer, got '" + v + "'");
    return static_cast<int>(d);
}

inline bool parse_flag(const std::string& key, std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
    if (v == "off" || v == "false" || v == "no" || v == "0") return false;
    throw InvalidArgument("config: '" + key + "' expects on/off, got '" + v + "'");
}

} // namespace detail

/// Sets one configuration key. Keys: measure, bins, rc_alpha, lmi_window,
/// lmi_stride, max_iters, initial_step, backtrack_factor, min_step, rel_tol,
/// pyramid_levels (alias levels), prereg, moving_channel (alias channel),
/// coarse_spacing.
inline void apply_setting(RegistrationConfig& cfg, const std::string& key, const std::string& value) {
    auto& s = cfg.similarity;
    auto& o = cfg.optimizer;
    if (key == "measure") {
        auto m = parse_measure(value);
        if (!m) throw InvalidArgument("config: unknown measure '" + value + "'");
        s.measure = *m;
    } else if (key == "bins") s.bins = detail::parse_int(key, value);
    else if (key == "rc_alpha") s.rc_alpha = detail::parse_real(key, value);
    else if (key == "lmi_window") s.lmi_window = detail::parse_int(key, value);
    else if (key == "lmi_stride") s.lmi_stride = detail::parse_int(key, value);
    else if (key == "max_iters") o.max_iters = detail::parse_int(key, value);
    else if (key == "initial_step") o.initial_step = detail::parse_real(key, value);
    else if (key == "backtrack_factor") o.backtrack_factor = detail::parse_real(key, value);
    else if (key == "min_step") o.min_step = detail::parse_real(key, value);
    else if (key == "rel_tol") o.rel_tol = detail::parse_real(key, value);
    else if (key == "pyramid_levels" || key == "levels") o.pyramid_levels = detail::parse_int(key, value);
    else if (key == "prereg") cfg.prereg_enabled = detail::parse_flag(key, value);
    else if (key == "moving_channel" || key == "channel") {
        if (value == "mean") cfg.moving_channel.reset();
        else cfg.moving_channel = detail::parse_int(key, value);
    } else if (key == "coarse_spacing") cfg.coarse_spacing = detail::parse_real(key, value);
    else throw InvalidArgument("config: unknown key '" + key + "'");
}

inline void apply_config_text(RegistrationConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply_setting(cfg, key, value);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(cfg);
}

inline RegistrationConfig load_config(const std::filesystem::path& path, RegistrationConfig base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(base, ss.str());
    return base;
}

} // namespace specreg
