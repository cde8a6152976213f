/**
 * @file evaluate.hpp
 * @brief Overlap scores, region reports, edge overlays and synthetic
 *        ground-truth validation.
 */
#pragma once

#include "bspline.hpp"
#include "error.hpp"
#include "filters.hpp"
#include "image.hpp"
#include "pipeline.hpp"
#include "synth.hpp"
#include "warp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace specreg {

namespace detail {

struct OverlapCounts {
    std::size_t both = 0, p = 0, s = 0;
};

inline OverlapCounts overlap_counts(const BinaryMask& P, const BinaryMask& S) {
    if (!P.same_shape(S)) throw InvalidArgument("overlap: mask dimensions disagree");
    OverlapCounts c;
    for (std::size_t i = 0; i < P.size(); ++i) {
        c.p += P[i] != 0;
        c.s += S[i] != 0;
        c.both += P[i] && S[i];
    }
    if (c.p + c.s == 0) throw InvalidArgument("overlap: both masks are empty");
    return c;
}

} // namespace detail

/// 2|P and S| / (|P| + |S|).
inline double dice(const BinaryMask& P, const BinaryMask& S) {
    const auto c = detail::overlap_counts(P, S);
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.p + c.s);
}

/// |P and S| / |P or S| (Jaccard).
inline double relative_overlap(const BinaryMask& P, const BinaryMask& S) {
    const auto c = detail::overlap_counts(P, S);
    return static_cast<double>(c.both) / static_cast<double>(c.p + c.s - c.both);
}

inline constexpr Rgb kOverlayRefOnly{255, 0, 0};
inline constexpr Rgb kOverlayRegOnly{0, 0, 255};
inline constexpr Rgb kOverlayBoth{0, 255, 0};
inline constexpr Rgb kOverlayNeither{255, 255, 255};

/// Red: reference edge only, blue: registered edge only, green: both, white: neither.
inline RgbImage edge_overlay(const BinaryMask& ref_edges, const BinaryMask& reg_edges) {
    if (!ref_edges.same_shape(reg_edges)) throw InvalidArgument("edge_overlay: mask dimensions disagree");
    RgbImage out{ref_edges.width(), ref_edges.height(), std::vector<Rgb>(ref_edges.size())};
    for (std::size_t i = 0; i < ref_edges.size(); ++i) {
        const bool a = ref_edges[i], b = reg_edges[i];
        out.pixels[i] = a && b ? kOverlayBoth : a ? kOverlayRefOnly : b ? kOverlayRegOnly : kOverlayNeither;
    }
    return out;
}

// =============================================================================
// Region reports
// =============================================================================

struct RegionSpec {
    std::string name;
    int x = 0, y = 0, w = 0, h = 0;
};

inline void validate(const RegionSpec& r, int width, int height) {
    if (r.w < 1 || r.h < 1) throw InvalidArgument("region '" + r.name + "': width and height must be >= 1");
    if (r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height)
        throw InvalidArgument("region '" + r.name + "': rectangle outside the image");
}

inline RegionSpec full_region(int width, int height, std::string name = "Full area") {
    return {std::move(name), 0, 0, width, height};
}

struct RegionRow {
    std::string name;
    double dsc_before = 0.0;
    double dsc_after = 0.0;
    double relative_overlap_after = 0.0;
};

struct FieldError {
    double mean = 0.0;
    double max = 0.0;
};

struct EvaluationReport {
    std::vector<RegionRow> rows;
    std::optional<FieldError> field;
};

/// Dark-foreground Otsu masks of ref, before and after inside each region,
/// compared by Dice (ref vs before, ref vs after) and relative overlap (ref vs
/// after). When `valid` is given, pixels outside it are left out of every
/// segmentation.
inline EvaluationReport region_report(const Image2D& ref, const Image2D& before, const Image2D& after,
                                      const std::vector<RegionSpec>& regions, const BinaryMask* valid = nullptr) {
    if (!ref.same_shape(before) || !ref.same_shape(after))
        throw InvalidArgument("region_report: image dimensions disagree");
    if (valid && !valid->same_shape(ref)) throw InvalidArgument("region_report: validity mask dimensions disagree");
    EvaluationReport rep;
    for (const auto& r : regions) {
        validate(r, ref.width(), ref.height());
        BinaryMask area(ref.width(), ref.height());
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x) area.set(x, y, !valid || valid->at(x, y));
        const BinaryMask a = otsu_mask(ref, Foreground::Dark, &area);
        const BinaryMask b = otsu_mask(before, Foreground::Dark, &area);
        const BinaryMask c = otsu_mask(after, Foreground::Dark, &area);
        rep.rows.push_back({r.name, dice(a, b), dice(a, c), relative_overlap(a, c)});
    }
    return rep;
}

/// Centered rectangle covering `fraction` of the area (side scaled by sqrt(fraction)).
inline RegionSpec interior_region(int width, int height, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("interior fraction must be in (0,1]");
    const double f = std::sqrt(fraction);
    const int w = std::max(1, static_cast<int>(std::lround(width * f)));
    const int h = std::max(1, static_cast<int>(std::lround(height * f)));
    return {"interior", (width - w) / 2, (height - h) / 2, w, h};
}

/// Endpoint error |truth - recovered| over the centered interior fraction of the area.
inline FieldError field_error(const DeformationField& truth, const DeformationField& recovered,
                              double interior_fraction) {
    if (truth.width != recovered.width || truth.height != recovered.height)
        throw InvalidArgument("field_error: field dimensions disagree");
    const RegionSpec r = interior_region(truth.width, truth.height, interior_fraction);
    FieldError e;
    double sum = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) {
            const Vec2 d = truth.at(x, y) - recovered.at(x, y);
            const double n = d.norm();
            sum += n;
            e.max = std::max(e.max, n);
        }
    e.mean = sum / (static_cast<double>(r.w) * r.h);
    return e;
}

// =============================================================================
// Synthetic validation
// =============================================================================

struct Distortion {
    double bias_amplitude = 0.0;
    double noise_sigma = 0.0;
};

struct SyntheticValidation {
    EvaluationReport report;
    SyntheticPair pair;
    RegistrationResult result;
};

inline constexpr double kInteriorFraction = 0.8;

/// Deforms `img` with a seeded random B-spline field (plus optional rigid
/// misalignment, bias and noise), registers the result back to `img` and
/// scores the recovered field and the full-area overlap.
inline SyntheticValidation synthetic_validation(const Image2D& img, std::uint64_t seed, const RegistrationConfig& cfg,
                                                const Distortion& distortion, double max_disp = 8.0,
                                                double spacing = 64.0, double rotation_deg = 0.0,
                                                double shift_x = 0.0, double shift_y = 0.0) {
    detail::require_nonconstant(img, "synthetic_validation");
    SynthSettings s;
    s.seed = seed;
    s.max_disp = max_disp;
    s.spacing = spacing;
    s.rotation_deg = rotation_deg;
    s.shift_x = shift_x;
    s.shift_y = shift_y;
    s.bias_amplitude = distortion.bias_amplitude;
    s.noise_sigma = distortion.noise_sigma;
    SyntheticValidation v;
    v.pair = make_synthetic_pair(img, s);
    v.result = register_images(img, v.pair.moving, cfg);
    const DeformationField recovered = total_displacement(v.result.prereg, v.result.dense);
    const WarpResult before = warp_image(v.pair.moving, v.result.prereg, nullptr, img.width(), img.height());
    const BinaryMask valid = before.valid & v.result.registered.valid;
    v.report = region_report(img, before.image, v.result.registered.image, {full_region(img.width(), img.height())},
                             &valid);
    v.report.field = field_error(v.pair.truth, recovered, kInteriorFraction);
    return v;
}

// =============================================================================
// JSON
// =============================================================================

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
    nlohmann::ordered_json j;
    j["regions"] = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        j["regions"].push_back({{"region", row.name},
                                {"dsc_before", row.dsc_before},
                                {"dsc_after", row.dsc_after},
                                {"relative_overlap", row.relative_overlap_after}});
    if (r.field) {
        j["field_mean_err_px"] = r.field->mean;
        j["field_max_err_px"] = r.field->max;
    }
    return j;
}

} // namespace specreg
