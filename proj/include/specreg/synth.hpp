/**
 * @file synth.hpp
 * @brief Synthetic test data: document-like images, known deformations,
 *        smooth multiplicative bias fields and additive noise.
 */
#pragma once

#include "bspline.hpp"
#include "error.hpp"
#include "filters.hpp"
#include "image.hpp"
#include "transform.hpp"
#include "warp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace specreg {

inline constexpr double kPaperLevel = 0.9;
inline constexpr double kInkLevel = 0.1;

/// Dark strokes on a light page: lines of block glyphs, a few filled shapes
/// and a frame, blurred with sigma 1.
inline Image2D make_document(int width, int height, std::uint64_t seed) {
    if (width < 32 || height < 32) throw InvalidArgument("make_document: image must be at least 32x32");
    detail::SplitMix64 rng{seed};
    Image2D img(width, height);
    std::fill(img.data().begin(), img.data().end(), kPaperLevel);
    auto fill_rect = [&](int x0, int y0, int w, int h) {
        for (int y = std::max(0, y0); y < std::min(height, y0 + h); ++y)
            for (int x = std::max(0, x0); x < std::min(width, x0 + w); ++x) img.at(x, y) = kInkLevel;
    };
    auto fill_disc = [&](double cx, double cy, double r) {
        for (int y = std::max(0, static_cast<int>(cy - r)); y <= std::min(height - 1, static_cast<int>(cy + r)); ++y)
            for (int x = std::max(0, static_cast<int>(cx - r)); x <= std::min(width - 1, static_cast<int>(cx + r)); ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.at(x, y) = kInkLevel;
    };

    const int stroke = std::max(2, width / 128);
    const int margin = stroke;
    // frame
    fill_rect(margin, margin, width - 2 * margin, stroke);
    fill_rect(margin, height - margin - stroke, width - 2 * margin, stroke);
    fill_rect(margin, margin, stroke, height - 2 * margin);
    fill_rect(width - margin - stroke, margin, stroke, height - 2 * margin);

    auto fill_ring = [&](double cx, double cy, double r) {
        for (int y = std::max(0, static_cast<int>(cy - r)); y <= std::min(height - 1, static_cast<int>(cy + r)); ++y)
            for (int x = std::max(0, static_cast<int>(cx - r)); x <= std::min(width - 1, static_cast<int>(cx + r)); ++x) {
                const double d = std::hypot(x - cx, y - cy);
                if (d <= r && d > r - stroke) img.at(x, y) = kInkLevel;
            }
    };

    // text lines of block glyphs; every few lines a figure (ring, hatched box)
    // takes a stretch of two lines and the text flows around it
    const int gw = 4 * stroke, gh = 6 * stroke, gap = 2 * stroke, pitch = gh + 2 * stroke;
    const int x_begin = margin + 2 * stroke, x_end = width - margin - 2 * stroke;
    int fig_x0 = 0, fig_x1 = 0, fig_lines = 0;
    int line = 0;
    for (int y = margin + 2 * stroke; y + gh < height - margin - 2 * stroke; y += pitch, ++line) {
        if (fig_lines == 0 && line % 5 == 3 && y + pitch + gh < height - margin - 2 * stroke) {
            const int side = 2 * pitch - 2 * stroke;
            fig_x0 = x_begin + static_cast<int>(rng.uniform(0.0, 0.6) * (x_end - x_begin - 2 * side));
            fig_x1 = fig_x0 + 2 * side + gap;
            fill_ring(fig_x0 + side / 2.0, y + side / 2.0, side / 2.0);
            fill_disc(fig_x0 + side / 2.0, y + side / 2.0, side / 6.0);
            const int bx = fig_x0 + side + gap;
            for (int k = 0; 2 * k * stroke < side; ++k) fill_rect(bx, y + 2 * k * stroke, side, stroke);
            fill_rect(bx, y, stroke, side);
            fill_rect(bx + side - stroke, y, stroke, side);
            fig_lines = 2;
        }
        int x = x_begin;
        while (x + gw < x_end) {
            if (fig_lines > 0 && x + gw > fig_x0 && x < fig_x1) {
                x = fig_x1 + gap;
                continue;
            }
            if (rng.uniform01() < 0.12) {  // word gap
                x += gw;
                continue;
            }
            // each glyph: a subset of two verticals, three horizontals, or a dot
            const double r = rng.uniform01();
            if (r < 0.6) fill_rect(x, y, stroke, gh);
            if (rng.uniform01() < 0.6) fill_rect(x + gw - stroke, y, stroke, gh);
            if (rng.uniform01() < 0.5) fill_rect(x, y, gw, stroke);
            if (rng.uniform01() < 0.5) fill_rect(x, y + (gh - stroke) / 2, gw, stroke);
            if (rng.uniform01() < 0.5) fill_rect(x, y + gh - stroke, gw, stroke);
            if (r >= 0.6 && r < 0.75) fill_disc(x + gw / 2.0, y + gh / 2.0, gw / 2.0);
            x += gw + gap;
        }
        if (fig_lines > 0) --fig_lines;
    }
    return gaussian_blur(img, 1.0);
}

/// Smooth multiplicative field 1 + amplitude * n(x,y) with n a normalized sum
/// of low-frequency cosine products, so values lie in [1-amplitude, 1+amplitude].
inline Image2D make_bias_field(int width, int height, std::uint64_t seed, double amplitude = 0.3) {
    if (!(amplitude >= 0.0 && amplitude < 1.0)) throw InvalidArgument("make_bias_field: amplitude must be in [0,1)");
    detail::SplitMix64 rng{seed};
    struct Term {
        double a, fx, fy, px, py;
    };
    std::vector<Term> terms;
    double total = 0.0;
    for (int ky = 0; ky <= 2; ++ky)
        for (int kx = 0; kx <= 2; ++kx) {
            if (kx == 0 && ky == 0) continue;
            const Term t{rng.uniform(-1.0, 1.0), kx * std::numbers::pi / width, ky * std::numbers::pi / height,
                         rng.uniform(0.0, 2 * std::numbers::pi), rng.uniform(0.0, 2 * std::numbers::pi)};
            total += std::abs(t.a);
            terms.push_back(t);
        }
    Image2D b(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double n = 0.0;
            for (const auto& t : terms) n += t.a * std::cos(t.fx * x + t.px) * std::cos(t.fy * y + t.py);
            b.at(x, y) = 1.0 + amplitude * n / total;
        }
    return b;
}

inline Image2D add_gaussian_noise(const Image2D& img, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw InvalidArgument("add_gaussian_noise: sigma must be >= 0");
    detail::SplitMix64 rng{seed};
    Image2D out = img;
    if (sigma == 0.0) return out;
    for (auto& v : out.data()) v += sigma * rng.normal();
    return out;
}

struct SynthSettings {
    std::uint64_t seed = 1;
    double max_disp = 8.0;       // px, B-spline part
    double spacing = 64.0;       // px, truth grid spacing
    double rotation_deg = 0.0;   // rigid part, about the image center
    double shift_x = 0.0, shift_y = 0.0;
    double bias_amplitude = 0.0;  // 0 disables
    double noise_sigma = 0.0;
};

struct SyntheticPair {
    Image2D moving;
    ControlGrid truth_grid;
    HomogeneousTransform2D truth_rigid;  // reference pixel (after B-spline) -> moving pixel
    DeformationField truth;              // total displacement: moving position of p minus p
};

/// Rigid part of the truth mapping: rotation about the image center plus shift.
inline HomogeneousTransform2D centered_rigid(int width, int height, double angle, double tx, double ty) {
    const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    return compose(compose(make_translation(-cx, -cy), make_rigid(angle, 0.0, 0.0)), make_translation(cx + tx, cy + ty));
}

/// Builds a moving image whose reference pixel p appears at
/// M(p) = rigid(p + u(p)), u a seeded random B-spline field. The moving image
/// is produced by inverting M per moving pixel; samples beyond the reference
/// border take the nearest edge value.
inline SyntheticPair make_synthetic_pair(const Image2D& ref, const SynthSettings& s) {
    const int w = ref.width(), h = ref.height();
    SyntheticPair out;
    out.truth_grid = random_deformation(s.seed, w, h, s.spacing, s.max_disp);
    out.truth_rigid = centered_rigid(w, h, s.rotation_deg * std::numbers::pi / 180.0, s.shift_x, s.shift_y);
    const DeformationField u = densify(out.truth_grid, w, h);
    out.truth = total_displacement(out.truth_rigid, u);

    const HomogeneousTransform2D back = inverse(out.truth_rigid);
    const ControlGrid& g = out.truth_grid;
    Image2D mov(w, h);
    parallel_for(0, h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const Point2 z = transform_point(back, {static_cast<double>(x), static_cast<double>(y)});
            // solve p + u(p) = z by fixed-point iteration (|du/dp| < 1 by the folding guard)
            Point2 p = z;
            for (int it = 0; it < 50; ++it) {
                const double qx = std::clamp(p.x, 0.0, w - 1.0), qy = std::clamp(p.y, 0.0, h - 1.0);
                const Vec2 d = ffd_displacement(g, qx, qy);
                const Point2 np{z.x - d.x, z.y - d.y};
                const double step = std::hypot(np.x - p.x, np.y - p.y);
                p = np;
                if (step < 1e-10) break;
            }
            double v = 0.0;
            detail::bilinear(ref, std::clamp(p.x, 0.0, w - 1.0), std::clamp(p.y, 0.0, h - 1.0), v);
            mov.at(x, y) = v;
        }
    });
    if (s.bias_amplitude > 0.0) {
        const Image2D b = make_bias_field(w, h, s.seed ^ 0xb1a5b1a5ULL, s.bias_amplitude);
        for (std::size_t i = 0; i < mov.size(); ++i) mov[i] *= b[i];
    }
    out.moving = add_gaussian_noise(mov, s.noise_sigma, s.seed ^ 0x9e3779b97f4a7c15ULL);
    return out;
}

} // namespace specreg
