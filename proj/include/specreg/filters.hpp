/**
 * @file filters.hpp
 * @brief Gaussian smoothing, image pyramids, Sobel edge maps and Otsu segmentation.
 */
#pragma once

#include "error.hpp"
#include "image.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace specreg {

// =============================================================================
// Smoothing / pyramids
// =============================================================================

/// Normalized 1D Gaussian taps, radius ceil(3*sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable Gaussian blur with replicated borders.
inline Image2D gaussian_blur(const Image2D& img, double sigma) {
    if (sigma <= 0.0) return img;
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int w = img.width(), h = img.height();
    Image2D tmp(w, h), out(w, h);
    parallel_for(0, h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) s += k[i + r] * img.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = s;
        }
    });
    parallel_for(0, h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            out.at(x, y) = s;
        }
    });
    return out;
}

/// Keeps every second pixel; output is ceil(w/2) x ceil(h/2).
inline Image2D decimate2(const Image2D& img) {
    const int w = (img.width() + 1) / 2, h = (img.height() + 1) / 2;
    Image2D out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
    return out;
}

struct Pyramid {
    std::vector<Image2D> levels;  // levels[0] = input, coarsest last
    int requested = 0;            // level count asked for before clamping
    bool clamped() const { return static_cast<int>(levels.size()) < requested; }
};

inline constexpr int kMinPyramidSide = 16;

/// Number of levels actually usable for a w x h image so the coarsest keeps
/// at least kMinPyramidSide pixels per side.
inline int usable_pyramid_levels(int width, int height, int requested) {
    int levels = 1;
    int w = width, h = height;
    while (levels < requested) {
        const int nw = (w + 1) / 2, nh = (h + 1) / 2;
        if (nw < kMinPyramidSide || nh < kMinPyramidSide) break;
        w = nw;
        h = nh;
        ++levels;
    }
    return levels;
}

/// Gaussian (sigma 1 px) smooth-then-decimate pyramid. Level l has
/// dimensions ceil(w/2^l) x ceil(h/2^l).
inline Pyramid build_pyramid(const Image2D& img, int levels) {
    if (levels < 1) throw InvalidArgument("build_pyramid: levels must be >= 1");
    Pyramid p;
    p.requested = levels;
    const int n = usable_pyramid_levels(img.width(), img.height(), levels);
    p.levels.push_back(img);
    for (int l = 1; l < n; ++l) p.levels.push_back(decimate2(gaussian_blur(p.levels.back(), 1.0)));
    return p;
}

// =============================================================================
// Sobel
// =============================================================================

/// Gradient magnitude from the 3x3 Sobel kernels; border pixels are 0.
inline Image2D sobel_magnitude(const Image2D& img) {
    const int w = img.width(), h = img.height();
    if (w < 3 || h < 3) throw InvalidArgument("sobel: image must be at least 3x3");
    Image2D mag(w, h);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const double gx = (img.at(x + 1, y - 1) + 2 * img.at(x + 1, y) + img.at(x + 1, y + 1)) -
                              (img.at(x - 1, y - 1) + 2 * img.at(x - 1, y) + img.at(x - 1, y + 1));
            const double gy = (img.at(x - 1, y + 1) + 2 * img.at(x, y + 1) + img.at(x + 1, y + 1)) -
                              (img.at(x - 1, y - 1) + 2 * img.at(x, y - 1) + img.at(x + 1, y - 1));
            mag.at(x, y) = std::sqrt(gx * gx + gy * gy);
        }
    return mag;
}

/// Linear-interpolated percentile of a sample (p in [0,100]).
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw InvalidArgument("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Edge mask: interior pixels whose Sobel magnitude is strictly above the
/// given percentile of all interior magnitudes.
inline BinaryMask sobel_edge_map(const Image2D& img, double pct) {
    if (!(pct > 0.0 && pct <= 100.0)) throw InvalidArgument("sobel_edge_map: percentile must be in (0,100]");
    const Image2D mag = sobel_magnitude(img);
    const int w = img.width(), h = img.height();
    std::vector<double> interior;
    interior.reserve(static_cast<std::size_t>(w - 2) * (h - 2));
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) interior.push_back(mag.at(x, y));
    const double thr = percentile(interior, pct);
    BinaryMask out(w, h);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) out.set(x, y, mag.at(x, y) > thr);
    return out;
}

// =============================================================================
// Otsu
// =============================================================================

enum class Foreground { Light, Dark };

struct OtsuResult {
    double threshold = 0.0;  // intensity; dark class is v < threshold
    int bin = 0;             // split index in [1,255]
    double between_variance = 0.0;
    double min = 0.0;    // binning origin
    double scale = 1.0;  // bins per intensity unit

    int bin_of(double v) const { return std::clamp(static_cast<int>((v - min) * scale), 0, 255); }
    bool is_dark(double v) const { return bin_of(v) < bin; }
};

/// Otsu split over 256 equal bins spanning [min,max] of the pixels selected
/// by `region` (all pixels when null). Ties go to the lowest split.
inline OtsuResult otsu_threshold(const Image2D& img, const BinaryMask* region = nullptr) {
    double mn = INFINITY, mx = -INFINITY;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (region && !(*region)[i]) continue;
        mn = std::min(mn, img[i]);
        mx = std::max(mx, img[i]);
        ++n;
    }
    if (n == 0) throw NumericError("otsu: empty region");
    if (!(mx > mn)) throw NumericError("otsu: constant image has no valid split");
    std::array<double, 256> hist{};
    std::array<double, 256> sum{};
    const double scale = 256.0 / (mx - mn);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (region && !(*region)[i]) continue;
        const int b = std::clamp(static_cast<int>((img[i] - mn) * scale), 0, 255);
        hist[b] += 1.0;
        sum[b] += img[i];
    }
    double total_sum = 0.0;
    for (double s : sum) total_sum += s;
    OtsuResult best{mn + 1.0 / scale, 1, -1.0, mn, scale};
    double w0 = 0.0, s0 = 0.0;
    const double N = static_cast<double>(n);
    for (int t = 1; t < 256; ++t) {
        w0 += hist[t - 1];
        s0 += sum[t - 1];
        const double w1 = N - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = s0 / w0, m1 = (total_sum - s0) / w1;
        const double var = (w0 / N) * (w1 / N) * (m0 - m1) * (m0 - m1);
        if (var > best.between_variance) best = {mn + t / scale, t, var, mn, scale};
    }
    return best;
}

/// Binary segmentation by Otsu threshold. Dark selects v below the threshold.
inline BinaryMask otsu_mask(const Image2D& img, Foreground fg, const BinaryMask* region = nullptr) {
    const OtsuResult r = otsu_threshold(img, region);
    BinaryMask out(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (region && !(*region)[i]) continue;
        const bool dark = r.is_dark(img[i]);
        out.set(i, fg == Foreground::Dark ? dark : !dark);
    }
    return out;
}

} // namespace specreg
