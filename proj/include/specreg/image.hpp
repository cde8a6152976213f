/**
 * @file image.hpp
 * @brief Raster types shared by every module: intensity images, binary masks,
 *        spectral stacks and RGB overlays.
 */
#pragma once

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace specreg {

// =============================================================================
// Image2D
// =============================================================================

/// Single-channel raster of real intensities, row-major.
class Image2D {
public:
    Image2D() = default;

    Image2D(int width, int height, double fill = 0.0) : width_(width), height_(height) {
        if (width < 1 || height < 1) throw InvalidArgument("Image2D: dimensions must be >= 1");
        data_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    Image2D(int width, int height, std::vector<double> data)
        : width_(width), height_(height), data_(std::move(data)) {
        if (width < 1 || height < 1) throw InvalidArgument("Image2D: dimensions must be >= 1");
        if (data_.size() != static_cast<std::size_t>(width) * height)
            throw InvalidArgument("Image2D: data length does not match width*height");
        for (double v : data_)
            if (!std::isfinite(v)) throw InvalidArgument("Image2D: non-finite intensity");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image2D& o) const { return width_ == o.width_ && height_ == o.height_; }

    friend bool operator==(const Image2D&, const Image2D&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

// =============================================================================
// BinaryMask
// =============================================================================

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false) : width_(width), height_(height) {
        if (width < 1 || height < 1) throw InvalidArgument("BinaryMask: dimensions must be >= 1");
        bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return bits_.size(); }

    bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    bool same_shape(const BinaryMask& o) const { return width_ == o.width_ && height_ == o.height_; }
    bool same_shape(const Image2D& o) const { return width_ == o.width() && height_ == o.height(); }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw InvalidArgument("mask intersection: dimension mismatch");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] && b[i]);
    return out;
}

inline BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw InvalidArgument("mask union: dimension mismatch");
    BinaryMask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] || b[i]);
    return out;
}

// =============================================================================
// SpectralStack / RgbImage
// =============================================================================

struct SpectralStack {
    std::vector<Image2D> channels;
    std::vector<std::string> labels;  // optional, either empty or one per channel

    int width() const { return channels.empty() ? 0 : channels.front().width(); }
    int height() const { return channels.empty() ? 0 : channels.front().height(); }

    /// Per-pixel mean over all channels.
    Image2D mean() const {
        if (channels.empty()) throw InvalidArgument("SpectralStack: no channels");
        Image2D out(width(), height());
        for (const auto& c : channels)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
        for (auto& v : out.data()) v /= static_cast<double>(channels.size());
        return out;
    }
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;

    Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// =============================================================================
// Intensity operations
// =============================================================================

/// Linear rescale to [0,1]; a constant image maps to all zeros.
inline Image2D normalize_minmax(const Image2D& img) {
    auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double mn = *lo, mx = *hi;
    Image2D out(img.width(), img.height());
    if (mx - mn <= 0.0) return out;
    const double inv = 1.0 / (mx - mn);
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = (img[i] - mn) * inv;
    return out;
}

namespace detail {

// Bilinear lookup with the domain test folded in. Returns false when (x,y)
// lies outside [0,w-1]x[0,h-1].
inline bool bilinear(const Image2D& img, double x, double y, double& value) {
    const int w = img.width(), h = img.height();
    if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return false;
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    double fx = x - x0, fy = y - y0;
    if (x0 >= w - 1) { x0 = std::max(0, w - 2); fx = (w == 1) ? 0.0 : 1.0; }
    if (y0 >= h - 1) { y0 = std::max(0, h - 2); fy = (h == 1) ? 0.0 : 1.0; }
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
    const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
    value = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    return true;
}

// Same lookup plus the spatial derivative of the interpolant. On an exact
// pixel column/row the derivative is the mean of the two one-sided slopes,
// i.e. the symmetric derivative a central difference would see.
inline bool bilinear_with_gradient(const Image2D& img, double x, double y, double& value,
                                   double& dx, double& dy) {
    const int w = img.width(), h = img.height();
    if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return false;
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    double fx = x - x0, fy = y - y0;
    if (x0 >= w - 1) { x0 = std::max(0, w - 2); fx = (w == 1) ? 0.0 : 1.0; }
    if (y0 >= h - 1) { y0 = std::max(0, h - 2); fy = (h == 1) ? 0.0 : 1.0; }
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
    const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
    value = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    dx = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    dy = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    if (fx == 0.0 && x0 > 0) {
        const double l0 = img.at(x0 - 1, y0), l1 = img.at(x0 - 1, y1);
        dx = 0.5 * (dx + (1 - fy) * (v00 - l0) + fy * (v01 - l1));
    }
    if (fy == 0.0 && y0 > 0) {
        const double u0 = img.at(x0, y0 - 1), u1 = img.at(x1, y0 - 1);
        dy = 0.5 * (dy + (1 - fx) * (v00 - u0) + fx * (v10 - u1));
    }
    return true;
}

} // namespace detail

/// Bilinear interpolation of the four nearest pixel centers; std::nullopt
/// outside [0,width-1]x[0,height-1].
inline std::optional<double> sample_bilinear(const Image2D& img, double x, double y) {
    double v;
    if (!detail::bilinear(img, x, y, v)) return std::nullopt;
    return v;
}

} // namespace specreg
