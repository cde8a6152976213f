/**
 * @file bspline.hpp
 * @brief Cubic B-spline free-form deformation on a uniform control grid.
 *
 * A query point (x, y) is mapped to grid coordinates t = (x - origin)/spacing.
 * With c = floor(t) and u = t - c, the displacement is the tensor-product sum
 *
 *     sum_{l,m=0..3} B_l(u) B_m(v) phi[c_x - 1 + l, c_y - 1 + m]
 *
 * so every query needs control points c-1 .. c+2 on both axes. Grids built by
 * make_control_grid() place one full cell of margin around the image so that
 * every pixel center has this 4x4 support.
 */
#pragma once

#include "error.hpp"
#include "io.hpp"
#include "parallel.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace specreg {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
    double norm() const { return std::hypot(x, y); }
};

// =============================================================================
// Basis
// =============================================================================

/// Uniform cubic B-spline basis (B0..B3) at u in [0,1).
inline std::array<double, 4> bspline_weights(double u) {
    if (!(u >= 0.0 && u < 1.0)) throw InvalidArgument("bspline_weights: u must lie in [0,1)");
    const double u2 = u * u, u3 = u2 * u;
    const double om = 1.0 - u;
    return {om * om * om / 6.0, (3 * u3 - 6 * u2 + 4) / 6.0, (-3 * u3 + 3 * u2 + 3 * u + 1) / 6.0, u3 / 6.0};
}

namespace detail {

// Unchecked basis for hot loops; u is known to be in [0,1].
inline std::array<double, 4> bspline_basis(double u) {
    const double u2 = u * u, u3 = u2 * u;
    const double om = 1.0 - u;
    return {om * om * om / 6.0, (3 * u3 - 6 * u2 + 4) / 6.0, (-3 * u3 + 3 * u2 + 3 * u + 1) / 6.0, u3 / 6.0};
}

} // namespace detail

// =============================================================================
// ControlGrid
// =============================================================================

struct ControlGrid {
    int nx = 0, ny = 0;
    double spacing_x = 1.0, spacing_y = 1.0;
    double origin_x = 0.0, origin_y = 0.0;  // pixel position of control point (0,0)
    std::vector<Vec2> disp;                 // row-major, ny rows of nx

    Vec2& at(int i, int j) { return disp[static_cast<std::size_t>(j) * nx + i]; }
    const Vec2& at(int i, int j) const { return disp[static_cast<std::size_t>(j) * nx + i]; }
    std::size_t size() const { return disp.size(); }

    /// Flattened parameter vector (x0, y0, x1, y1, ...).
    std::vector<double> parameters() const {
        std::vector<double> p(2 * disp.size());
        for (std::size_t k = 0; k < disp.size(); ++k) {
            p[2 * k] = disp[k].x;
            p[2 * k + 1] = disp[k].y;
        }
        return p;
    }

    void set_parameters(const std::vector<double>& p) {
        if (p.size() != 2 * disp.size()) throw InvalidArgument("ControlGrid: parameter vector size mismatch");
        for (std::size_t k = 0; k < disp.size(); ++k) disp[k] = {p[2 * k], p[2 * k + 1]};
    }

    /// True when (x,y) has full 4x4 control support.
    bool supports(double x, double y) const {
        const double tx = (x - origin_x) / spacing_x, ty = (y - origin_y) / spacing_y;
        return tx >= 1.0 && ty >= 1.0 && tx < nx - 2 && ty < ny - 2;
    }

    bool covers(int width, int height) const { return supports(0, 0) && supports(width - 1, height - 1); }
};

inline void validate(const ControlGrid& g) {
    if (g.nx < 4 || g.ny < 4) throw InvalidArgument("ControlGrid: at least 4 control points per axis required");
    if (!(g.spacing_x > 0.0 && g.spacing_y > 0.0)) throw InvalidArgument("ControlGrid: spacing must be positive");
    if (g.disp.size() != static_cast<std::size_t>(g.nx) * g.ny) throw InvalidArgument("ControlGrid: size mismatch");
}

/// Zero-displacement grid covering a width x height image with one cell of margin.
inline ControlGrid make_control_grid(int width, int height, double spacing_x, double spacing_y) {
    if (width < 1 || height < 1) throw InvalidArgument("make_control_grid: empty image");
    if (!(spacing_x > 0.0 && spacing_y > 0.0)) throw InvalidArgument("make_control_grid: spacing must be positive");
    ControlGrid g;
    g.spacing_x = spacing_x;
    g.spacing_y = spacing_y;
    g.origin_x = -spacing_x;
    g.origin_y = -spacing_y;
    g.nx = static_cast<int>(std::floor((width - 1) / spacing_x)) + 4;
    g.ny = static_cast<int>(std::floor((height - 1) / spacing_y)) + 4;
    g.disp.assign(static_cast<std::size_t>(g.nx) * g.ny, Vec2{});
    return g;
}

inline ControlGrid make_control_grid(int width, int height, double spacing) {
    return make_control_grid(width, height, spacing, spacing);
}

namespace detail {

struct AxisSupport {
    int first = 0;                   // index of the first of the four control points
    std::array<double, 4> w{};       // basis weights
};

inline AxisSupport axis_support(double pos, double origin, double spacing) {
    const double t = (pos - origin) / spacing;
    const double c = std::floor(t);
    return {static_cast<int>(c) - 1, bspline_basis(t - c)};
}

// Per-column / per-row supports for a pixel lattice.
inline std::vector<AxisSupport> lattice_supports(int n, double origin, double spacing) {
    std::vector<AxisSupport> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s[i] = axis_support(i, origin, spacing);
    return s;
}

} // namespace detail

/// Displacement at (x, y) from the tensor-product cubic B-spline.
inline Vec2 ffd_displacement(const ControlGrid& g, double x, double y) {
    if (!g.supports(x, y)) throw InvalidArgument("ffd_displacement: query outside the grid's supported domain");
    const auto sx = detail::axis_support(x, g.origin_x, g.spacing_x);
    const auto sy = detail::axis_support(y, g.origin_y, g.spacing_y);
    Vec2 d;
    for (int m = 0; m < 4; ++m) {
        Vec2 row;
        for (int l = 0; l < 4; ++l) row += sx.w[l] * g.at(sx.first + l, sy.first + m);
        d += sy.w[m] * row;
    }
    return d;
}

// =============================================================================
// DeformationField
// =============================================================================

struct DeformationField {
    int width = 0, height = 0;
    std::vector<Vec2> disp;

    DeformationField() = default;
    DeformationField(int w, int h) : width(w), height(h), disp(static_cast<std::size_t>(w) * h) {
        if (w < 1 || h < 1) throw InvalidArgument("DeformationField: dimensions must be >= 1");
    }

    Vec2& at(int x, int y) { return disp[static_cast<std::size_t>(y) * width + x]; }
    const Vec2& at(int x, int y) const { return disp[static_cast<std::size_t>(y) * width + x]; }

    double mean_magnitude() const {
        double s = 0.0;
        for (const auto& d : disp) s += d.norm();
        return disp.empty() ? 0.0 : s / static_cast<double>(disp.size());
    }
};

/// Evaluates the grid at every pixel center of a width x height lattice.
inline DeformationField densify(const ControlGrid& g, int width, int height) {
    validate(g);
    if (!g.covers(width, height)) throw InvalidArgument("densify: image domain not covered by the control grid");
    const auto xs = detail::lattice_supports(width, g.origin_x, g.spacing_x);
    const auto ys = detail::lattice_supports(height, g.origin_y, g.spacing_y);
    DeformationField f(width, height);
    parallel_for(0, height, [&](int y) {
        const auto& sy = ys[y];
        for (int x = 0; x < width; ++x) {
            const auto& sx = xs[x];
            Vec2 d;
            for (int m = 0; m < 4; ++m) {
                Vec2 row;
                for (int l = 0; l < 4; ++l) row += sx.w[l] * g.at(sx.first + l, sy.first + m);
                d += sy.w[m] * row;
            }
            f.at(x, y) = d;
        }
    });
    return f;
}

// =============================================================================
// Grid refinement / rescaling
// =============================================================================

/// Halves the spacing. New coefficients come from cubic B-spline subdivision:
/// control points coinciding with old ones get (c[a-1] + 6c[a] + c[a+1])/8,
/// midpoints get (c[a] + c[a+1])/2. The represented field is unchanged on the
/// old supported domain.
inline ControlGrid refine_grid(const ControlGrid& g) {
    validate(g);
    ControlGrid r;
    r.nx = 2 * g.nx - 3;
    r.ny = 2 * g.ny - 3;
    r.spacing_x = g.spacing_x / 2;
    r.spacing_y = g.spacing_y / 2;
    r.origin_x = g.origin_x + g.spacing_x / 2;
    r.origin_y = g.origin_y + g.spacing_y / 2;

    // 1D subdivision along x into a temporary (r.nx x g.ny), then along y.
    auto subdivide = [](auto get, int n_new, auto put) {
        for (int b = 0; b < n_new; ++b) {
            if (b % 2 == 1) {
                const int a = (b + 1) / 2;
                put(b, (1.0 / 8.0) * (get(a - 1) + 6.0 * get(a) + get(a + 1)));
            } else {
                const int a = b / 2;
                put(b, 0.5 * (get(a) + get(a + 1)));
            }
        }
    };
    std::vector<Vec2> tmp(static_cast<std::size_t>(r.nx) * g.ny);
    for (int j = 0; j < g.ny; ++j)
        subdivide([&](int a) { return g.at(a, j); }, r.nx,
                  [&](int b, Vec2 v) { tmp[static_cast<std::size_t>(j) * r.nx + b] = v; });
    r.disp.assign(static_cast<std::size_t>(r.nx) * r.ny, Vec2{});
    for (int i = 0; i < r.nx; ++i)
        subdivide([&](int a) { return tmp[static_cast<std::size_t>(a) * r.nx + i]; }, r.ny,
                  [&](int b, Vec2 v) { r.at(i, b) = v; });
    return r;
}

/// Re-expresses a grid in a frame scaled by `factor` (positions and displacements).
inline ControlGrid rescale_grid(const ControlGrid& g, double factor) {
    ControlGrid r = g;
    r.spacing_x *= factor;
    r.spacing_y *= factor;
    r.origin_x *= factor;
    r.origin_y *= factor;
    for (auto& d : r.disp) d = factor * d;
    return r;
}

// =============================================================================
// Synthetic deformations
// =============================================================================

namespace detail {

// splitmix64: portable, seed-stable stream independent of the standard library.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    double normal() {
        // Box-Muller; u1 kept away from 0.
        const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

} // namespace detail

/// Seeded grid with each displacement component uniform in [-max_disp, max_disp].
/// max_disp must stay below 0.4 * spacing so the warp cannot fold.
inline ControlGrid random_deformation(std::uint64_t seed, int width, int height, double spacing, double max_disp) {
    if (!(max_disp >= 0.0)) throw InvalidArgument("random_deformation: max_disp must be >= 0");
    if (!(max_disp < 0.4 * spacing))
        throw InvalidArgument("random_deformation: max_disp must be < 0.4 * spacing (folding guard)");
    ControlGrid g = make_control_grid(width, height, spacing);
    detail::SplitMix64 rng{seed};
    for (auto& d : g.disp) {
        d.x = rng.uniform(-max_disp, max_disp);
        d.y = rng.uniform(-max_disp, max_disp);
    }
    if (max_disp == 0.0)
        for (auto& d : g.disp) d = {};
    return g;
}

// =============================================================================
// DFLD container
// =============================================================================

namespace detail {

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32le(std::vector<std::uint8_t>& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(out, bits);
}

inline double get_f32le(const std::uint8_t* p) {
    const std::uint32_t bits = get_u32le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace detail

/// "DFLD", u32le width, u32le height, u32le 0, then (dx, dy) f32le pairs row-major.
inline std::vector<std::uint8_t> encode_field(const DeformationField& f) {
    std::vector<std::uint8_t> out{'D', 'F', 'L', 'D'};
    out.reserve(16 + f.disp.size() * 8);
    detail::put_u32le(out, static_cast<std::uint32_t>(f.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(f.height));
    detail::put_u32le(out, 0);
    for (const auto& d : f.disp) {
        detail::put_f32le(out, d.x);
        detail::put_f32le(out, d.y);
    }
    return out;
}

inline DeformationField decode_field(const std::vector<std::uint8_t>& b) {
    if (b.size() < 16 || std::memcmp(b.data(), "DFLD", 4) != 0) throw IoError("DFLD: bad magic");
    const auto w = detail::get_u32le(b.data() + 4), h = detail::get_u32le(b.data() + 8);
    if (w < 1 || h < 1 || w > (1u << 20) || h > (1u << 20)) throw IoError("DFLD: invalid dimensions");
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (b.size() != 16 + n * 8) throw IoError("DFLD: payload length does not match header");
    DeformationField f(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < n; ++i)
        f.disp[i] = {detail::get_f32le(b.data() + 16 + 8 * i), detail::get_f32le(b.data() + 20 + 8 * i)};
    return f;
}

inline void save_field(const DeformationField& f, const std::filesystem::path& path) {
    write_atomic(path, encode_field(f));
}

inline DeformationField load_field(const std::filesystem::path& path) { return decode_field(read_file_bytes(path)); }

} // namespace specreg
