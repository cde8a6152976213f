/**
 * @file transform.hpp
 * @brief 2D homogeneous transforms (rigid, similarity, affine, projective).
 */
#pragma once

#include "error.hpp"

#include <array>
#include <cmath>

namespace specreg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// 3x3 matrix acting on column vectors (x, y, 1).
struct HomogeneousTransform2D {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static HomogeneousTransform2D identity() { return {}; }

    double operator()(int r, int c) const { return m[3 * r + c]; }
    double& operator()(int r, int c) { return m[3 * r + c]; }

    bool is_affine() const { return m[6] == 0.0 && m[7] == 0.0 && m[8] == 1.0; }

    friend bool operator==(const HomogeneousTransform2D&, const HomogeneousTransform2D&) = default;
};

inline HomogeneousTransform2D operator*(const HomogeneousTransform2D& a, const HomogeneousTransform2D& b) {
    HomogeneousTransform2D r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            r(i, j) = s;
        }
    return r;
}

/// Projective application: ((ax+by+c)/(gx+hy+i), (dx+ey+f)/(gx+hy+i)).
inline Point2 transform_point(const HomogeneousTransform2D& t, Point2 p) {
    const double w = t.m[6] * p.x + t.m[7] * p.y + t.m[8];
    if (w == 0.0 || !std::isfinite(w)) throw NumericError("transform_point: vanishing homogeneous denominator");
    return {(t.m[0] * p.x + t.m[1] * p.y + t.m[2]) / w, (t.m[3] * p.x + t.m[4] * p.y + t.m[5]) / w};
}

/// Apply `first`, then `then`: the product then*first.
inline HomogeneousTransform2D compose(const HomogeneousTransform2D& first, const HomogeneousTransform2D& then) {
    return then * first;
}

inline HomogeneousTransform2D make_translation(double tx, double ty) {
    HomogeneousTransform2D t;
    t(0, 2) = tx;
    t(1, 2) = ty;
    return t;
}

/// Rotation by `angle` radians (counter-clockwise in x-right/y-up terms) plus translation.
inline HomogeneousTransform2D make_rigid(double angle, double tx, double ty) {
    if (!std::isfinite(angle) || !std::isfinite(tx) || !std::isfinite(ty))
        throw InvalidArgument("make_rigid: non-finite parameter");
    const double c = std::cos(angle), s = std::sin(angle);
    return {{c, -s, tx, s, c, ty, 0, 0, 1}};
}

inline HomogeneousTransform2D make_affine(double a11, double a12, double a21, double a22, double tx, double ty) {
    const double det = a11 * a22 - a12 * a21;
    if (det == 0.0 || !std::isfinite(det)) throw InvalidArgument("make_affine: singular linear part");
    return {{a11, a12, tx, a21, a22, ty, 0, 0, 1}};
}

/// Uniform scale s, rotation, translation: p -> s R p + t.
inline HomogeneousTransform2D make_similarity(double scale, double angle, double tx, double ty) {
    if (!(scale > 0.0)) throw InvalidArgument("make_similarity: scale must be positive");
    const double c = scale * std::cos(angle), s = scale * std::sin(angle);
    return {{c, -s, tx, s, c, ty, 0, 0, 1}};
}

inline double determinant(const HomogeneousTransform2D& t) {
    const auto& m = t.m;
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

inline HomogeneousTransform2D inverse(const HomogeneousTransform2D& t) {
    const double det = determinant(t);
    if (det == 0.0 || !std::isfinite(det)) throw NumericError("inverse: singular transform");
    const auto& m = t.m;
    HomogeneousTransform2D r;
    r.m = {(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det, (m[1] * m[5] - m[2] * m[4]) / det,
           (m[5] * m[6] - m[3] * m[8]) / det, (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
           (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det, (m[0] * m[4] - m[1] * m[3]) / det};
    return r;
}

/// 2x2 Jacobian d(transform_point)/dp at p, row-major {dX/dx, dX/dy, dY/dx, dY/dy}.
inline std::array<double, 4> jacobian(const HomogeneousTransform2D& t, Point2 p) {
    const auto& m = t.m;
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    const double X = m[0] * p.x + m[1] * p.y + m[2];
    const double Y = m[3] * p.x + m[4] * p.y + m[5];
    const double w2 = w * w;
    return {(m[0] * w - X * m[6]) / w2, (m[1] * w - X * m[7]) / w2, (m[3] * w - Y * m[6]) / w2,
            (m[4] * w - Y * m[7]) / w2};
}

/// Re-expresses a full-resolution transform in the pixel frame of pyramid
/// level `level` (coordinates divided by 2^level).
inline HomogeneousTransform2D at_pyramid_level(const HomogeneousTransform2D& t, int level) {
    const double f = std::ldexp(1.0, level);
    HomogeneousTransform2D up, down;
    up(0, 0) = up(1, 1) = f;
    down(0, 0) = down(1, 1) = 1.0 / f;
    return down * t * up;
}

} // namespace specreg
