#pragma once

#include "bspline.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "transform.hpp"

#include <optional>

namespace specreg {

struct WarpResult {
    Image2D image;
    BinaryMask valid;  // true where the source sample was inside the input domain
};

/// Backward warp: output pixel p samples `img` at pre(p + field[p]).
/// Out-of-domain samples are 0 and flagged invalid. Output dimensions are the
/// field's when given, otherwise (out_width, out_height) or the input's.
inline WarpResult warp_image(const Image2D& img, const HomogeneousTransform2D& pre,
                             const DeformationField* field = nullptr, int out_width = 0, int out_height = 0) {
    int w = out_width > 0 ? out_width : img.width();
    int h = out_height > 0 ? out_height : img.height();
    if (field) {
        if ((out_width > 0 && field->width != out_width) || (out_height > 0 && field->height != out_height))
            throw InvalidArgument("warp_image: field dimensions do not match the requested output");
        w = field->width;
        h = field->height;
    }
    WarpResult r{Image2D(w, h), BinaryMask(w, h)};
    const bool affine = pre.is_affine();
    const auto& m = pre.m;
    parallel_for(0, h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double qx = x, qy = y;
            if (field) {
                const Vec2 d = field->at(x, y);
                qx += d.x;
                qy += d.y;
            }
            double sx, sy;
            if (affine) {
                sx = m[0] * qx + m[1] * qy + m[2];
                sy = m[3] * qx + m[4] * qy + m[5];
            } else {
                const double den = m[6] * qx + m[7] * qy + m[8];
                if (den == 0.0) continue;
                sx = (m[0] * qx + m[1] * qy + m[2]) / den;
                sy = (m[3] * qx + m[4] * qy + m[5]) / den;
            }
            double v;
            if (detail::bilinear(img, sx, sy, v)) {
                r.image.at(x, y) = v;
                r.valid.set(x, y, true);
            }
        }
    });
    return r;
}

inline WarpResult warp_image(const Image2D& img, const HomogeneousTransform2D& pre,
                             const std::optional<DeformationField>& field) {
    return warp_image(img, pre, field ? &*field : nullptr);
}

/// Composite sampling displacement: d(p) = pre(p + field[p]) - p.
inline DeformationField total_displacement(const HomogeneousTransform2D& pre, const DeformationField& field) {
    DeformationField out(field.width, field.height);
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x) {
            const Vec2 d = field.at(x, y);
            const Point2 s = transform_point(pre, {x + d.x, y + d.y});
            out.at(x, y) = {s.x - x, s.y - y};
        }
    return out;
}

} // namespace specreg
