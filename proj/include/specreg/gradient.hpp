/**
 * @file gradient.hpp
 * @brief Gradient of the registration cost with respect to control-point
 *        displacements.
 *
 * Each component is the central difference of the cost under a +-h shift of
 * one control-point coordinate (h = 0.1 px by default), computed locally: a
 * shift only moves the pixels under that control point's support.
 *
 * SSD, CC, CR and RC are smooth in the warped intensities, so their gradient
 * is the analytic cost derivative chained with the per-pixel central
 * difference of the warped intensity. The histogram measures (MI, NMI, LMI)
 * are piecewise constant in the warped intensities; for those the shifted
 * costs are evaluated exactly by updating the hard-binned histograms.
 */
#pragma once

#include "bspline.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "similarity.hpp"
#include "transform.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace specreg {

struct GradientResult {
    double value = 0.0;
    std::vector<double> grad;  // same layout as ControlGrid::parameters()
};

namespace detail {

// Warped moving image at the current grid, with enough per-pixel data to
// re-sample under small shifts of the displaced position q = p + u(p).
class LocalWarp {
public:
    LocalWarp(const Image2D& J, const HomogeneousTransform2D& pre, const DeformationField& field,
              const std::vector<AxisSupport>& xs, const std::vector<AxisSupport>& ys, double step)
        : J_(J), pre_(pre), affine_(pre.is_affine()), w_(field.width), h_(field.height),
          warped_{Image2D(field.width, field.height), BinaryMask(field.width, field.height)},
          px_(static_cast<std::size_t>(w_) * h_) {
        const auto& m = pre.m;
        // d s / d q, column a = direction of a shift along q_a
        const double mx = std::max(std::abs(m[0]), std::abs(m[1]));
        const double my = std::max(std::abs(m[3]), std::abs(m[4]));
        parallel_for(0, h_, [&](int y) {
            double wy = 0.0;
            for (double v : ys[y].w) wy = std::max(wy, v);
            double wx_max = 0.0;
            for (int x = 0; x < w_; ++x) {
                wx_max = 0.0;
                for (double v : xs[x].w) wx_max = std::max(wx_max, v);
                const std::size_t i = static_cast<std::size_t>(y) * w_ + x;
                Pixel& p = px_[i];
                const Vec2 d = field.at(x, y);
                p.qx = x + d.x;
                p.qy = y + d.y;
                double sx, sy;
                if (!to_source(p.qx, p.qy, sx, sy)) continue;
                double v;
                if (!bilinear(J_, sx, sy, v)) continue;
                p.valid = true;
                warped_.image[i] = v;
                warped_.valid.set(x, y, true);
                if (!affine_) continue;
                int x0, y0;
                double fx, fy;
                if (!cell(sx, sy, x0, y0, fx, fy)) continue;
                const double tmax = step * wx_max * wy;
                const double ex = tmax * mx, ey = tmax * my;
                p.interior = fx >= ex && fx <= 1.0 - ex && fy >= ey && fy <= 1.0 - ey;
                const double v00 = J_.at(x0, y0), v10 = J_.at(x0 + 1, y0);
                const double v01 = J_.at(x0, y0 + 1), v11 = J_.at(x0 + 1, y0 + 1);
                const double gx = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
                const double gy = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
                const double kxy = v11 - v10 - v01 + v00;
                for (int a = 0; a < 2; ++a) {
                    const double dx = m[a], dy = m[3 + a];
                    p.slope[a] = gx * dx + gy * dy;
                    p.curv[a] = kxy * dx * dy;
                }
            }
        });
    }

    const WarpResult& warped() const { return warped_; }

    bool interior(std::size_t i) const { return px_[i].interior; }
    double slope(std::size_t i, int axis) const { return px_[i].slope[axis]; }

    // Warped intensity of pixel i when q moves by t along axis.
    bool shifted(std::size_t i, int axis, double t, double& v) const {
        const Pixel& p = px_[i];
        if (p.interior) {
            v = warped_.image[i] + t * p.slope[axis] + t * t * p.curv[axis];
            return true;
        }
        double sx, sy;
        if (!to_source(p.qx + (axis == 0 ? t : 0.0), p.qy + (axis == 1 ? t : 0.0), sx, sy)) return false;
        return bilinear(J_, sx, sy, v);
    }

private:
    struct Pixel {
        double qx = 0.0, qy = 0.0;
        std::array<double, 2> slope{};  // d value / d q_a inside the current cell
        std::array<double, 2> curv{};   // second-order term along q_a
        bool valid = false;
        bool interior = false;  // every shift of the pixel stays inside one bilinear cell
    };

    bool to_source(double qx, double qy, double& sx, double& sy) const {
        const auto& m = pre_.m;
        if (affine_) {
            sx = m[0] * qx + m[1] * qy + m[2];
            sy = m[3] * qx + m[4] * qy + m[5];
            return true;
        }
        const double den = m[6] * qx + m[7] * qy + m[8];
        if (den == 0.0) return false;
        sx = (m[0] * qx + m[1] * qy + m[2]) / den;
        sy = (m[3] * qx + m[4] * qy + m[5]) / den;
        return true;
    }

    // Cell convention of bilinear(): the last row/column belongs to the cell before it.
    bool cell(double sx, double sy, int& x0, int& y0, double& fx, double& fy) const {
        const int w = J_.width(), h = J_.height();
        if (w < 2 || h < 2) return false;
        x0 = std::min(static_cast<int>(sx), w - 2);
        y0 = std::min(static_cast<int>(sy), h - 2);
        fx = sx - x0;
        fy = sy - y0;
        return true;
    }

    const Image2D& J_;
    HomogeneousTransform2D pre_;
    bool affine_;
    int w_, h_;
    WarpResult warped_;
    std::vector<Pixel> px_;
};

// Pixels (coordinate, weight) influenced by each control point along one axis.
inline std::vector<std::vector<std::pair<int, double>>> influence(const std::vector<AxisSupport>& s, int n) {
    std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(n));
    for (int x = 0; x < static_cast<int>(s.size()); ++x)
        for (int l = 0; l < 4; ++l)
            if (s[x].w[l] != 0.0) out[s[x].first + l].emplace_back(x, s[x].w[l]);
    return out;
}

// --- smooth measures ---------------------------------------------------------

inline void chained_gradient(const Image2D& dcost, const LocalWarp& lw, const ControlGrid& g,
                             const std::vector<AxisSupport>& xs, const std::vector<AxisSupport>& ys, double step,
                             std::vector<double>& grad) {
    const int w = dcost.width(), h = dcost.height();
    // Interior pixels: the central difference of the warped intensity is
    // weight * slope, so the sum factors into separable passes.
    std::vector<std::vector<Vec2>> rows(static_cast<std::size_t>(h), std::vector<Vec2>(g.nx));
    parallel_for(0, h, [&](int y) {
        auto& acc = rows[y];
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double c = dcost[i];
            if (c == 0.0 || !lw.interior(i)) continue;
            const Vec2 f{c * lw.slope(i, 0), c * lw.slope(i, 1)};
            for (int l = 0; l < 4; ++l) acc[xs[x].first + l] += xs[x].w[l] * f;
        }
    });
    std::vector<Vec2> out(g.size());
    for (int y = 0; y < h; ++y)
        for (int m = 0; m < 4; ++m) {
            const double wy = ys[y].w[m];
            if (wy == 0.0) continue;
            const int j = ys[y].first + m;
            for (int i = 0; i < g.nx; ++i) out[static_cast<std::size_t>(j) * g.nx + i] += wy * rows[y][i];
        }
    // Remaining pixels: explicit re-sampling per control point.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double c = dcost[i];
            if (c == 0.0 || lw.interior(i)) continue;
            const double v0 = lw.warped().image[i];
            for (int m = 0; m < 4; ++m)
                for (int l = 0; l < 4; ++l) {
                    const double wt = xs[x].w[l] * ys[y].w[m];
                    if (wt == 0.0) continue;
                    const double t = step * wt;
                    Vec2& o = out[static_cast<std::size_t>(ys[y].first + m) * g.nx + xs[x].first + l];
                    for (int a = 0; a < 2; ++a) {
                        double vp = 0.0, vm = 0.0;
                        const bool okp = lw.shifted(i, a, t, vp), okm = lw.shifted(i, a, -t, vm);
                        double d = 0.0;
                        if (okp && okm) d = (vp - vm) / (2.0 * step);
                        else if (okp) d = (vp - v0) / step;
                        else if (okm) d = (v0 - vm) / step;
                        (a == 0 ? o.x : o.y) += c * d;
                    }
                }
        }
    grad.resize(2 * g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        grad[2 * k] = out[k].x;
        grad[2 * k + 1] = out[k].y;
    }
}

// --- histogram measures ------------------------------------------------------

// Hard-binned joint histograms over a set of windows, with incremental
// updates. MI/NMI use a single window covering the image.
class HistogramModel {
public:
    struct Window {
        std::vector<int> joint, ref, mov;
        int n = 0;
        double fj = 0.0, fr = 0.0, fm = 0.0;  // sums of c ln c
    };

    struct Change {
        std::size_t pixel;
        int ref;      // reference bin
        int before;   // moving bin, -1 if not evaluated
        int after;
    };

    HistogramModel(const SimilarityConfig& cfg, const Image2D& I, const WarpResult& Jw, const BinaryMask& region)
        : measure_(cfg.measure), bins_(cfg.bins), width_(I.width()) {
        const int w = I.width(), h = I.height();
        if (measure_ == Measure::LMI) {
            if (cfg.lmi_window > std::min(w, h))
                throw InvalidArgument("localized_mutual_information: window larger than image");
            const auto sx = window_starts(w, cfg.lmi_window, cfg.lmi_stride);
            const auto sy = window_starts(h, cfg.lmi_window, cfg.lmi_stride);
            cols_ = static_cast<int>(sx.size());
            win_x_.resize(w);
            win_y_.resize(h);
            for (int c = 0; c < cols_; ++c)
                for (int x = sx[c]; x < sx[c] + cfg.lmi_window; ++x) win_x_[x].push_back(c);
            for (int r = 0; r < static_cast<int>(sy.size()); ++r)
                for (int y = sy[r]; y < sy[r] + cfg.lmi_window; ++y) win_y_[y].push_back(r);
            windows_.resize(sx.size() * sy.size());
            min_count_ = static_cast<int>(kMinWindowPixels);
        } else {
            cols_ = 1;
            win_x_.assign(w, {0});
            win_y_.assign(h, {0});
            windows_.resize(1);
            min_count_ = 1;
        }
        for (auto& win : windows_) {
            win.joint.assign(static_cast<std::size_t>(bins_) * bins_, 0);
            win.ref.assign(bins_, 0);
            win.mov.assign(bins_, 0);
        }
        ref_bin_.resize(I.size());
        for (std::size_t i = 0; i < I.size(); ++i) ref_bin_[i] = hard_bin(I[i], bins_);
        evaluation_set(I, Jw, region);  // shape and emptiness checks
        for (std::size_t i = 0; i < I.size(); ++i)
            if (region[i] && Jw.valid[i]) apply(windows_, i, ref_bin_[i], hard_bin(Jw.image[i], bins_), +1, nullptr);
        for (std::size_t k = 0; k < windows_.size(); ++k) {
            const auto& win = windows_[k];
            if (win.n >= min_count_) {
                base_sum_ += score(win.n, win.fj, win.fr, win.fm);
                ++base_kept_;
            }
        }
        if (base_kept_ == 0) throw NumericError("similarity: no window has enough evaluable pixels");
    }

    int ref_bin(std::size_t i) const { return ref_bin_[i]; }
    int bins() const { return bins_; }

    // Per-worker copy of the mutable state.
    struct Scratch {
        std::vector<Window> windows;
        std::vector<std::size_t> touched;
        std::vector<char> seen;
    };

    Scratch scratch() const { return {windows_, {}, std::vector<char>(windows_.size(), 0)}; }

    // Cost after applying `changes`; the scratch state is restored afterwards.
    double cost(const std::vector<Change>& changes, Scratch& s) const {
        if (changes.empty()) return finish(base_sum_, base_kept_);
        for (const auto& c : changes) {
            if (c.before >= 0) apply(s.windows, c.pixel, c.ref, c.before, -1, &s);
            if (c.after >= 0) apply(s.windows, c.pixel, c.ref, c.after, +1, &s);
        }
        double sum = base_sum_;
        long kept = base_kept_;
        for (auto k : s.touched) {
            const Window& b = windows_[k];
            Window& t = s.windows[k];
            if (b.n >= min_count_) {
                sum -= score(b.n, b.fj, b.fr, b.fm);
                --kept;
            }
            if (t.n >= min_count_) {
                sum += score(t.n, t.fj, t.fr, t.fm);
                ++kept;
            }
        }
        for (auto it = changes.rbegin(); it != changes.rend(); ++it) {
            if (it->after >= 0) apply(s.windows, it->pixel, it->ref, it->after, -1, nullptr);
            if (it->before >= 0) apply(s.windows, it->pixel, it->ref, it->before, +1, nullptr);
        }
        for (auto k : s.touched) {
            s.windows[k].fj = windows_[k].fj;
            s.windows[k].fr = windows_[k].fr;
            s.windows[k].fm = windows_[k].fm;
            s.seen[k] = 0;
        }
        s.touched.clear();
        if (kept == 0) throw NumericError("similarity: no window has enough evaluable pixels");
        return finish(sum, kept);
    }

private:
    static void bump(int& c, double& f, int delta) {
        const int nc = c + delta;
        f += xlogx(nc) - xlogx(c);
        c = nc;
    }

    void apply(std::vector<Window>& ws, std::size_t i, int a, int b, int delta, Scratch* track) const {
        const int x = static_cast<int>(i % width_), y = static_cast<int>(i / width_);
        for (int r : win_y_[y])
            for (int c : win_x_[x]) {
                const std::size_t k = static_cast<std::size_t>(r) * cols_ + c;
                Window& win = ws[k];
                if (track && !track->seen[k]) {
                    track->seen[k] = 1;
                    track->touched.push_back(k);
                }
                bump(win.joint[static_cast<std::size_t>(a) * bins_ + b], win.fj, delta);
                bump(win.ref[a], win.fr, delta);
                bump(win.mov[b], win.fm, delta);
                win.n += delta;
            }
    }

    // MI for MI/LMI windows, NMI otherwise.
    double score(int n, double fj, double fr, double fm) const {
        const double ln = std::log(static_cast<double>(n));
        if (measure_ == Measure::NMI) {
            const double hj = ln - fj / n;
            if (hj <= 0.0) throw NumericError("normalized_mutual_information: zero joint entropy");
            return ((ln - fr / n) + (ln - fm / n)) / hj;
        }
        return ln + (fj - fr - fm) / n;
    }

    static double finish(double sum, long kept) { return -sum / static_cast<double>(kept); }

    Measure measure_;
    int bins_;
    int width_;
    int cols_ = 1;
    int min_count_ = 1;
    std::vector<std::vector<int>> win_x_, win_y_;
    std::vector<Window> windows_;
    std::vector<int> ref_bin_;
    double base_sum_ = 0.0;
    long base_kept_ = 0;
};

inline void histogram_gradient(const SimilarityConfig& cfg, const Image2D& I, const BinaryMask& region,
                               const LocalWarp& lw, const ControlGrid& g, const std::vector<AxisSupport>& xs,
                               const std::vector<AxisSupport>& ys, double step, std::vector<double>& grad) {
    const HistogramModel model(cfg, I, lw.warped(), region);
    const auto cols = influence(xs, g.nx);
    const auto rows = influence(ys, g.ny);
    const int w = I.width();
    const WarpResult& Jw = lw.warped();
    grad.assign(2 * g.size(), 0.0);
    parallel_for(0, g.ny, [&](int j) {
        auto scratch = model.scratch();
        std::vector<HistogramModel::Change> plus, minus;
        for (int i = 0; i < g.nx; ++i)
            for (int a = 0; a < 2; ++a) {
                plus.clear();
                minus.clear();
                for (const auto& [y, wy] : rows[j])
                    for (const auto& [x, wx] : cols[i]) {
                        const std::size_t p = static_cast<std::size_t>(y) * w + x;
                        if (!region[p]) continue;
                        const int before = Jw.valid[p] ? hard_bin(Jw.image[p], model.bins()) : -1;
                        const double t = step * wx * wy;
                        for (int sgn : {+1, -1}) {
                            double v;
                            const int after = lw.shifted(p, a, sgn * t, v) ? hard_bin(v, model.bins()) : -1;
                            if (after != before)
                                (sgn > 0 ? plus : minus).push_back({p, model.ref_bin(p), before, after});
                        }
                    }
                if (plus.empty() && minus.empty()) continue;
                const double cp = model.cost(plus, scratch), cm = model.cost(minus, scratch);
                grad[2 * (static_cast<std::size_t>(j) * g.nx + i) + a] = (cp - cm) / (2.0 * step);
            }
    });
}

} // namespace detail

/// Cost and its gradient at `grid`; central differences with shift `step` px.
inline GradientResult gradient_with_value(const SimilarityConfig& cfg, const Image2D& I, const Image2D& J,
                                          const HomogeneousTransform2D& pre, const ControlGrid& grid,
                                          const BinaryMask& region, double step = 0.1) {
    validate(cfg);
    if (!(step > 0.0)) throw InvalidArgument("gradient: step must be positive");
    const int w = I.width(), h = I.height();
    const DeformationField field = densify(grid, w, h);
    const auto xs = detail::lattice_supports(w, grid.origin_x, grid.spacing_x);
    const auto ys = detail::lattice_supports(h, grid.origin_y, grid.spacing_y);
    const detail::LocalWarp lw(J, pre, field, xs, ys, step);
    GradientResult r;
    r.value = evaluate(cfg, I, lw.warped(), region);
    if (cfg.measure == Measure::MI || cfg.measure == Measure::NMI || cfg.measure == Measure::LMI) {
        detail::histogram_gradient(cfg, I, region, lw, grid, xs, ys, step, r.grad);
    } else {
        const CostDerivative cd = cost_derivative(cfg, I, lw.warped(), region);
        detail::chained_gradient(cd.d_warped, lw, grid, xs, ys, step, r.grad);
    }
    return r;
}

inline std::vector<double> gradient(const SimilarityConfig& cfg, const Image2D& I, const Image2D& J,
                                    const HomogeneousTransform2D& pre, const ControlGrid& grid,
                                    const BinaryMask& region, double step = 0.1) {
    return gradient_with_value(cfg, I, J, pre, grid, region, step).grad;
}

} // namespace specreg
