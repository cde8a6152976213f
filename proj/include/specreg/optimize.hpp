/**
 * @file optimize.hpp
 * @brief Steepest descent with backtracking, and the coarse-to-fine schedule
 *        over image pyramids and control-grid refinement.
 */
#pragma once

#include "bspline.hpp"
#include "error.hpp"
#include "filters.hpp"
#include "gradient.hpp"
#include "similarity.hpp"
#include "transform.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace specreg {

struct OptimizerConfig {
    int max_iters = 200;  // per level
    double initial_step = 1.0;
    double backtrack_factor = 0.5;
    double min_step = 1e-6;
    double rel_tol = 1e-6;
    int pyramid_levels = 4;
    // Divide the search direction by its largest component, so a step of
    // alpha moves the largest parameter by alpha.
    bool normalize_direction = false;
};

inline void validate(const OptimizerConfig& c) {
    if (c.max_iters < 0) throw InvalidArgument("OptimizerConfig: max_iters must be >= 0");
    if (!(c.initial_step > 0.0)) throw InvalidArgument("OptimizerConfig: initial_step must be > 0");
    if (!(c.backtrack_factor > 0.0 && c.backtrack_factor < 1.0))
        throw InvalidArgument("OptimizerConfig: backtrack_factor must be in (0,1)");
    if (!(c.min_step > 0.0)) throw InvalidArgument("OptimizerConfig: min_step must be > 0");
    if (!(c.rel_tol > 0.0)) throw InvalidArgument("OptimizerConfig: rel_tol must be > 0");
    if (c.pyramid_levels < 1) throw InvalidArgument("OptimizerConfig: pyramid_levels must be >= 1");
}

inline constexpr double kGradientTolerance = 1e-9;

/// One accepted iterate. Iteration 0 is the starting point (step 0).
struct TraceEntry {
    int level = 0;
    int iteration = 0;
    double objective = 0.0;
    double step = 0.0;
    double grad_norm = 0.0;
};

struct OptimizerTrace {
    std::vector<TraceEntry> entries;
    bool aborted = false;  // a non-finite value stopped the run

    /// Accepted steps (entries after each level's iteration 0).
    int iterations() const {
        int n = 0;
        for (const auto& e : entries) n += e.iteration > 0;
        return n;
    }
};

struct MinimizeResult {
    std::vector<double> x;
    OptimizerTrace trace;
};

using ObjectiveFn = std::function<double(const std::vector<double>&)>;
using GradientFn = std::function<std::vector<double>(const std::vector<double>&)>;

namespace detail {

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace detail

/// x_{s+1} = x_s - alpha_s grad(x_s); alpha_s starts at initial_step and is
/// multiplied by backtrack_factor until the objective decreases.
inline MinimizeResult minimize(const ObjectiveFn& objective, const GradientFn& grad, std::vector<double> x0,
                               const OptimizerConfig& cfg, int level = 0) {
    validate(cfg);
    MinimizeResult r;
    double f = objective(x0);
    if (!std::isfinite(f)) throw NumericError("minimize: objective is not finite at the starting point");
    r.x = std::move(x0);
    std::vector<double> g = grad(r.x);
    if (!detail::all_finite(g)) {
        r.trace.aborted = true;
        r.trace.entries.push_back({level, 0, f, 0.0, std::numeric_limits<double>::quiet_NaN()});
        return r;
    }
    double gn = detail::norm2(g);
    r.trace.entries.push_back({level, 0, f, 0.0, gn});
    std::vector<double> trial(r.x.size());
    for (int it = 1; it <= cfg.max_iters; ++it) {
        if (gn < kGradientTolerance) break;
        double alpha = cfg.initial_step;
        double ft = f;
        double dscale = 1.0;
        if (cfg.normalize_direction) {
            double gmax = 0.0;
            for (double v : g) gmax = std::max(gmax, std::abs(v));
            dscale = 1.0 / gmax;
        }
        bool accepted = false;
        while (alpha >= cfg.min_step) {
            for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = r.x[k] - alpha * dscale * g[k];
            ft = objective(trial);
            if (!std::isfinite(ft)) {
                r.trace.aborted = true;
                return r;
            }
            if (ft < f) {
                accepted = true;
                break;
            }
            alpha *= cfg.backtrack_factor;
        }
        if (!accepted) break;
        const double improvement = (f - ft) / std::max(std::abs(f), std::numeric_limits<double>::min());
        r.x.swap(trial);
        f = ft;
        g = grad(r.x);
        if (!detail::all_finite(g)) {
            r.trace.aborted = true;
            r.trace.entries.push_back({level, it, f, alpha, std::numeric_limits<double>::quiet_NaN()});
            return r;
        }
        gn = detail::norm2(g);
        r.trace.entries.push_back({level, it, f, alpha, gn});
        if (improvement < cfg.rel_tol) break;
    }
    return r;
}

// =============================================================================
// Coarse-to-fine schedule
// =============================================================================

struct ScheduleResult {
    ControlGrid grid;  // full-resolution pixel units
    OptimizerTrace trace;
};

/// Appends zero control points until the grid supports a width x height
/// lattice. Added points lie outside the old support, so the field there is
/// unchanged.
inline ControlGrid extend_to_cover(const ControlGrid& g, int width, int height) {
    ControlGrid r = g;
    const int nx = std::max(g.nx, static_cast<int>(std::floor((width - 1 - g.origin_x) / g.spacing_x)) + 3);
    const int ny = std::max(g.ny, static_cast<int>(std::floor((height - 1 - g.origin_y) / g.spacing_y)) + 3);
    if (nx == g.nx && ny == g.ny) return r;
    r.nx = nx;
    r.ny = ny;
    r.disp.assign(static_cast<std::size_t>(nx) * ny, Vec2{});
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) r.at(i, j) = g.at(i, j);
    return r;
}

/// Optimizes a control grid over matched pyramids of ref and mov. `pre` maps
/// reference pixels into the moving image at full resolution. Steps are
/// measured in pixels of the current level: a trial step alpha moves the
/// control point with the largest gradient component by alpha.
inline ScheduleResult schedule(const Image2D& ref, const Image2D& mov, const OptimizerConfig& cfg,
                               const SimilarityConfig& sim, double coarse_spacing,
                               const HomogeneousTransform2D& pre = {}) {
    validate(cfg);
    validate(sim);
    if (!(coarse_spacing > 0.0)) throw InvalidArgument("schedule: coarse_spacing must be > 0");
    const int levels = std::min(usable_pyramid_levels(ref.width(), ref.height(), cfg.pyramid_levels),
                                usable_pyramid_levels(mov.width(), mov.height(), cfg.pyramid_levels));
    const Pyramid pr = build_pyramid(ref, levels), pm = build_pyramid(mov, levels);
    OptimizerConfig level_cfg = cfg;
    level_cfg.normalize_direction = true;
    ScheduleResult out;
    const int top = levels - 1;
    const Image2D& top_ref = pr.levels[top];
    out.grid = make_control_grid(top_ref.width(), top_ref.height(), std::max(1.0, std::ldexp(coarse_spacing, -top)));
    for (int l = top; l >= 0; --l) {
        const Image2D& I = pr.levels[l];
        const Image2D& J = pm.levels[l];
        const HomogeneousTransform2D pre_l = at_pyramid_level(pre, l);
        const BinaryMask region = full_mask(I.width(), I.height());
        SimilarityConfig sim_l = sim;
        if (sim_l.measure == Measure::LMI) {
            sim_l.lmi_window = std::min({sim.lmi_window, I.width(), I.height()});
            sim_l.lmi_stride = std::min(sim.lmi_stride, sim_l.lmi_window);
        }
        out.grid = extend_to_cover(out.grid, I.width(), I.height());
        ControlGrid work = out.grid;

        auto eval = [&](const std::vector<double>& p) {
            work.set_parameters(p);
            return objective(sim_l, I, J, pre_l, work, region);
        };
        auto grad = [&](const std::vector<double>& p) {
            work.set_parameters(p);
            return gradient(sim_l, I, J, pre_l, work, region);
        };
        auto r = minimize(eval, grad, out.grid.parameters(), level_cfg, l);
        out.grid.set_parameters(r.x);
        out.trace.entries.insert(out.trace.entries.end(), r.trace.entries.begin(), r.trace.entries.end());
        if (r.trace.aborted) {
            out.trace.aborted = true;
            out.grid = rescale_grid(out.grid, std::ldexp(1.0, l));
            break;
        }
        if (l > 0) out.grid = rescale_grid(refine_grid(out.grid), 2.0);
    }
    return out;
}

} // namespace specreg
