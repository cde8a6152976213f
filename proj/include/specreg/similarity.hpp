/**
 * @file similarity.hpp
 * @brief Intensity-based similarity measures.
 *
 * Every measure is evaluated on E = region AND warped.valid. evaluate()
 * returns a cost to minimize: SSD and RC as is, the similarities (CC, CR, MI,
 * NMI, LMI) negated.
 *
 * Histogram measures use hard binning: floor(v * bins), clamped.
 */
#pragma once

#include "bspline.hpp"
#include "dct.hpp"
#include "error.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "transform.hpp"
#include "warp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace specreg {

// =============================================================================
// Configuration
// =============================================================================

enum class Measure { SSD, CC, CR, MI, NMI, LMI, RC };

inline std::string_view to_string(Measure m) {
    switch (m) {
        case Measure::SSD: return "ssd";
        case Measure::CC: return "cc";
        case Measure::CR: return "cr";
        case Measure::MI: return "mi";
        case Measure::NMI: return "nmi";
        case Measure::LMI: return "lmi";
        case Measure::RC: return "rc";
    }
    return "?";
}

inline std::optional<Measure> parse_measure(std::string_view s) {
    std::string l(s);
    for (auto& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (Measure m : {Measure::SSD, Measure::CC, Measure::CR, Measure::MI, Measure::NMI, Measure::LMI, Measure::RC})
        if (to_string(m) == l) return m;
    return std::nullopt;
}

/// True for measures computed from intensity histograms.
inline bool is_histogram_measure(Measure m) {
    return m == Measure::CR || m == Measure::MI || m == Measure::NMI || m == Measure::LMI;
}

struct SimilarityConfig {
    Measure measure = Measure::SSD;
    int bins = 64;
    double rc_alpha = 0.05;
    int lmi_window = 64;
    int lmi_stride = 64;
};

inline void validate(const SimilarityConfig& c) {
    if (c.bins < 2) throw InvalidArgument("SimilarityConfig: bins must be >= 2");
    if (!(c.rc_alpha > 0.0)) throw InvalidArgument("SimilarityConfig: rc_alpha must be > 0");
    if (c.lmi_window < 8) throw InvalidArgument("SimilarityConfig: lmi_window must be >= 8");
    if (c.lmi_stride < 1) throw InvalidArgument("SimilarityConfig: lmi_stride must be >= 1");
}

inline BinaryMask full_mask(int width, int height) { return BinaryMask(width, height, true); }

namespace detail {

// Pixel indices of region AND valid, ascending.
inline std::vector<std::size_t> evaluation_set(const Image2D& I, const WarpResult& Jw, const BinaryMask& region) {
    if (!I.same_shape(Jw.image) || !region.same_shape(I) || !Jw.valid.same_shape(I))
        throw InvalidArgument("similarity: image/mask dimensions disagree");
    std::vector<std::size_t> idx;
    idx.reserve(I.size());
    for (std::size_t i = 0; i < I.size(); ++i)
        if (region[i] && Jw.valid[i]) idx.push_back(i);
    if (idx.empty()) throw NumericError("similarity: empty evaluation region");
    return idx;
}

inline int hard_bin(double v, int bins) { return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1); }

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

} // namespace detail

// =============================================================================
// Difference / correlation measures
// =============================================================================

inline double ssd(const Image2D& I, const WarpResult& Jw, const BinaryMask& region) {
    const auto E = detail::evaluation_set(I, Jw, region);
    double s = 0.0;
    for (auto i : E) {
        const double d = I[i] - Jw.image[i];
        s += d * d;
    }
    return s / static_cast<double>(E.size());
}

/// Pearson coefficient with population standard deviations.
inline double cross_correlation(const Image2D& I, const WarpResult& Jw, const BinaryMask& region) {
    const auto E = detail::evaluation_set(I, Jw, region);
    const double n = static_cast<double>(E.size());
    double mi = 0.0, mj = 0.0;
    for (auto i : E) {
        mi += I[i];
        mj += Jw.image[i];
    }
    mi /= n;
    mj /= n;
    double sij = 0.0, sii = 0.0, sjj = 0.0;
    for (auto i : E) {
        const double a = I[i] - mi, b = Jw.image[i] - mj;
        sij += a * b;
        sii += a * a;
        sjj += b * b;
    }
    if (sii <= 0.0 || sjj <= 0.0) throw NumericError("cross_correlation: zero variance");
    return sij / std::sqrt(sii * sjj);
}

/// eta = 1 - sum_k N_k var_k / (N var); iso-sets are hard bins of I.
inline double correlation_ratio(const Image2D& I, const WarpResult& Jw, const BinaryMask& region, int bins) {
    if (bins < 2) throw InvalidArgument("correlation_ratio: bins must be >= 2");
    const auto E = detail::evaluation_set(I, Jw, region);
    const double n = static_cast<double>(E.size());
    std::vector<double> cnt(bins), sum(bins);
    double mean = 0.0;
    for (auto i : E) {
        const int k = detail::hard_bin(I[i], bins);
        cnt[k] += 1.0;
        sum[k] += Jw.image[i];
        mean += Jw.image[i];
    }
    mean /= n;
    double total = 0.0, within = 0.0;
    for (auto i : E) {
        const int k = detail::hard_bin(I[i], bins);
        const double mk = sum[k] / cnt[k];
        const double v = Jw.image[i];
        total += (v - mean) * (v - mean);
        within += (v - mk) * (v - mk);
    }
    if (total <= 0.0) throw NumericError("correlation_ratio: zero total variance");
    return 1.0 - within / total;
}

// =============================================================================
// Histograms and information measures
// =============================================================================

/// Joint counts; rows index the reference bin, columns the moving bin.
struct JointHistogram {
    int bins = 0;
    std::vector<double> counts;  // bins * bins

    double at(int i, int j) const { return counts[static_cast<std::size_t>(i) * bins + j]; }
    double total() const {
        double s = 0.0;
        for (double c : counts) s += c;
        return s;
    }
    std::vector<double> marginal_ref() const {
        std::vector<double> m(bins);
        for (int i = 0; i < bins; ++i)
            for (int j = 0; j < bins; ++j) m[i] += at(i, j);
        return m;
    }
    std::vector<double> marginal_mov() const {
        std::vector<double> m(bins);
        for (int i = 0; i < bins; ++i)
            for (int j = 0; j < bins; ++j) m[j] += at(i, j);
        return m;
    }
};

namespace detail {

inline JointHistogram histogram_over(const Image2D& I, const Image2D& J, const std::vector<std::size_t>& E, int bins) {
    JointHistogram h{bins, std::vector<double>(static_cast<std::size_t>(bins) * bins)};
    for (auto i : E) h.counts[static_cast<std::size_t>(hard_bin(I[i], bins)) * bins + hard_bin(J[i], bins)] += 1.0;
    return h;
}

struct Entropies {
    double ref = 0.0, mov = 0.0, joint = 0.0;
};

// Plug-in entropies (nats) from counts.
inline Entropies entropies(const JointHistogram& h) {
    const double n = h.total();
    Entropies e;
    for (double c : h.counts) e.joint -= xlogx(c / n);
    for (double c : h.marginal_ref()) e.ref -= xlogx(c / n);
    for (double c : h.marginal_mov()) e.mov -= xlogx(c / n);
    return e;
}

inline double mi_from(const JointHistogram& h) {
    const double n = h.total();
    const auto pr = h.marginal_ref(), pm = h.marginal_mov();
    double mi = 0.0;
    for (int i = 0; i < h.bins; ++i)
        for (int j = 0; j < h.bins; ++j) {
            const double c = h.at(i, j);
            if (c > 0.0) mi += (c / n) * std::log(c * n / (pr[i] * pm[j]));
        }
    return mi;
}

} // namespace detail

inline JointHistogram joint_histogram(const Image2D& I, const WarpResult& Jw, const BinaryMask& region, int bins) {
    if (bins < 2) throw InvalidArgument("joint_histogram: bins must be >= 2");
    return detail::histogram_over(I, Jw.image, detail::evaluation_set(I, Jw, region), bins);
}

/// Plug-in mutual information in nats.
inline double mutual_information(const Image2D& I, const WarpResult& Jw, const BinaryMask& region, int bins) {
    return detail::mi_from(joint_histogram(I, Jw, region, bins));
}

/// (H(I) + H(J)) / H(I,J).
inline double normalized_mutual_information(const Image2D& I, const WarpResult& Jw, const BinaryMask& region, int bins) {
    const auto e = detail::entropies(joint_histogram(I, Jw, region, bins));
    if (e.joint <= 0.0) throw NumericError("normalized_mutual_information: zero joint entropy");
    return (e.ref + e.mov) / e.joint;
}

namespace detail {

// Window start offsets along one axis: 0, stride, 2*stride, ... plus a final
// window flush with the far edge when the regular tiling leaves a remainder.
inline std::vector<int> window_starts(int length, int window, int stride) {
    std::vector<int> s;
    for (int p = 0; p + window <= length; p += stride) s.push_back(p);
    if (s.empty() || s.back() + window < length) s.push_back(length - window);
    return s;
}

inline constexpr std::size_t kMinWindowPixels = 32;

struct Window {
    std::vector<std::size_t> pixels;
};

inline std::vector<Window> lmi_windows(const Image2D& I, const WarpResult& Jw, const BinaryMask& region,
                                       const SimilarityConfig& cfg) {
    const int w = I.width(), h = I.height();
    const int win = cfg.lmi_window;
    if (win > std::min(w, h)) throw InvalidArgument("localized_mutual_information: window larger than image");
    evaluation_set(I, Jw, region);  // shape checks
    std::vector<Window> out;
    for (int y0 : window_starts(h, win, cfg.lmi_stride))
        for (int x0 : window_starts(w, win, cfg.lmi_stride)) {
            Window wd;
            for (int y = y0; y < y0 + win; ++y)
                for (int x = x0; x < x0 + win; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    if (region[i] && Jw.valid[i]) wd.pixels.push_back(i);
                }
            if (wd.pixels.size() >= kMinWindowPixels) out.push_back(std::move(wd));
        }
    if (out.empty()) throw NumericError("localized_mutual_information: no window has enough evaluable pixels");
    return out;
}

} // namespace detail

/// Mean of per-window MI over square windows tiling the image.
inline double localized_mutual_information(const Image2D& I, const WarpResult& Jw, const BinaryMask& region,
                                           const SimilarityConfig& cfg) {
    validate(cfg);
    const auto windows = detail::lmi_windows(I, Jw, region, cfg);
    double s = 0.0;
    for (const auto& wd : windows) s += detail::mi_from(detail::histogram_over(I, Jw.image, wd.pixels, cfg.bins));
    return s / static_cast<double>(windows.size());
}

// =============================================================================
// Residual complexity
// =============================================================================

namespace detail {

inline Image2D masked_residual(const Image2D& I, const WarpResult& Jw, const std::vector<std::size_t>& E) {
    Image2D r(I.width(), I.height());
    for (auto i : E) r[i] = I[i] - Jw.image[i];
    return r;
}

inline double rc_from_spectrum(const ResidualSpectrum& s, double alpha) {
    double e = 0.0;
    for (double c : s.coefficients.data()) e += std::log1p(c * c / alpha);
    return e;
}

} // namespace detail

/// sum_n ln(c_n^2/alpha + 1) over the orthonormal DCT of r = I - Jw
/// (r = 0 outside the evaluation region).
inline double residual_complexity(const Image2D& I, const WarpResult& Jw, const BinaryMask& region, double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("residual_complexity: alpha must be > 0");
    const auto E = detail::evaluation_set(I, Jw, region);
    return detail::rc_from_spectrum(dct2(detail::masked_residual(I, Jw, E)), alpha);
}

// =============================================================================
// evaluate
// =============================================================================

/// Cost to minimize for the configured measure.
inline double evaluate(const SimilarityConfig& cfg, const Image2D& I, const WarpResult& Jw, const BinaryMask& region) {
    validate(cfg);
    switch (cfg.measure) {
        case Measure::SSD: return ssd(I, Jw, region);
        case Measure::CC: return -cross_correlation(I, Jw, region);
        case Measure::CR: return -correlation_ratio(I, Jw, region, cfg.bins);
        case Measure::MI: return -mutual_information(I, Jw, region, cfg.bins);
        case Measure::NMI: return -normalized_mutual_information(I, Jw, region, cfg.bins);
        case Measure::LMI: return -localized_mutual_information(I, Jw, region, cfg);
        case Measure::RC: return residual_complexity(I, Jw, region, cfg.rc_alpha);
    }
    throw InvalidArgument("evaluate: unknown measure");
}

// =============================================================================
// Derivative of the cost with respect to each warped intensity
// =============================================================================

/// Cost value plus d(cost)/d(warped intensity) per pixel (0 outside E).
struct CostDerivative {
    double value = 0.0;
    Image2D d_warped;
};

inline CostDerivative cost_derivative(const SimilarityConfig& cfg, const Image2D& I, const WarpResult& Jw,
                                      const BinaryMask& region) {
    validate(cfg);
    const auto E = detail::evaluation_set(I, Jw, region);
    const double n = static_cast<double>(E.size());
    const Image2D& J = Jw.image;
    CostDerivative out{evaluate(cfg, I, Jw, region), Image2D(I.width(), I.height())};
    Image2D& d = out.d_warped;
    switch (cfg.measure) {
        case Measure::SSD:
            for (auto i : E) d[i] = -2.0 * (I[i] - J[i]) / n;
            break;
        case Measure::CC: {
            double mi = 0.0, mj = 0.0;
            for (auto i : E) { mi += I[i]; mj += J[i]; }
            mi /= n;
            mj /= n;
            double sij = 0.0, sii = 0.0, sjj = 0.0;
            for (auto i : E) {
                sij += (I[i] - mi) * (J[i] - mj);
                sii += (I[i] - mi) * (I[i] - mi);
                sjj += (J[i] - mj) * (J[i] - mj);
            }
            const double root = std::sqrt(sii * sjj);
            const double cc = sij / root;
            // d(-cc)/dJ_i
            for (auto i : E) d[i] = -((I[i] - mi) / root - cc * (J[i] - mj) / sjj);
            break;
        }
        case Measure::CR: {
            std::vector<double> cnt(cfg.bins), sum(cfg.bins);
            double mean = 0.0;
            for (auto i : E) {
                const int k = detail::hard_bin(I[i], cfg.bins);
                cnt[k] += 1.0;
                sum[k] += J[i];
                mean += J[i];
            }
            mean /= n;
            double total = 0.0, within = 0.0;
            for (auto i : E) {
                const double mk = sum[detail::hard_bin(I[i], cfg.bins)] / cnt[detail::hard_bin(I[i], cfg.bins)];
                total += (J[i] - mean) * (J[i] - mean);
                within += (J[i] - mk) * (J[i] - mk);
            }
            // cost = within/total - 1
            for (auto i : E) {
                const double mk = sum[detail::hard_bin(I[i], cfg.bins)] / cnt[detail::hard_bin(I[i], cfg.bins)];
                d[i] = 2.0 * (J[i] - mk) / total - within * 2.0 * (J[i] - mean) / (total * total);
            }
            break;
        }
        case Measure::MI:
        case Measure::NMI:
        case Measure::LMI:
            throw InvalidArgument("cost_derivative: histogram measures are piecewise constant in the warped intensities");
        case Measure::RC: {
            ResidualSpectrum s = dct2(detail::masked_residual(I, Jw, E));
            for (auto& c : s.coefficients.data()) c = 2.0 * c / (c * c + cfg.rc_alpha);
            const Image2D dr = idct2(s);
            for (auto i : E) d[i] = -dr[i];
            break;
        }
    }
    return out;
}

/// Cost at a given grid (warp + evaluate).
inline double objective(const SimilarityConfig& cfg, const Image2D& I, const Image2D& J,
                        const HomogeneousTransform2D& pre, const ControlGrid& grid, const BinaryMask& region) {
    const DeformationField field = densify(grid, I.width(), I.height());
    return evaluate(cfg, I, warp_image(J, pre, &field), region);
}

} // namespace specreg
