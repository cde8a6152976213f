/**
 * @file dct.hpp
 * @brief Orthonormal 2D DCT-II / DCT-III (inverse) backed by FFTW r2r plans.
 */
#pragma once

#include "image.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

namespace specreg {

/// Orthonormal DCT-II coefficients, same layout as the transformed raster.
struct ResidualSpectrum {
    Image2D coefficients;
};

namespace detail {

class DctPlans {
public:
    static DctPlans& instance() {
        static DctPlans p;
        return p;
    }

    // Plans are created under a lock (FFTW planning is not thread-safe);
    // execution with fftw_execute_r2r on fresh buffers is.
    std::pair<fftw_plan, fftw_plan> get(int w, int h) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = plans_.find({w, h});
        if (it != plans_.end()) return it->second;
        double* buf = fftw_alloc_real(static_cast<std::size_t>(w) * h);
        fftw_plan fwd = fftw_plan_r2r_2d(h, w, buf, buf, FFTW_REDFT10, FFTW_REDFT10, FFTW_ESTIMATE);
        fftw_plan inv = fftw_plan_r2r_2d(h, w, buf, buf, FFTW_REDFT01, FFTW_REDFT01, FFTW_ESTIMATE);
        fftw_free(buf);
        plans_[{w, h}] = {fwd, inv};
        return {fwd, inv};
    }

    ~DctPlans() {
        for (auto& [k, p] : plans_) {
            fftw_destroy_plan(p.first);
            fftw_destroy_plan(p.second);
        }
    }

private:
    std::mutex mu_;
    std::map<std::pair<int, int>, std::pair<fftw_plan, fftw_plan>> plans_;
};

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : p(fftw_alloc_real(n)) {}
    ~FftwBuffer() { fftw_free(p); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    double* p;
};

inline double ortho_scale(int k, int n) { return k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n); }

} // namespace detail

inline ResidualSpectrum dct2(const Image2D& x) {
    const int w = x.width(), h = x.height();
    auto [fwd, inv] = detail::DctPlans::instance().get(w, h);
    detail::FftwBuffer buf(x.size());
    std::copy(x.data().begin(), x.data().end(), buf.p);
    fftw_execute_r2r(fwd, buf.p, buf.p);
    Image2D c(w, h);
    for (int ky = 0; ky < h; ++ky) {
        const double sy = detail::ortho_scale(ky, h) * 0.5;
        for (int kx = 0; kx < w; ++kx)
            c.at(kx, ky) = buf.p[static_cast<std::size_t>(ky) * w + kx] * sy * detail::ortho_scale(kx, w) * 0.5;
    }
    return {std::move(c)};
}

inline Image2D idct2(const ResidualSpectrum& s) {
    const Image2D& c = s.coefficients;
    const int w = c.width(), h = c.height();
    auto [fwd, inv] = detail::DctPlans::instance().get(w, h);
    detail::FftwBuffer buf(c.size());
    for (int ky = 0; ky < h; ++ky) {
        const double sy = detail::ortho_scale(ky, h) * (ky == 0 ? 1.0 : 0.5);
        for (int kx = 0; kx < w; ++kx)
            buf.p[static_cast<std::size_t>(ky) * w + kx] =
                c.at(kx, ky) * sy * detail::ortho_scale(kx, w) * (kx == 0 ? 1.0 : 0.5);
    }
    fftw_execute_r2r(inv, buf.p, buf.p);
    return Image2D(w, h, std::vector<double>(buf.p, buf.p + c.size()));
}

} // namespace specreg
