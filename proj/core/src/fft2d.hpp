#pragma once
// Internal FFTW wrappers shared by the grid modules.

#include "critdiff/errors.hpp"

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <vector>

namespace critdiff::detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

using Spectrum = std::vector<std::complex<double>>;

// Unnormalized real 2D transforms on an n x n grid; the half spectrum is n x (n/2 + 1).
class RealFft2d {
  public:
    explicit RealFft2d(std::size_t n) : n_(n), nh_(n / 2 + 1) {
        std::vector<double> r(n * n);
        Spectrum c(n * nh_);
        const int ni = static_cast<int>(n);
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        fwd_ = fftw_plan_dft_r2c_2d(ni, ni, r.data(), reinterpret_cast<fftw_complex*>(c.data()),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        bwd_ = fftw_plan_dft_c2r_2d(ni, ni, reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!fwd_ || !bwd_) throw NumericError("fft: FFTW planning failed");
    }
    ~RealFft2d() {
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    RealFft2d(const RealFft2d&) = delete;
    RealFft2d& operator=(const RealFft2d&) = delete;

    std::size_t n() const { return n_; }
    std::size_t half() const { return nh_; }
    std::size_t spectrum_size() const { return n_ * nh_; }

    void forward(const std::vector<double>& in, Spectrum& out) const {
        out.resize(spectrum_size());
        fftw_execute_dft_r2c(fwd_, const_cast<double*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    }
    // Destroys \p in.
    void backward(Spectrum& in, std::vector<double>& out) const {
        out.resize(n_ * n_);
        fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    }

  private:
    std::size_t n_, nh_;
    fftw_plan fwd_, bwd_;
};

inline const RealFft2d& real_fft(std::size_t n) {
    static std::mutex mu;
    static std::vector<std::pair<std::size_t, std::unique_ptr<RealFft2d>>> cache;
    std::lock_guard<std::mutex> lk(mu);
    for (auto& [m, p] : cache)
        if (m == n) return *p;
    cache.emplace_back(n, std::make_unique<RealFft2d>(n));
    return *cache.back().second;
}

}  // namespace critdiff::detail
