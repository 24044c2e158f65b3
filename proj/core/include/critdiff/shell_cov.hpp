#pragma once
//! \file shell_cov.hpp
//! Point-evaluated joint Gaussian law of the driver triple
//! (d phi, grad d phi, hess d phi) generated by one scale shell.

#include "critdiff/rng.hpp"
#include "critdiff/tensor2d.hpp"

#include <array>
#include <vector>

namespace critdiff {

//! Scale variable x = lambda~^2 = 1 + eps^2 ln L.
struct ScaleGrid {
    double eps = 0.0;
    std::vector<double> lambda2;  //!< strictly increasing, first entry 1

    static ScaleGrid uniform(double eps, double lambda2_max, std::size_t n_steps);
    double lnL(std::size_t i) const { return (lambda2[i] - 1.0) / (eps * eps); }
    void validate() const;
};

inline double lnL_of(double lambda2, double eps) { return (lambda2 - 1.0) / (eps * eps); }

//! Coordinates of the 12-vector: d phi (2), grad (4, row-major (r,c) = d_c d phi^r),
//! hess (6, (k;11),(k;12),(k;22)).
namespace drv {
inline constexpr int kPhi = 0;
inline constexpr int kGrad = 2;
inline constexpr int kHess = 6;
inline constexpr int kDim = 12;
}  // namespace drv

/*!
 * 12x12 covariance of the driver triple. For build_cov the matrix is per
 * unit increment of lambda~^2 at the left endpoint; for shell_cov it is the
 * covariance of the whole shell. When \c scaled is set the coordinates are
 * (d phi / L, grad d phi, L hess d phi), which removes every power of L.
 */
struct DriverCovariance {
    std::array<double, 144> m{};
    double lambda2 = 1.0;
    double eps = 0.0;
    double lnL = 0.0;
    bool scaled = false;

    double operator()(int i, int j) const { return m[12 * i + j]; }
    double& operator()(int i, int j) { return m[12 * i + j]; }

    //! grad block as a quadratic form on endomorphisms.
    double grad_form(const Endo2& g, const Endo2& h) const;
    //! hess block as a quadratic form on three-tensors (pairing G.hess d phi).
    double hess_form(const TriTensor& g, const TriTensor& h) const;
    //! Eigenvalues in ascending order.
    std::array<double, 12> eigenvalues() const;
};

//! Circle average of theta_1^a theta_2^b; total degree at most 6.
double angular_moment(int a, int b);

//! Per unit lambda~^2 at lambda~^2 = \p lambda2 (raw or scaled coordinates).
DriverCovariance build_cov(double lambda2, double eps, bool scaled = false);

/*!
 * Exact covariance of the increment generated by the shell
 * [x0, x1] in lambda~^2: each block integrates its L-power over the shell.
 * Raw coordinates use L measured from 1; scaled coordinates use L(x0).
 */
DriverCovariance shell_cov(double x0, double x1, double eps, bool scaled = false);

//! Integral of exp(p (y - x0) / eps^2) / y over [x0, x1], p in {-2, 0, 2}.
double shell_weight(double x0, double x1, double eps, int p);
//! Integral of exp(-p (x1 - y) / eps^2) / y over [x0, x1], p > 0.
double decay_weight(double x0, double x1, double eps, int p);

struct DriverIncrement {
    TanVec dphi;
    Endo2 grad;
    SymTriTensor hess;
    double dlambda2 = 0.0;
};

/*!
 * Immutable factorization of a DriverCovariance times a step size.
 * grad is drawn in the E^1..E^3 coordinates so its trace is exactly zero.
 * Throws std::runtime_error naming the eigenvalue when the matrix is not PSD.
 */
class DriverSampler {
  public:
    DriverSampler(const DriverCovariance& cov, double dlambda2);

    DriverIncrement draw(NormalStream& rng) const;
    double dlambda2() const { return dlambda2_; }

  private:
    std::array<double, 64> phi_hess_factor_{};  // 8x8, rows (phi, hess)
    std::array<double, 9> grad_factor_{};       // 3x3 on E^1..E^3 coordinates
    int phi_hess_rank_ = 8;
    double dlambda2_ = 0.0;
};

DriverIncrement sample_increment(const DriverCovariance& cov, double dlambda2, NormalStream& rng);

using FourTensor = std::array<double, 16>;  //!< index ((a*2+b)*2+c)*2+d

/*!
 * Fourier spectrum of grad phi' at wavevector k:
 * eps^2/(1 - eps^2 ln|k|) 1{1/L < |k| <= 1} |k|^-6 ((Jk)*(x)k)(x)((Jk)*(x)k).
 * Entry (a,b,c,d) = prefactor (Jk)^a k_b (Jk)^c k_d. Throws on k = 0.
 */
FourTensor cprime_spectrum(const CoVec& k, double eps, double Lmax);

}  // namespace critdiff
