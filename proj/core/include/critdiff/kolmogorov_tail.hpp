#pragma once
//! \file kolmogorov_tail.hpp
//! Duality argument for second-moment tails of F~: the backward equation
//!   d_tau zeta^ + 1/4 d_sigma zeta^ + 1/4 d_sigma^2 zeta^ = 0
//! in tau = ln lambda~^2, sigma = ln r^, with zeta(tau, r) = r^ zeta^ and
//! r = e^{tau/2} r^, terminal smoothstep data and the resulting bound chain.

#include "critdiff/proxy_sde.hpp"

#include <string>
#include <vector>

namespace critdiff {

//! Quintic smoothstep s(u) = 6u^5 - 15u^4 + 10u^3 and its derivatives on [0, 1].
double smoothstep(double u);
double smoothstep_d1(double u);
double smoothstep_d2(double u);
//! max |s''| = 10 / sqrt(3).
inline constexpr double kSmoothstepMaxD2 = 5.773502691896257645;

double normal_cdf(double z);

struct TailConfig {
    double tau = 1.0;            //!< ln lambda~^2 at the final scale
    double sigma_hat = 0.0;      //!< ln of the truncation location in rescaled variables
    std::size_t resolution = 2000;  //!< sigma grid points
    std::size_t tau_slices = 192;   //!< tau' nodes for the bound integrals
    double margin = 0.1;         //!< factor inside the regime formula for r^

    void validate() const;
    double lambda() const;
};

//! margin * sqrt(lambda~) * exp(-sqrt(2 ln lambda~)).
double regime_rhat(double lambda2, double margin);
/*!
 * Config whose truncation |F|^2 <= lambda~ e^{sigma^} coincides with the
 * cut |F|^2 <= rhat E|F|^2.
 */
TailConfig tail_config_for(double lambda2, double rhat, double mean_F2);

/*!
 * zeta^ sampled on a uniform sigma grid at a time slice tau'. The profile is
 * split into the reference vr + (vl - vr) Phi((c - sigma)/w) (evolved in
 * closed form) and a residual that decays inside the grid.
 */
struct TailProfile {
    double tau_prime = 0.0;
    double sigma0 = 0.0;
    double h = 0.0;
    std::vector<double> v;
    double ref_c = 0.0, ref_w = 1.0;

    double sigma(std::size_t i) const { return sigma0 + h * static_cast<double>(i); }
    double reference(double s) const;
};

//! Terminal data 1 - s(sigma - sigma^) on [lo, hi] with n points, at tau' = tau.
TailProfile terminal_zeta(double sigma_hat, double tau, double lo, double hi, std::size_t n);
//! Terminal data on a grid wide enough for evolution back to tau' = 0.
TailProfile terminal_zeta(const TailConfig& cfg);

/*!
 * Backward evolution by dtau: convolution with the Gaussian of the forward
 * process, mean +dtau/4, variance dtau/2 (as a kernel in sigma - s: mean
 * -dtau/4). Rejects kernels narrower than two grid cells.
 */
TailProfile evolve(const TailProfile& p, double dtau);

struct ZetaHat {
    double v = 0.0, d1 = 0.0, d2 = 0.0;  //!< zeta^ and its first two sigma-derivatives
};
//! Exact zeta^ at lag dtau = tau - tau' from the terminal data (ramp quadrature plus Phi tail).
ZetaHat zeta_hat(double sigma_hat, double dtau, double sigma);

//! Phi((sigma^ + 1 - sigma - dtau/4) / sqrt(dtau/2)), the indicator majorant.
double phi_bound(double sigma_hat, double dtau, double sigma);

//! zeta(0, 2) = 2 zeta^(0, ln 2).
double zeta_at_origin(const TailConfig& cfg);
//! zeta(tau, r) for the terminal data.
double zeta_terminal(const TailConfig& cfg, double r);

struct BoundTerms {
    double I1 = 0.0;  //!< int_0^tau sup_r r |d_r^2 zeta| dtau'
    double I2 = 0.0;  //!< int_0^tau e^{-tau'} sup_r |d_r zeta| dtau'
};
BoundTerms bound_terms(const TailConfig& cfg);

/*!
 * Bound chain at the final scale:
 *   lhs = E[|F|^2 1{|F|^2 <= lambda~ e^{sigma^}}] / lambda~
 *       <= E zeta(tau, |F|^2) <= zeta(0, 2) + c I1 + eps^2 c' I2,
 * with c = sqrt(1 + kappa'' eps^2)/2 + 2 kappa_bullet c3 eps^2 and c' = c3/2.
 */
struct TailReport {
    double lambda2 = 0.0, eps = 0.0, tau = 0.0, sigma_hat = 0.0;
    double mean_F2 = 0.0;
    double lhs = 0.0, lhs_se = 0.0;
    double e_zeta = 0.0, e_zeta_se = 0.0;
    double zeta0 = 0.0, I1 = 0.0, I2 = 0.0, c = 0.0, c_prime = 0.0, rhs = 0.0;
    double truncated_ratio = 0.0;  //!< lhs lambda~ / E|F|^2
    bool chain_holds = false;
    std::vector<std::string> warnings;
};
TailReport verify_tail(const std::vector<double>& F2, double eps, const TailConfig& cfg);

}  // namespace critdiff
