#pragma once
//! \file moment_odes.hpp
//! Deterministic moment hierarchy of the proxy system, its exact integral
//! solutions, large-scale asymptotics and rigorous envelopes.
//!
//! Moments carrying powers of L are stored rescaled: a^ = E|phi~|^2 / L^2 and
//! b^ = E|phi~|^4 / L^4, next to lnL.

#include "critdiff/proxy_sde.hpp"

#include <array>
#include <vector>

namespace critdiff {

struct MomentVector {
    double x = 1.0;      //!< lambda~^2
    double lnL = 0.0;
    double a_hat = 0.0;  //!< E|phi~|^2 / L^2
    double b_hat = 0.0;  //!< E|phi~|^4 / L^4
    double A = 2.0;      //!< E|F~|^2
    double B = 4.0;      //!< E|F~|^4
    double C = 1.0;      //!< E (det F~)^2
    double D = 1.0;      //!< E det F~

    double log_a() const;  //!< ln E|phi~|^2
    double log_b() const;  //!< ln E|phi~|^4
};

enum class ClosureMode { mc, bound };

/*!
 * Source of the three non-closing expectations (mix, bullet with F~,
 * bullet with adj F~^T), all in rescaled units.
 *  - mc: linear interpolation in lambda~^2 of a Monte Carlo series.
 *  - bound: their rigorous upper bounds sqrt(b^ B) and kappa_bullet sqrt(b^ B).
 */
class ClosureSource {
  public:
    static ClosureSource mc(const MomentSeries& series);
    static ClosureSource bound();

    ClosureMode mode() const { return mode_; }
    const MomentSeries* series() const { return series_; }
    //! (mix, bullet_F, bullet_adj) at the state; throws ValidationError outside mc data.
    std::array<double, 3> eval(const MomentVector& m) const;
    //! Throws ValidationError if the source cannot cover [1, x_end] at \p eps.
    void check_range(double x_end, double eps) const;

  private:
    ClosureMode mode_ = ClosureMode::bound;
    const MomentSeries* series_ = nullptr;
};

//! d/dx of (a^, b^, A, B, C, D).
std::array<double, 6> rhs(const MomentVector& m, double eps, const ClosureSource& closure);

struct OdeOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    std::size_t max_steps = 2000000;
};

/*!
 * Adaptive Cash-Karp 5(4) integration from the initial data at x = 1.
 * Reports at \p x_out (sorted, within [1, x_end]); when empty, the grid
 * of an mc closure or 201 uniform points. Throws NumericError when the
 * step size collapses or the step budget is exhausted.
 */
std::vector<MomentVector> integrate(double eps, double x_end, const ClosureSource& closure,
                                    std::vector<double> x_out = {}, const OdeOptions& opt = {});

//! Exact integral solutions, exponent-shifted.
double exact_a_hat(double x, double eps);
double exact_b_hat(double x, double eps);
double exact_A(double x, double eps);
//! Raw E|phi~|^2 and E|phi~|^4 (overflow to inf when L is not representable).
double exact_a(double x, double eps);
double exact_b(double x, double eps);

struct Asymptotics {
    double lnL = 0.0;
    double a_hat = 0.0;  //!< eps^2 / (2x)
    double b_hat = 0.0;  //!< eps^4 / (2x^2)
    double A = 0.0;      //!< 2 sqrt(x)
    double B = 0.0;      //!< (8/3) x^{3/2} + 4/3
};
Asymptotics asymptotics(double x, double eps);

/*!
 * Constants of the rigorous envelopes at a given eps:
 *   a^ <= c3 eps^2 / x,  b^ <= 4 c3 c7 eps^4 / x^2,
 *   c3 = int_0^inf (1 + eps^2 u)^{3/2} e^{-2u} du,
 *   c7 = int_0^inf (1 + eps^2 u)^{7/2} e^{-4u} du,
 *   kappa   = kappa_bullet sqrt(4 c3 c7)               (|C'| <= kappa eps^2 sqrt(B) / x^2)
 *   kappa_B = (1 + 4 kappa_bullet) sqrt(4 c3 c7)       (B closure <= kappa_B eps^2 sqrt(B) / x)
 *   kappa_p = (2/7) kappa_B                            (sqrt(B / x^{3/2}) - 2 <= kappa_p eps^2)
 *   kappa_pp = 4 kappa (2 + kappa_p eps^2)             (|C - 1| <= kappa_pp eps^2)
 *   kappa_Y = (4/7)(3/2 kappa_B + 2 kappa)(2 + kappa_p eps^2)
 * and |(3B/2 - 2C)/x^{3/2} - 4| <= (kappa_Y + 2 kappa_pp x^{-3/2}) eps^2.
 */
struct EnvelopeConstants {
    double eps = 0.0;
    double c3 = 0.0, c7 = 0.0;
    double kappa_bullet = 0.0;
    double kappa = 0.0, kappa_B = 0.0, kappa_p = 0.0, kappa_pp = 0.0, kappa_Y = 0.0;

    double fourth_moment_bound(double x) const { return (kappa_Y + 2.0 * kappa_pp * std::pow(x, -1.5)) * eps * eps; }
};
EnvelopeConstants envelope_constants(double eps);

/*!
 * Envelope curves on a uniform grid. B_lo/B_hi and C_lo/C_hi come from
 * propagating the differential inequalities and collapse to the exact
 * eps = 0 solution; B_crude/C_crude are the closed-form constant bounds.
 */
struct Envelope {
    EnvelopeConstants k;
    std::vector<double> x, a_hat_hi, b_hat_hi, B_lo, B_hi, C_lo, C_hi, B_crude, C_crude_dev;
};
Envelope envelope_BC(double eps, double x_end, std::size_t n_points = 201);

}  // namespace critdiff
