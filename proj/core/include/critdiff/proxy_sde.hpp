#pragma once
//! \file proxy_sde.hpp
//! Monte Carlo integration of the single-point proxy system
//!   d phi~ = (1 + phi~^i d_i) d phi,   d F~ = d phi~-gradient,
//! across the scale variable lambda~^2.

#include "critdiff/shell_cov.hpp"
#include "critdiff/tensor2d.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace critdiff {

enum class SdeMode { full, exp };

/*!
 * Finite-step schemes.
 *  - scaled: one-step scheme on (phi^ = phi~/L, F~) with the relaxation of
 *    phi^ integrated exactly, the drivers integrated over each shell with
 *    their L-free densities, and the traceless grad increment applied to F~
 *    through its matrix exponential; usable at any lnL.
 *  - raw_shell: plain Euler-Maruyama on (phi~, F~) with exact shell-integrated
 *    driver covariances; requires representable L (field-mode comparison).
 */
enum class SdeScheme { scaled, raw_shell };

struct ProxyState {
    TanVec phi;  //!< raw phi~, or phi~/L under the scaled scheme
    Endo2 F = Endo2::identity();
    double lambda2 = 1.0;
};

//! Euler-Maruyama update with a raw driver increment.
ProxyState step(const ProxyState& s, const DriverIncrement& inc, SdeMode mode = SdeMode::full);

//! e^k (x) e_j (x) phi scaled by M: T(k, i, j) = M(k, j) phi^i.
TriTensor closure_tensor(const Endo2& m, const TanVec& phi);

struct SdeConfig {
    double eps = 0.2;
    double lambda2_max = 4.0;
    std::size_t n_steps = 400;
    std::size_t n_traj = 10000;
    std::uint64_t seed = 0;
    SdeMode mode = SdeMode::full;
    SdeScheme scheme = SdeScheme::scaled;
    std::size_t record_every = 1;            //!< record every k-th grid point (always the last)
    std::vector<double> grid;                //!< optional explicit lambda2 grid (overrides n_steps)
    std::vector<double> snapshot_lambda2;    //!< keep per-trajectory |F|^2 and det at these points
    bool zero_c02 = false;                   //!< drop the phi/hess cross covariance
    unsigned threads = 0;

    void validate() const;
    std::vector<double> lambda2_grid() const;
};

//! Columns of MomentSeries, all in rescaled units phi^ = phi~/L.
enum Moment : int {
    kPhi2 = 0,     //!< E|phi^|^2
    kPhi4,         //!< E|phi^|^4
    kF2,           //!< E|F~|^2
    kF4,           //!< E|F~|^4
    kDet,          //!< E det F~
    kDet2,         //!< E (det F~)^2
    kMix,          //!< E |phi^|^2 |F~|^2
    kBulletF,      //!< E (F~ (x) phi^) . (F~ (x) phi^)
    kBulletAdj,    //!< E (adj F~^T (x) phi^) . (same)
    kNumMoments
};
const char* moment_name(int k);
//! The tracked observables at one state; \p phi already rescaled by 1/L.
std::array<double, kNumMoments> observe_moments(const TanVec& phi, const Endo2& F);

struct MomentSeries {
    double eps = 0.0;
    std::vector<double> lambda2;
    std::vector<std::array<double, kNumMoments>> mean;
    std::vector<std::array<double, kNumMoments>> se;
    std::size_t n_traj = 0;

    double lnL(std::size_t i) const { return (lambda2[i] - 1.0) / (eps * eps); }
    //! Index of the recorded point nearest to x.
    std::size_t nearest(double x) const;
    //! Linear interpolation of a column.
    double interp(int k, double x) const;
};

struct Snapshot {
    double lambda2 = 1.0;
    std::vector<double> F2;   //!< |F~|^2 per trajectory
    std::vector<double> det;  //!< det F~ per trajectory
};

struct EnsembleResult {
    MomentSeries series;
    std::vector<Snapshot> snapshots;
    double seconds = 0.0;
};

/*!
 * Runs n_traj independent trajectories. Trajectory t draws from the Philox
 * stream (derive_seed(seed, "proxy-sde"), t); accumulation is blocked and
 * reduced in block order so results do not depend on the thread count.
 * Throws NumericError naming lambda2 if a state becomes non-finite.
 */
EnsembleResult run_ensemble(const SdeConfig& cfg);

//! E[|F|^2 1{|F|^2 <= rhat E|F|^2}] / E|F|^2.
double truncated_second_moment(const std::vector<double>& F2, double rhat);

struct Histogram {
    std::vector<double> edges;    //!< bins+1 edges in units of |F|^2 / E|F|^2
    std::vector<double> density;  //!< normalized so sum(density * width) = 1
    double median_ratio = 0.0;    //!< median of |F|^2 / E|F|^2
};
Histogram histogram(const std::vector<double>& F2, std::size_t bins);

/*!
 * Common-random-number refinement study: one fine path per trajectory with
 * 4n steps, aggregated exactly to 2n and n steps. Returns E|F|^2 and
 * Var det at lambda2_max per level (coarse first).
 */
struct RefinementStudy {
    std::array<double, 3> F2{};
    std::array<double, 3> var_det{};
    std::array<double, 3> F2_se{};
    double richardson_F2 = 0.0;   //!< (F2[0]-F2[1]) / (F2[1]-F2[2])
    double var_det_ratio = 0.0;   //!< var_det[0] / var_det[1]
};
RefinementStudy refinement_study(const SdeConfig& cfg);

}  // namespace critdiff
