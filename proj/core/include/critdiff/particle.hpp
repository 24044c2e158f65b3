#pragma once
//! \file particle.hpp
//! Euler-Maruyama paths of dX = b(X) dt + sqrt(2) dW with b = J grad psi on a torus,
//! and mean-square displacement diagnostics.

#include "critdiff/corrector.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace critdiff {

//! Divergence-free drift on a torus grid, bilinearly interpolated.
struct DriftField {
    TorusGrid grid;
    std::array<Grid, 2> b;

    static DriftField zero(const TorusGrid& grid);
    //! b = J grad psi = (-d2 psi, d1 psi), spectral, Nyquist dropped.
    static DriftField from_psi(const CoefField& coef);

    void validate() const;
    double sup() const;
    //! Largest |div b| from spectral derivatives.
    double max_divergence() const;
    std::array<double, 2> at(double x, double y) const;
};

struct PathOptions {
    double dt = 0.1;
    std::vector<double> times{1.0, 10.0, 100.0};  //!< reporting times, multiples of dt
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;
    std::size_t occupancy_cells = 8;  //!< per side, for the uniform-law check
    bool keep_paths = false;          //!< retain per-path squared displacements for paired ratios
    unsigned threads = 0;

    void validate() const;
};

struct MsdEstimate {
    std::vector<double> times;
    std::array<std::vector<double>, 2> msd, se;  //!< E (e_i . (X_t - X_0))^2
    std::vector<double> msd_mean, se_mean;       //!< averaged over the two components
    std::size_t n_paths = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> per_path;  //!< n_paths x times, component-averaged, when kept
    double occupancy_chi2 = 0.0;  //!< final cell counts against the uniform law
    std::size_t occupancy_dof = 0;
};

//! Paths start uniformly on the torus; path p uses the normal stream (seed, p).
MsdEstimate euler_maruyama(const DriftField& drift, const PathOptions& opt);

struct RatioEstimate {
    double t = 0.0;
    double value = 1.0;
    double se = 0.0;
    bool paired = false;
};
/*!
 * MSD_{L2} / MSD_{L1} at the largest common time <= L1^2. Runs sharing seed,
 * path count and kept per-path data get a paired delta-method SE; otherwise the
 * runs are treated as independent.
 */
RatioEstimate msd_growth_ratio(const MsdEstimate& small_L, const MsdEstimate& large_L, double L1);

struct ParticleConfig {
    std::size_t n = 2048;
    double box_len = 0.0;  //!< 0 selects 4 * 2 pi * L
    double eps = 0.4;
    double L = 64.0;
    int per_octave = 4;
    std::uint64_t seed = 0;
    PathOptions paths;

    void validate() const;
    TorusGrid grid() const;
};

struct ParticleRun {
    ParticleConfig cfg;
    double drift_sup = 0.0;
    double max_divergence = 0.0;
    MsdEstimate msd;
    double seconds = 0.0;
};
//! One psi_L realization (stream "particle-field") and an ensemble of paths in it.
ParticleRun run_particles(const ParticleConfig& cfg);

}  // namespace critdiff
