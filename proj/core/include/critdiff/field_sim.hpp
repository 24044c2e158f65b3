#pragma once
//! \file field_sim.hpp
//! Periodic spectral realizations of stream-function shells, their driver
//! fields, and the proxy system evolved pointwise on a torus grid.

#include "critdiff/proxy_sde.hpp"
#include "critdiff/rng.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace critdiff {

struct TorusGrid {
    std::size_t n = 256;   //!< points per side, a power of two
    double box_len = 0.0;  //!< physical side length

    //! box_len = 4 * 2 pi * L_max.
    static TorusGrid for_cutoff(std::size_t n, double L_max);
    void validate(double L_max) const;
    double dk() const;
    double h() const { return box_len / static_cast<double>(n); }
    std::size_t size() const { return n * n; }
    //! Signed lattice index of FFT slot i.
    std::ptrdiff_t signed_index(std::size_t i) const;
};

//! Annulus 1/L1 < |k| <= 1/L0.
struct Shell {
    double L0 = 1.0;
    double L1 = 1.0;
};

//! Geometric shells of ratio 2^{1/per_octave} from 1 to L_max.
std::vector<Shell> shell_ladder(double L_max, int per_octave = 4);

/*!
 * Lattice modes of a shell with their calibrated variances
 * E|c_k|^2 = A / |k|^2, A chosen so the lattice sum is eps^2 ln(L1/L0).
 * Modes come in Hermitian pairs (k, -k); only one representative is listed.
 */
struct ShellSpectrum {
    TorusGrid grid;
    Shell shell;
    double eps = 0.0;
    double calibration = 1.0;  //!< A over the continuum density eps^2 dk^2 / (2 pi)
    struct Mode {
        std::size_t idx = 0, partner = 0;
        double kx = 0.0, ky = 0.0, k2 = 0.0;
        double sd = 0.0;  //!< per real component
    };
    std::vector<Mode> modes;

    std::size_t n_modes() const { return 2 * modes.size(); }
};
ShellSpectrum make_shell_spectrum(const TorusGrid& grid, const Shell& shell, double eps);

//! Spectral coefficients of a psi-increment, Hermitian, zero off the annulus.
struct ShellField {
    const ShellSpectrum* spec = nullptr;
    std::vector<std::complex<double>> coef;  //!< n*n, slot iy*n + ix
};
ShellField sample_shell_field(const ShellSpectrum& spec, NormalStream& rng);

//! Physical-space values; \p max_imag receives the largest imaginary residue.
std::vector<double> to_real(const ShellField& f, double* max_imag = nullptr);

using Grid = std::vector<double>;

/*!
 * Drivers of one shell on the grid, from
 *   F dphi = i (F dpsi / lambda~(k)) (Jk) / |k|^2, lambda~(k)^2 = 1 - eps^2 ln|k|.
 * grad[r*2+c] = d_c dphi^r; hess[k*3 + {11,12,22}].
 */
struct DriverGrids {
    Grid dpsi;
    std::array<Grid, 2> grad_psi;
    std::array<Grid, 2> dphi;
    std::array<Grid, 4> grad;
    std::array<Grid, 6> hess;
    double lambda2_0 = 1.0, lambda2_1 = 1.0;
};
DriverGrids driver_fields(const ShellField& f);

struct FieldState {
    TorusGrid grid;
    double lambda2 = 1.0;
    std::array<Grid, 2> phi;  //!< raw phi~
    std::array<Grid, 4> F;    //!< row-major F~

    static FieldState initial(const TorusGrid& grid);
};

//! Euler-Maruyama update identical to step() at every node.
FieldState step_fields(const FieldState& s, const DriverGrids& d, SdeMode mode = SdeMode::full);
void step_fields_inplace(FieldState& s, const DriverGrids& d, SdeMode mode = SdeMode::full);

struct FieldRunConfig {
    std::size_t n = 256;
    double box_len = 0.0;  //!< 0 selects 4 * 2 pi * L_max
    double eps = 0.3;
    double L_max = 16.0;
    int per_octave = 4;
    std::size_t n_samples = 16;
    std::uint64_t seed = 0;
    SdeMode mode = SdeMode::full;
    unsigned threads = 0;

    void validate() const;
    TorusGrid grid() const;
    //! lambda~^2 at the shell edges.
    std::vector<double> lambda2_grid() const;
};

/*!
 * Per-shell spatial means, one row per sample:
 * dpsi^2, |grad dpsi|^2, (e1.dphi)^2, sum_ij (d_j dphi^i)^2, sum_ij (hess(i; j, 1))^2,
 * and the expected continuum values of the same quantities.
 */
struct ShellQV {
    static constexpr int kPsi = 0, kGradPsi = 1, kPhiXi = 2, kGrad = 3, kHessDc = 4, kCount = 5;
    Shell shell;
    double calibration = 1.0;
    std::size_t n_modes = 0;
    std::array<double, kCount> expected{};
    std::vector<std::array<double, kCount>> samples;
};

struct FieldRunResult {
    FieldRunConfig cfg;
    MomentSeries series;  //!< per shell edge; mean/se over samples of spatial means
    std::vector<ShellQV> shells;
    std::vector<double> var_psi;  //!< spatial mean of psi_L^2 per sample
    std::vector<double> constraint_residual;  //!< max pointwise trace constraint residual per sample
    FieldState final_state;       //!< sample 0
    double seconds = 0.0;
};
FieldRunResult run_fields(const FieldRunConfig& cfg);

struct Estimate {
    double value = 0.0, se = 0.0;
};
struct QvReport {
    Estimate psi_qv;           //!< accumulated [dpsi dpsi], expect lambda2_max - 1
    double psi_qv_expected = 0.0;
    Estimate derivative_ratio;  //!< [grad dpsi . grad dpsi] L^2 / [dpsi dpsi], expect 1
    Estimate dphi_ratio;        //!< [e1.dphi e1.dphi] over L^2 dlambda2 / 2 lambda2, expect 1
    Estimate grad_ratio;        //!< sum_ij Var(d_j dphi^i) over dlambda2 / lambda2, expect 1
    Estimate frame_tri;         //!< contraction with xdot = e1, expect 1/2
    Estimate var_psi;           //!< Var psi_L, expect eps^2 ln L
    double var_psi_expected = 0.0;
    double max_calibration_dev = 0.0;  //!< max |calibration - 1| over shells
};
QvReport empirical_qv(const FieldRunResult& run);

//! Flat binary snapshot: int64 n, double box_len, double lambda2, int64 ncomp, then ncomp row-major n*n blocks.
void write_snapshot(const std::string& path, const FieldState& s);
FieldState read_snapshot(const std::string& path);

}  // namespace critdiff
