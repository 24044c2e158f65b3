#pragma once
//! \file corrector.hpp
//! Periodic cell problem div a (xi + grad phi) = 0 with a = id + psi J,
//! the effective diffusivity it defines, and statistics of F = id + grad phi.

#include "critdiff/errors.hpp"
#include "critdiff/field_sim.hpp"
#include "critdiff/tensor2d.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace critdiff {

//! Stream function on a torus grid; a = id + psi J.
struct CoefField {
    TorusGrid grid;
    Grid psi;

    static CoefField constant(const TorusGrid& grid, double value);
    void validate() const;
    double sup() const;
    //! a(x) applied to v, J = [[0, -1], [1, 0]].
    std::array<double, 2> apply(std::size_t node, double v0, double v1) const {
        const double p = psi[node];
        return {v0 - p * v1, v1 + p * v0};
    }
};

/*!
 * psi_L as the sum of calibrated shells 1 < |k|^{-1} <= L drawn in ladder order,
 * so draws for a smaller L are a prefix of those for a larger one.
 */
CoefField sample_psi(const TorusGrid& grid, double eps, double L, NormalStream& rng, int per_octave = 4);

//! Spectral zero-padding onto a finer grid of the same box.
CoefField refine(const CoefField& coef, std::size_t n_fine);

struct SolverOptions {
    double tol = 1e-8;             //!< relative residual
    std::size_t max_iter = 2000;   //!< operator applications, all phases
    std::size_t restart = 30;
    bool allow_fallback = true;    //!< damped fixed point once GMRES stagnates
    double stagnation = 0.9;       //!< restart cycles reducing the residual by less than this factor stagnate

    void validate() const;
};

struct CorrectorSolution {
    CoVec xi;
    std::array<Grid, 2> grad_phi;
    double residual = 0.0;  //!< relative, ||div a(xi + grad phi)|| / ||div psi J xi||
    std::size_t iterations = 0;
    bool used_fallback = false;
    std::vector<double> history;  //!< relative residual per iteration
};

//! Thrown when the solve misses its tolerance; carries the residual history.
class ConvergenceError : public NumericError {
  public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : NumericError(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

  private:
    std::vector<double> history_;
};

/*!
 * Solves lap phi = -div(psi J (xi + grad phi)) by GMRES on w = lap phi with
 * inverse-Laplacian preconditioning. Spectral derivatives drop Nyquist modes.
 */
CorrectorSolution solve_corrector(const CoefField& coef, const CoVec& xi, const SolverOptions& opt = {});

//! Recomputed relative residual of \p sol.
double corrector_residual(const CoefField& coef, const CorrectorSolution& sol);

//! 1 + mean |grad phi|^2 / |xi|^2.
double effective_lambda(const CorrectorSolution& sol, const CoefField& coef);
//! mean a (xi + grad phi).
std::array<double, 2> mean_flux(const CorrectorSolution& sol, const CoefField& coef);
//! mean (xi + grad phi) . a (xi + grad phi) and mean |xi + grad phi|^2.
std::array<double, 2> energy_pair(const CorrectorSolution& sol, const CoefField& coef);

struct JacobianStats {
    double lambda = 1.0;   //!< average over the two directions
    double E_F2 = 2.0;
    double E_absdet = 1.0;
    double E_det = 1.0;
    std::vector<double> r;          //!< truncation levels
    std::vector<double> truncated;  //!< E |F|^2 1{|F|^2 <= r}
};

//! F = id + (grad phi^1, grad phi^2) rows; spatial averages.
JacobianStats jacobian_stats(const CorrectorSolution& e1, const CorrectorSolution& e2,
                             const std::vector<double>& r_schedule = {});

//! First-order corrector -grad lap^{-1}(grad psi . J xi) evaluated spectrally.
std::array<Grid, 2> first_order_corrector(const CoefField& coef, const CoVec& xi);

struct CorrectorConfig {
    std::size_t n = 512;
    double box_len = 0.0;  //!< 0 selects 4 * 2 pi * L
    double eps = 0.2;
    double L = 16.0;
    int per_octave = 4;
    std::size_t n_samples = 20;
    std::uint64_t seed = 0;
    SolverOptions solver;
    std::vector<double> r_schedule{2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 16.0};
    unsigned threads = 0;

    void validate() const;
    TorusGrid grid() const;
};

struct CorrectorSample {
    double lambda1 = 1.0, lambda2 = 1.0;  //!< xi = e1, e2
    double grad2_first_order = 0.0;       //!< mean |grad phi_1|^2 averaged over xi
    double residual = 0.0;
    std::size_t iterations = 0;
    bool used_fallback = false;
    JacobianStats stats;
};

struct CorrectorEnsemble {
    CorrectorConfig cfg;
    std::vector<CorrectorSample> samples;
    Estimate lambda, E_F2, E_absdet, E_det, grad2, grad2_first_order;
    std::vector<Estimate> truncated;
    double first_order_expected = 0.0;  //!< eps^2 ln L / 2
    double seconds = 0.0;
};
CorrectorEnsemble run_correctors(const CorrectorConfig& cfg);

}  // namespace critdiff
