#include "critdiff/corrector.hpp"

#include "critdiff/errors.hpp"
#include "critdiff/parallel.hpp"
#include "fft2d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace critdiff {

namespace {

using detail::Spectrum;

double dot(const Grid& a, const Grid& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Estimate mean_se(const std::vector<double>& v) {
    Estimate e;
    const double n = static_cast<double>(v.size());
    e.value = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return e;
    double ss = 0.0;
    for (double x : v) ss += (x - e.value) * (x - e.value);
    e.se = std::sqrt(ss / (n - 1.0) / n);
    return e;
}

// Spectral derivatives on the half spectrum; Nyquist wavenumbers are dropped.
class SpectralOps {
  public:
    explicit SpectralOps(const TorusGrid& grid) : fft_(detail::real_fft(grid.n)), n_(grid.n) {
        const std::size_t nh = fft_.half();
        const double dk = grid.dk();
        kx_.resize(nh);
        ky_.resize(n_);
        for (std::size_t ix = 0; ix < nh; ++ix) kx_[ix] = ix == n_ / 2 ? 0.0 : dk * static_cast<double>(ix);
        for (std::size_t iy = 0; iy < n_; ++iy)
            ky_[iy] = iy == n_ / 2 ? 0.0 : dk * static_cast<double>(grid.signed_index(iy));
        norm_ = 1.0 / static_cast<double>(n_ * n_);
    }

    std::size_t half() const { return fft_.half(); }
    double kx(std::size_t s) const { return kx_[s % fft_.half()]; }
    double ky(std::size_t s) const { return ky_[s / fft_.half()]; }

    void forward(const Grid& g, Spectrum& out) const { fft_.forward(g, out); }
    // Normalized inverse of forward(); destroys \p s.
    void backward(Spectrum& s, Grid& out) const {
        fft_.backward(s, out);
        for (double& v : out) v *= norm_;
    }

    // Gradient of lap^{-1} w, from the spectrum of w.
    void grad_inv_lap(const Spectrum& w, std::array<Grid, 2>& g) {
        const std::complex<double> I{0.0, 1.0};
        s0_.resize(w.size());
        s1_.resize(w.size());
        for (std::size_t s = 0; s < w.size(); ++s) {
            const double a = kx(s), b = ky(s), k2 = a * a + b * b;
            if (k2 == 0.0) {
                s0_[s] = s1_[s] = 0.0;
                continue;
            }
            const std::complex<double> phi = -w[s] / k2;
            s0_[s] = I * a * phi;
            s1_[s] = I * b * phi;
        }
        backward(s0_, g[0]);
        backward(s1_, g[1]);
    }

    // Divergence of (q0, q1).
    void divergence(const Grid& q0, const Grid& q1, Grid& out) {
        const std::complex<double> I{0.0, 1.0};
        forward(q0, s0_);
        forward(q1, s1_);
        for (std::size_t s = 0; s < s0_.size(); ++s) s0_[s] = I * (kx(s) * s0_[s] + ky(s) * s1_[s]);
        backward(s0_, out);
    }

    void gradient(const Grid& f, std::array<Grid, 2>& g) {
        const std::complex<double> I{0.0, 1.0};
        forward(f, s0_);
        s1_.resize(s0_.size());
        for (std::size_t s = 0; s < s0_.size(); ++s) {
            s1_[s] = I * ky(s) * s0_[s];
            s0_[s] = I * kx(s) * s0_[s];
        }
        backward(s0_, g[0]);
        backward(s1_, g[1]);
    }

  private:
    const detail::RealFft2d& fft_;
    std::size_t n_;
    std::vector<double> kx_, ky_;
    double norm_ = 1.0;
    Spectrum s0_, s1_;
};

// w -> w + div(psi J grad lap^{-1} w).
class PreconditionedOperator {
  public:
    explicit PreconditionedOperator(const CoefField& coef) : coef_(coef), ops_(coef.grid) {}

    void apply(const Grid& w, Grid& out) {
        ops_.forward(w, ws_);
        ws_[0] = 0.0;
        ops_.grad_inv_lap(ws_, g_);
        flux_skew(g_[0], g_[1], 0.0, 0.0);
        ops_.divergence(q_[0], q_[1], out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[i];
    }

    // -div(psi J xi).
    void rhs(const CoVec& xi, Grid& out) {
        const Grid zero(coef_.psi.size(), 0.0);
        flux_skew(zero, zero, xi[0], xi[1]);
        ops_.divergence(q_[0], q_[1], out);
        for (double& v : out) v = -v;
    }

    void gradient_of_solution(const Grid& w, std::array<Grid, 2>& g) {
        ops_.forward(w, ws_);
        ws_[0] = 0.0;
        ops_.grad_inv_lap(ws_, g);
    }

  private:
    // q = psi J (xi + g).
    void flux_skew(const Grid& g0, const Grid& g1, double x0, double x1) {
        const std::size_t N = coef_.psi.size();
        q_[0].resize(N);
        q_[1].resize(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double p = coef_.psi[i];
            q_[0][i] = -p * (x1 + g1[i]);
            q_[1][i] = p * (x0 + g0[i]);
        }
    }

    const CoefField& coef_;
    SpectralOps ops_;
    Spectrum ws_;
    std::array<Grid, 2> g_, q_;
};

struct KrylovOutcome {
    bool converged = false;
    bool stagnated = false;
};

// Restarted GMRES from x; appends relative residuals to history.
KrylovOutcome gmres(PreconditionedOperator& A, const Grid& b, Grid& x, double bnorm, const SolverOptions& opt,
                    std::vector<double>& history) {
    const std::size_t N = b.size(), m = opt.restart;
    std::vector<Grid> V(m + 1, Grid(N));
    std::vector<double> H((m + 1) * m), cs(m), sn(m), g(m + 1), y(m);
    Grid r(N), Ax(N);
    auto h = [&](std::size_t i, std::size_t j) -> double& { return H[i * m + j]; };

    A.apply(x, Ax);
    for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - Ax[i];
    double beta = std::sqrt(dot(r, r));
    KrylovOutcome out;
    while (history.size() < opt.max_iter) {
        if (beta / bnorm <= opt.tol) {
            out.converged = true;
            return out;
        }
        for (std::size_t i = 0; i < N; ++i) V[0][i] = r[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        std::size_t k = 0;
        while (k < m && history.size() < opt.max_iter) {
            A.apply(V[k], V[k + 1]);
            for (std::size_t i = 0; i <= k; ++i) {
                h(i, k) = dot(V[k + 1], V[i]);
                for (std::size_t p = 0; p < N; ++p) V[k + 1][p] -= h(i, k) * V[i][p];
            }
            h(k + 1, k) = std::sqrt(dot(V[k + 1], V[k + 1]));
            if (h(k + 1, k) > 0.0)
                for (double& v : V[k + 1]) v /= h(k + 1, k);
            for (std::size_t i = 0; i < k; ++i) {
                const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
                h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
                h(i, k) = t;
            }
            const double den = std::hypot(h(k, k), h(k + 1, k));
            cs[k] = h(k, k) / den;
            sn[k] = h(k + 1, k) / den;
            h(k, k) = den;
            h(k + 1, k) = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            ++k;
            history.push_back(std::abs(g[k]) / bnorm);
            if (history.back() <= opt.tol) break;
        }
        for (std::size_t i = k; i-- > 0;) {
            double s = g[i];
            for (std::size_t j = i + 1; j < k; ++j) s -= h(i, j) * y[j];
            y[i] = s / h(i, i);
        }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t p = 0; p < N; ++p) x[p] += y[j] * V[j][p];
        A.apply(x, Ax);
        for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - Ax[i];
        const double prev = beta;
        beta = std::sqrt(dot(r, r));
        if (beta / bnorm <= opt.tol) {
            out.converged = true;
            return out;
        }
        if (beta > opt.stagnation * prev) {
            out.stagnated = true;
            return out;
        }
    }
    return out;
}

// Damped Richardson x += theta (b - A x).
bool damped_fixed_point(PreconditionedOperator& A, const Grid& b, Grid& x, double bnorm, double theta,
                        const SolverOptions& opt, std::vector<double>& history) {
    const std::size_t N = b.size();
    Grid Ax(N);
    while (history.size() < opt.max_iter) {
        A.apply(x, Ax);
        double rr = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double r = b[i] - Ax[i];
            rr += r * r;
            x[i] += theta * r;
        }
        history.push_back(std::sqrt(rr) / bnorm);
        if (!std::isfinite(history.back())) return false;
        if (history.back() <= opt.tol) return true;
    }
    return false;
}

std::array<double, 2> xi_plus(const CorrectorSolution& sol, std::size_t i) {
    return {sol.xi[0] + sol.grad_phi[0][i], sol.xi[1] + sol.grad_phi[1][i]};
}

void check_solution(const CoefField& coef, const CorrectorSolution& sol) {
    if (sol.grad_phi[0].size() != coef.psi.size() || sol.grad_phi[1].size() != coef.psi.size())
        throw ValidationError("corrector: solution does not match the coefficient grid");
}

}  // namespace

CoefField CoefField::constant(const TorusGrid& grid, double value) {
    CoefField c;
    c.grid = grid;
    c.psi.assign(grid.size(), value);
    return c;
}

void CoefField::validate() const {
    if (grid.n < 4 || (grid.n & (grid.n - 1)) != 0) throw ValidationError("corrector: n must be a power of two >= 4");
    if (!(grid.box_len > 0.0) || !std::isfinite(grid.box_len)) throw ValidationError("corrector: box_len must be positive");
    if (psi.size() != grid.size()) throw ValidationError("corrector: psi does not match the grid");
    for (double v : psi)
        if (!std::isfinite(v)) throw ValidationError("corrector: psi is not finite");
}

double CoefField::sup() const {
    double s = 0.0;
    for (double v : psi) s = std::max(s, std::abs(v));
    return s;
}

CoefField sample_psi(const TorusGrid& grid, double eps, double L, NormalStream& rng, int per_octave) {
    if (!(L > 1.0)) throw ValidationError("corrector: L must exceed 1");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ValidationError("corrector: eps must be finite and >= 0");
    grid.validate(L);
    const auto& fft = detail::real_fft(grid.n);
    const std::size_t n = grid.n, nh = fft.half();
    Spectrum half(fft.spectrum_size(), 0.0);
    for (const Shell& sh : shell_ladder(L, per_octave)) {
        const ShellSpectrum spec = make_shell_spectrum(grid, sh, eps);
        const ShellField f = sample_shell_field(spec, rng);
        for (const auto& m : spec.modes)
            for (std::size_t slot : {m.idx, m.partner}) {
                const std::size_t iy = slot / n, ix = slot % n;
                if (ix < nh) half[iy * nh + ix] += f.coef[slot];
            }
    }
    CoefField c;
    c.grid = grid;
    fft.backward(half, c.psi);
    return c;
}

CoefField refine(const CoefField& coef, std::size_t n_fine) {
    coef.validate();
    const std::size_t n = coef.grid.n;
    if (n_fine < n || (n_fine & (n_fine - 1)) != 0)
        throw ValidationError("corrector: refinement must be a power of two not below the current n");
    const auto& cf = detail::real_fft(n);
    const auto& ff = detail::real_fft(n_fine);
    Spectrum c;
    cf.forward(coef.psi, c);
    Spectrum f(ff.spectrum_size(), 0.0);
    const double norm = 1.0 / static_cast<double>(n * n);
    const std::size_t nh = cf.half(), fh = ff.half();
    for (std::size_t iy = 0; iy < n; ++iy) {
        if (iy == n / 2) continue;
        const std::ptrdiff_t sy = coef.grid.signed_index(iy);
        const std::size_t fy = sy >= 0 ? static_cast<std::size_t>(sy) : static_cast<std::size_t>(sy + static_cast<std::ptrdiff_t>(n_fine));
        for (std::size_t ix = 0; ix + 1 < nh; ++ix) f[fy * fh + ix] = c[iy * nh + ix] * norm;
    }
    CoefField out;
    out.grid = TorusGrid{n_fine, coef.grid.box_len};
    ff.backward(f, out.psi);
    return out;
}

void SolverOptions::validate() const {
    if (!(tol > 0.0) || !std::isfinite(tol)) throw ValidationError("corrector: tol must be positive");
    if (max_iter == 0) throw ValidationError("corrector: max_iter must be positive");
    if (restart == 0) throw ValidationError("corrector: restart must be positive");
    if (!(stagnation >= 0.0 && stagnation <= 1.0)) throw ValidationError("corrector: stagnation must lie in [0, 1]");
}

CorrectorSolution solve_corrector(const CoefField& coef, const CoVec& xi, const SolverOptions& opt) {
    opt.validate();
    coef.validate();
    if (!std::isfinite(xi[0]) || !std::isfinite(xi[1])) throw ValidationError("corrector: xi is not finite");
    const std::size_t N = coef.grid.size();
    CorrectorSolution sol;
    sol.xi = xi;
    PreconditionedOperator A(coef);
    Grid b(N);
    A.rhs(xi, b);
    const double bnorm = std::sqrt(dot(b, b));
    const double scale = std::sqrt(static_cast<double>(N)) * (std::abs(xi[0]) + std::abs(xi[1])) * (1.0 + coef.sup());
    if (bnorm <= 1e-14 * scale) {
        sol.grad_phi = {Grid(N, 0.0), Grid(N, 0.0)};
        return sol;
    }
    Grid w(N, 0.0);
    const KrylovOutcome k = gmres(A, b, w, bnorm, opt, sol.history);
    bool ok = k.converged;
    if (!ok && k.stagnated && opt.allow_fallback) {
        sol.used_fallback = true;
        const double s = coef.sup();
        ok = damped_fixed_point(A, b, w, bnorm, 1.0 / (1.0 + s * s), opt, sol.history);
    }
    sol.iterations = sol.history.size();
    if (!ok) {
        std::ostringstream os;
        os << "corrector: no convergence after " << sol.iterations << " iterations, relative residual "
           << (sol.history.empty() ? 1.0 : sol.history.back()) << " > tol " << opt.tol
           << (sol.used_fallback ? " (damped fixed point)" : "");
        throw ConvergenceError(os.str(), sol.history);
    }
    A.gradient_of_solution(w, sol.grad_phi);
    sol.residual = corrector_residual(coef, sol);
    return sol;
}

double corrector_residual(const CoefField& coef, const CorrectorSolution& sol) {
    check_solution(coef, sol);
    const std::size_t N = coef.psi.size();
    SpectralOps ops(coef.grid);
    Grid q0(N), q1(N), d(N), d0(N);
    for (std::size_t i = 0; i < N; ++i) {
        const auto v = xi_plus(sol, i);
        const auto a = coef.apply(i, v[0], v[1]);
        q0[i] = a[0];
        q1[i] = a[1];
    }
    ops.divergence(q0, q1, d);
    for (std::size_t i = 0; i < N; ++i) {
        const auto a = coef.apply(i, sol.xi[0], sol.xi[1]);
        q0[i] = a[0];
        q1[i] = a[1];
    }
    ops.divergence(q0, q1, d0);
    const double den = std::sqrt(dot(d0, d0));
    const double num = std::sqrt(dot(d, d));
    return den > 0.0 ? num / den : num;
}

double effective_lambda(const CorrectorSolution& sol, const CoefField& coef) {
    check_solution(coef, sol);
    const double x2 = sol.xi[0] * sol.xi[0] + sol.xi[1] * sol.xi[1];
    if (!(x2 > 0.0)) throw ValidationError("corrector: xi must be nonzero");
    double s = 0.0;
    for (std::size_t i = 0; i < coef.psi.size(); ++i)
        s += sol.grad_phi[0][i] * sol.grad_phi[0][i] + sol.grad_phi[1][i] * sol.grad_phi[1][i];
    return 1.0 + s / static_cast<double>(coef.psi.size()) / x2;
}

std::array<double, 2> mean_flux(const CorrectorSolution& sol, const CoefField& coef) {
    check_solution(coef, sol);
    std::array<double, 2> m{0.0, 0.0};
    for (std::size_t i = 0; i < coef.psi.size(); ++i) {
        const auto v = xi_plus(sol, i);
        const auto a = coef.apply(i, v[0], v[1]);
        m[0] += a[0];
        m[1] += a[1];
    }
    const double N = static_cast<double>(coef.psi.size());
    return {m[0] / N, m[1] / N};
}

std::array<double, 2> energy_pair(const CorrectorSolution& sol, const CoefField& coef) {
    check_solution(coef, sol);
    double e = 0.0, s = 0.0;
    for (std::size_t i = 0; i < coef.psi.size(); ++i) {
        const auto v = xi_plus(sol, i);
        const auto a = coef.apply(i, v[0], v[1]);
        e += v[0] * a[0] + v[1] * a[1];
        s += v[0] * v[0] + v[1] * v[1];
    }
    const double N = static_cast<double>(coef.psi.size());
    return {e / N, s / N};
}

JacobianStats jacobian_stats(const CorrectorSolution& e1, const CorrectorSolution& e2,
                             const std::vector<double>& r_schedule) {
    const std::size_t N = e1.grad_phi[0].size();
    if (e2.grad_phi[0].size() != N || e1.grad_phi[1].size() != N || e2.grad_phi[1].size() != N || N == 0)
        throw ValidationError("corrector: mismatched corrector grids");
    if (e1.xi[0] != 1.0 || e1.xi[1] != 0.0 || e2.xi[0] != 0.0 || e2.xi[1] != 1.0)
        throw ValidationError("corrector: jacobian_stats needs the correctors of e1 and e2");
    JacobianStats st;
    st.r = r_schedule;
    std::sort(st.r.begin(), st.r.end());
    st.truncated.assign(st.r.size(), 0.0);
    double f2 = 0.0, ad = 0.0, de = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const Endo2 F = Endo2::from(1.0 + e1.grad_phi[0][i], e1.grad_phi[1][i], e2.grad_phi[0][i],
                                    1.0 + e2.grad_phi[1][i]);
        const double n2 = F(0, 0) * F(0, 0) + F(0, 1) * F(0, 1) + F(1, 0) * F(1, 0) + F(1, 1) * F(1, 1);
        const double d = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
        f2 += n2;
        ad += std::abs(d);
        de += d;
        g1 += e1.grad_phi[0][i] * e1.grad_phi[0][i] + e1.grad_phi[1][i] * e1.grad_phi[1][i];
        g2 += e2.grad_phi[0][i] * e2.grad_phi[0][i] + e2.grad_phi[1][i] * e2.grad_phi[1][i];
        for (std::size_t j = 0; j < st.r.size(); ++j)
            if (n2 <= st.r[j]) st.truncated[j] += n2;
    }
    const double n = static_cast<double>(N);
    st.E_F2 = f2 / n;
    st.E_absdet = ad / n;
    st.E_det = de / n;
    st.lambda = 1.0 + 0.5 * (g1 + g2) / n;
    for (double& t : st.truncated) t /= n;
    return st;
}

std::array<Grid, 2> first_order_corrector(const CoefField& coef, const CoVec& xi) {
    coef.validate();
    const std::size_t N = coef.psi.size();
    SpectralOps ops(coef.grid);
    std::array<Grid, 2> gpsi, out;
    ops.gradient(coef.psi, gpsi);
    // grad psi . J xi with J xi = (-xi_2, xi_1).
    Grid src(N);
    for (std::size_t i = 0; i < N; ++i) src[i] = -gpsi[0][i] * xi[1] + gpsi[1][i] * xi[0];
    Spectrum s;
    ops.forward(src, s);
    s[0] = 0.0;
    ops.grad_inv_lap(s, out);
    for (auto& g : out)
        for (double& v : g) v = -v;
    return out;
}

void CorrectorConfig::validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ValidationError("corrector: eps must be finite and >= 0");
    if (!(L > 1.0) || !std::isfinite(L)) throw ValidationError("corrector: L must exceed 1");
    if (per_octave < 1) throw ValidationError("corrector: per_octave must be >= 1");
    if (n_samples < 2) throw ValidationError("corrector: n_samples must be >= 2");
    if (box_len < 0.0 || !std::isfinite(box_len)) throw ValidationError("corrector: box_len must be >= 0");
    for (double r : r_schedule)
        if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("corrector: truncation levels must be positive");
    solver.validate();
    grid().validate(L);
}

TorusGrid CorrectorConfig::grid() const {
    if (box_len > 0.0) return TorusGrid{n, box_len};
    return TorusGrid::for_cutoff(n, L);
}

CorrectorEnsemble run_correctors(const CorrectorConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    CorrectorEnsemble ens;
    ens.cfg = cfg;
    ens.samples.resize(cfg.n_samples);
    const TorusGrid grid = cfg.grid();
    const std::uint64_t key = derive_seed(cfg.seed, "corrector");
    const CoVec e1{{1.0, 0.0}}, e2{{0.0, 1.0}};
    parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t k) {
        NormalStream rng(key, k);
        const CoefField coef = sample_psi(grid, cfg.eps, cfg.L, rng, cfg.per_octave);
        const CorrectorSolution s1 = solve_corrector(coef, e1, cfg.solver);
        const CorrectorSolution s2 = solve_corrector(coef, e2, cfg.solver);
        CorrectorSample& out = ens.samples[k];
        out.lambda1 = effective_lambda(s1, coef);
        out.lambda2 = effective_lambda(s2, coef);
        out.residual = std::max(s1.residual, s2.residual);
        out.iterations = s1.iterations + s2.iterations;
        out.used_fallback = s1.used_fallback || s2.used_fallback;
        out.stats = jacobian_stats(s1, s2, cfg.r_schedule);
        double g = 0.0;
        for (const CoVec& xi : {e1, e2}) {
            const auto p = first_order_corrector(coef, xi);
            for (std::size_t i = 0; i < p[0].size(); ++i) g += p[0][i] * p[0][i] + p[1][i] * p[1][i];
        }
        out.grad2_first_order = 0.5 * g / static_cast<double>(grid.size());
    });
    auto collect = [&](auto get) {
        std::vector<double> v;
        v.reserve(ens.samples.size());
        for (const auto& s : ens.samples) v.push_back(get(s));
        return mean_se(v);
    };
    ens.lambda = collect([](const CorrectorSample& s) { return s.stats.lambda; });
    ens.E_F2 = collect([](const CorrectorSample& s) { return s.stats.E_F2; });
    ens.E_absdet = collect([](const CorrectorSample& s) { return s.stats.E_absdet; });
    ens.E_det = collect([](const CorrectorSample& s) { return s.stats.E_det; });
    ens.grad2 = collect([](const CorrectorSample& s) { return s.stats.lambda - 1.0; });
    ens.grad2_first_order = collect([](const CorrectorSample& s) { return s.grad2_first_order; });
    const std::size_t nr = ens.samples.front().stats.truncated.size();
    for (std::size_t j = 0; j < nr; ++j)
        ens.truncated.push_back(collect([j](const CorrectorSample& s) { return s.stats.truncated[j]; }));
    ens.first_order_expected = 0.5 * cfg.eps * cfg.eps * std::log(cfg.L);
    ens.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return ens;
}

}  // namespace critdiff
