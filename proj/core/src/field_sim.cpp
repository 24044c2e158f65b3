#include "critdiff/field_sim.hpp"

#include "critdiff/errors.hpp"
#include "critdiff/parallel.hpp"
#include "fft2d.hpp"
#include "quadrature.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

namespace critdiff {

namespace {

using detail::fftw_planner_mutex;

// Unnormalized 2D backward c2c transform; plans are shared and executed on caller buffers.
class Backward2d {
  public:
    explicit Backward2d(std::size_t n) : n_(n) {
        std::vector<std::complex<double>> a(n * n), b(n * n);
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        plan_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), reinterpret_cast<fftw_complex*>(a.data()),
                                 reinterpret_cast<fftw_complex*>(b.data()), FFTW_BACKWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!plan_) throw NumericError("field-sim: FFTW planning failed");
    }
    ~Backward2d() {
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }
    Backward2d(const Backward2d&) = delete;
    Backward2d& operator=(const Backward2d&) = delete;

    void operator()(std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out) const {
        fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    }

  private:
    std::size_t n_;
    fftw_plan plan_;
};

const Backward2d& backward_plan(std::size_t n) {
    static std::mutex mu;
    static std::vector<std::pair<std::size_t, std::unique_ptr<Backward2d>>> cache;
    std::lock_guard<std::mutex> lk(mu);
    for (auto& [m, p] : cache)
        if (m == n) return *p;
    cache.emplace_back(n, std::make_unique<Backward2d>(n));
    return *cache.back().second;
}

bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

double lambda2_at(double L, double eps) { return 1.0 + eps * eps * std::log(L); }

// lambda~_s^{-2}: mean of 1/lambda~^2 over the shell in d lambda~^2.
double shell_inv_lambda2(const Shell& s, double eps) {
    const double x0 = lambda2_at(s.L0, eps), x1 = lambda2_at(s.L1, eps);
    if (x1 - x0 < 1e-14) return 1.0 / x0;
    return std::log(x1 / x0) / (x1 - x0);
}

// eps^2 int_{1/L1}^{1/L0} r^p / lambda~^2(r) dr with lambda~^2(r) = 1 - eps^2 ln r (weighted) or 1.
double continuum(const Shell& s, double eps, int p, bool weighted) {
    const double e2 = eps * eps;
    // r = e^{-t}, t in [ln L0, ln L1]: dr = r dt.
    auto f = [&](double t) {
        const double w = weighted ? 1.0 / (1.0 + e2 * t) : 1.0;
        return std::exp(-(p + 1) * t) * w;
    };
    return e2 * detail::panel_quadrature(f, std::log(s.L0), std::log(s.L1), 0.05);
}

}  // namespace

TorusGrid TorusGrid::for_cutoff(std::size_t n, double L_max) {
    return TorusGrid{n, 4.0 * 2.0 * std::numbers::pi * L_max};
}

void TorusGrid::validate(double L_max) const {
    if (!is_pow2(n)) throw ValidationError("field-sim: n must be a power of two");
    if (!(box_len >= 2.0 * std::numbers::pi * L_max * (1.0 - 1e-12)))
        throw ValidationError("field-sim: box_len must be at least 2 pi L_max");
    if (!(std::numbers::pi / h() > 1.0))
        throw ValidationError("field-sim: grid does not resolve the UV cutoff |k| = 1 (need pi n / box_len > 1)");
}

double TorusGrid::dk() const { return 2.0 * std::numbers::pi / box_len; }

std::ptrdiff_t TorusGrid::signed_index(std::size_t i) const {
    const auto s = static_cast<std::ptrdiff_t>(i);
    return i <= n / 2 ? s : s - static_cast<std::ptrdiff_t>(n);
}

std::vector<Shell> shell_ladder(double L_max, int per_octave) {
    if (!(L_max > 1.0)) throw ValidationError("shell_ladder: L_max must exceed 1");
    if (per_octave < 1) throw ValidationError("shell_ladder: per_octave must be positive");
    const auto m = static_cast<std::size_t>(std::max(1.0, std::round(per_octave * std::log2(L_max))));
    std::vector<Shell> out(m);
    for (std::size_t j = 0; j < m; ++j) {
        out[j].L0 = std::pow(L_max, static_cast<double>(j) / static_cast<double>(m));
        out[j].L1 = std::pow(L_max, static_cast<double>(j + 1) / static_cast<double>(m));
    }
    out.front().L0 = 1.0;
    out.back().L1 = L_max;
    return out;
}

ShellSpectrum make_shell_spectrum(const TorusGrid& grid, const Shell& shell, double eps) {
    if (!(shell.L1 > shell.L0) || !(shell.L0 >= 1.0)) throw ValidationError("field-sim: shell needs 1 <= L0 < L1");
    if (!(eps >= 0.0)) throw ValidationError("field-sim: eps must be non-negative");
    grid.validate(shell.L1);
    ShellSpectrum sp;
    sp.grid = grid;
    sp.shell = shell;
    sp.eps = eps;
    const std::size_t n = grid.n;
    const double dk = grid.dk(), kmin = 1.0 / shell.L1, kmax = 1.0 / shell.L0;
    double inv_sum = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double kx = dk * static_cast<double>(grid.signed_index(ix));
            const double ky = dk * static_cast<double>(grid.signed_index(iy));
            const double k2 = kx * kx + ky * ky;
            const double k = std::sqrt(k2);
            if (!(k > kmin && k <= kmax)) continue;
            const std::size_t idx = iy * n + ix;
            const std::size_t partner = ((n - iy) % n) * n + (n - ix) % n;
            inv_sum += 1.0 / k2;
            if (partner == idx) throw ValidationError("field-sim: self-conjugate mode inside a shell");
            if (idx < partner) sp.modes.push_back({idx, partner, kx, ky, k2, 0.0});
        }
    if (sp.modes.empty()) {
        std::ostringstream os;
        os << "field-sim: shell (" << shell.L0 << ", " << shell.L1 << "] has no lattice modes: annulus "
           << kmin << " < |k| <= " << kmax << " with dk = " << dk;
        throw ValidationError(os.str());
    }
    const double target = eps * eps * std::log(shell.L1 / shell.L0);
    const double A = target / inv_sum;
    sp.calibration = A / (eps * eps * dk * dk / (2.0 * std::numbers::pi));
    if (eps == 0.0) sp.calibration = 1.0;
    for (auto& m : sp.modes) m.sd = std::sqrt(0.5 * A / m.k2);
    return sp;
}

ShellField sample_shell_field(const ShellSpectrum& spec, NormalStream& rng) {
    ShellField f;
    f.spec = &spec;
    f.coef.assign(spec.grid.size(), {0.0, 0.0});
    for (const auto& m : spec.modes) {
        const double a = m.sd * rng(), b = m.sd * rng();
        f.coef[m.idx] = {a, b};
        f.coef[m.partner] = {a, -b};
    }
    return f;
}

namespace {

// Physical field of coefficients c_k * mult(k) on the shell modes.
template <class Mult>
Grid synth(const ShellField& f, Mult&& mult, std::vector<std::complex<double>>& spec_buf,
           std::vector<std::complex<double>>& out_buf, double* max_imag = nullptr) {
    const auto& sp = *f.spec;
    std::fill(spec_buf.begin(), spec_buf.end(), std::complex<double>{0.0, 0.0});
    for (const auto& m : sp.modes) {
        const std::complex<double> w = mult(m.kx, m.ky, m.k2);
        spec_buf[m.idx] = f.coef[m.idx] * w;
        spec_buf[m.partner] = f.coef[m.partner] * std::conj(w);
    }
    backward_plan(sp.grid.n)(spec_buf, out_buf);
    Grid g(out_buf.size());
    double mi = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = out_buf[i].real();
        mi = std::max(mi, std::abs(out_buf[i].imag()));
    }
    if (max_imag) *max_imag = mi;
    return g;
}

}  // namespace

std::vector<double> to_real(const ShellField& f, double* max_imag) {
    if (!f.spec) throw ValidationError("field-sim: shell field without spectrum");
    std::vector<std::complex<double>> a(f.coef.size()), b(f.coef.size());
    return synth(f, [](double, double, double) { return std::complex<double>{1.0, 0.0}; }, a, b, max_imag);
}

DriverGrids driver_fields(const ShellField& f) {
    if (!f.spec) throw ValidationError("field-sim: shell field without spectrum");
    const auto& sp = *f.spec;
    DriverGrids d;
    d.lambda2_0 = lambda2_at(sp.shell.L0, sp.eps);
    d.lambda2_1 = lambda2_at(sp.shell.L1, sp.eps);
    const double inv_lam = std::sqrt(shell_inv_lambda2(sp.shell, sp.eps));
    std::vector<std::complex<double>> a(f.coef.size()), b(f.coef.size());
    const std::complex<double> I{0.0, 1.0};
    // dphi^a multiplier: i (Jk)^a / (lambda~ |k|^2), Jk = (-ky, kx).
    auto phi_mult = [&](int comp, double kx, double ky, double k2) {
        const double jk = comp == 0 ? -ky : kx;
        return I * jk * inv_lam / k2;
    };
    auto kc = [](int c, double kx, double ky) { return c == 0 ? kx : ky; };

    d.dpsi = synth(f, [](double, double, double) { return std::complex<double>{1.0, 0.0}; }, a, b);
    for (int c = 0; c < 2; ++c)
        d.grad_psi[c] = synth(f, [&](double kx, double ky, double) { return I * kc(c, kx, ky); }, a, b);
    for (int r = 0; r < 2; ++r) {
        d.dphi[r] = synth(f, [&](double kx, double ky, double k2) { return phi_mult(r, kx, ky, k2); }, a, b);
        for (int c = 0; c < 2; ++c)
            d.grad[r * 2 + c] = synth(
                f, [&](double kx, double ky, double k2) { return I * kc(c, kx, ky) * phi_mult(r, kx, ky, k2); }, a, b);
        constexpr int pairs[3][2] = {{0, 0}, {0, 1}, {1, 1}};
        for (int p = 0; p < 3; ++p)
            d.hess[r * 3 + p] = synth(
                f,
                [&](double kx, double ky, double k2) {
                    return -kc(pairs[p][0], kx, ky) * kc(pairs[p][1], kx, ky) * phi_mult(r, kx, ky, k2);
                },
                a, b);
    }
    return d;
}

FieldState FieldState::initial(const TorusGrid& grid) {
    FieldState s;
    s.grid = grid;
    s.lambda2 = 1.0;
    for (auto& g : s.phi) g.assign(grid.size(), 0.0);
    for (int c = 0; c < 4; ++c) s.F[c].assign(grid.size(), c == 0 || c == 3 ? 1.0 : 0.0);
    return s;
}

void step_fields_inplace(FieldState& s, const DriverGrids& d, SdeMode mode) {
    const std::size_t N = s.grid.size();
    if (d.dpsi.size() != N || s.phi[0].size() != N) throw ValidationError("step_fields: grid sizes differ");
    if (std::abs(s.lambda2 - d.lambda2_0) > 1e-12 * d.lambda2_0)
        throw ValidationError("step_fields: driver shell does not start at the current lambda2");
    DriverIncrement inc;
    inc.dlambda2 = d.lambda2_1 - d.lambda2_0;
    for (std::size_t i = 0; i < N; ++i) {
        inc.dphi = TanVec{{d.dphi[0][i], d.dphi[1][i]}};
        inc.grad = Endo2::from(d.grad[0][i], d.grad[1][i], d.grad[2][i], d.grad[3][i]);
        inc.hess = SymTriTensor::from_components(
            {d.hess[0][i], d.hess[1][i], d.hess[2][i], d.hess[3][i], d.hess[4][i], d.hess[5][i]});
        ProxyState p{TanVec{{s.phi[0][i], s.phi[1][i]}}, Endo2::from(s.F[0][i], s.F[1][i], s.F[2][i], s.F[3][i]),
                     s.lambda2};
        try {
            p = step(p, inc, mode);
        } catch (const NumericError&) {
            std::ostringstream os;
            os.precision(17);
            os << "field-sim: non-finite state at node (" << i % s.grid.n << ", " << i / s.grid.n
               << "), lambda2 = " << s.lambda2;
            throw NumericError(os.str());
        }
        s.phi[0][i] = p.phi[0];
        s.phi[1][i] = p.phi[1];
        for (int c = 0; c < 4; ++c) s.F[c][i] = p.F.m[c];
    }
    s.lambda2 = d.lambda2_1;
}

FieldState step_fields(const FieldState& s, const DriverGrids& d, SdeMode mode) {
    FieldState out = s;
    step_fields_inplace(out, d, mode);
    return out;
}

void FieldRunConfig::validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ValidationError("field-sim: eps must be non-negative");
    if (n_samples < 2) throw ValidationError("field-sim: need at least two samples");
    grid().validate(L_max);
    shell_ladder(L_max, per_octave);
}

TorusGrid FieldRunConfig::grid() const {
    return box_len > 0.0 ? TorusGrid{n, box_len} : TorusGrid::for_cutoff(n, L_max);
}

std::vector<double> FieldRunConfig::lambda2_grid() const {
    std::vector<double> x{1.0};
    for (const auto& s : shell_ladder(L_max, per_octave)) x.push_back(lambda2_at(s.L1, eps));
    return x;
}

FieldRunResult run_fields(const FieldRunConfig& cfg) {
    cfg.validate();
    if (cfg.eps == 0.0) throw ValidationError("field-sim: run_fields requires eps > 0");
    const auto t0 = std::chrono::steady_clock::now();
    const TorusGrid grid = cfg.grid();
    const auto shells = shell_ladder(cfg.L_max, cfg.per_octave);
    std::vector<ShellSpectrum> specs;
    specs.reserve(shells.size());
    for (const auto& s : shells) specs.push_back(make_shell_spectrum(grid, s, cfg.eps));
    const std::size_t S = cfg.n_samples, M = shells.size(), N = grid.size();
    const std::vector<double> x = cfg.lambda2_grid();

    FieldRunResult res;
    res.cfg = cfg;
    res.shells.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
        auto& q = res.shells[j];
        q.shell = shells[j];
        q.calibration = specs[j].calibration;
        q.n_modes = specs[j].n_modes();
        q.expected = {continuum(shells[j], cfg.eps, -1, false), continuum(shells[j], cfg.eps, 1, false),
                      0.5 * continuum(shells[j], cfg.eps, -3, true), continuum(shells[j], cfg.eps, -1, true),
                      0.5 * continuum(shells[j], cfg.eps, 1, true)};
        q.samples.assign(S, {});
    }
    res.var_psi.assign(S, 0.0);
    res.constraint_residual.assign(S, 0.0);
    std::vector<std::vector<std::array<double, kNumMoments>>> obs(S, std::vector<std::array<double, kNumMoments>>(M + 1));
    const std::uint64_t key = derive_seed(cfg.seed, "field-sim");
    const double inv_N = 1.0 / static_cast<double>(N);

    parallel_for(S, cfg.threads, [&](std::size_t smp) {
        NormalStream rng(key, smp);
        FieldState st = FieldState::initial(grid);
        Grid psi(N, 0.0);
        auto record = [&](std::size_t r) {
            const double inv_L = std::exp(-lnL_of(st.lambda2, cfg.eps));
            std::array<double, kNumMoments> acc{};
            for (std::size_t i = 0; i < N; ++i) {
                const auto o = observe_moments(TanVec{{st.phi[0][i] * inv_L, st.phi[1][i] * inv_L}},
                                               Endo2::from(st.F[0][i], st.F[1][i], st.F[2][i], st.F[3][i]));
                for (int k = 0; k < kNumMoments; ++k) acc[k] += o[k];
            }
            for (auto& v : acc) v *= inv_N;
            obs[smp][r] = acc;
        };
        record(0);
        double resid = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            const ShellField f = sample_shell_field(specs[j], rng);
            const DriverGrids d = driver_fields(f);
            const double lam = 1.0 / std::sqrt(shell_inv_lambda2(shells[j], cfg.eps));
            std::array<double, ShellQV::kCount> q{};
            for (std::size_t i = 0; i < N; ++i) {
                q[ShellQV::kPsi] += d.dpsi[i] * d.dpsi[i];
                q[ShellQV::kGradPsi] += d.grad_psi[0][i] * d.grad_psi[0][i] + d.grad_psi[1][i] * d.grad_psi[1][i];
                q[ShellQV::kPhiXi] += d.dphi[0][i] * d.dphi[0][i];
                for (int c = 0; c < 4; ++c) q[ShellQV::kGrad] += d.grad[c][i] * d.grad[c][i];
                // hess(i; j, 1) for j = 1, 2: slots (11) and (12).
                for (int r = 0; r < 2; ++r)
                    q[ShellQV::kHessDc] += d.hess[r * 3][i] * d.hess[r * 3][i] + d.hess[r * 3 + 1][i] * d.hess[r * 3 + 1][i];
                const double tr = d.grad[0][i] + d.grad[3][i];
                // tr J grad dphi = grad(1,0) - grad(0,1) in the cotangent orientation.
                const double trj = d.grad[2][i] - d.grad[1][i];
                resid = std::max({resid, std::abs(tr), std::abs(lam * trj + d.dpsi[i])});
                psi[i] += d.dpsi[i];
            }
            for (auto& v : q) v *= inv_N;
            res.shells[j].samples[smp] = q;
            step_fields_inplace(st, d, cfg.mode);
            record(j + 1);
        }
        double v = 0.0;
        for (double p : psi) v += p * p;
        res.var_psi[smp] = v * inv_N;
        res.constraint_residual[smp] = resid;
        if (smp == 0) res.final_state = std::move(st);
    });

    MomentSeries& ms = res.series;
    ms.eps = cfg.eps;
    ms.n_traj = S;
    ms.lambda2 = x;
    ms.mean.assign(M + 1, {});
    ms.se.assign(M + 1, {});
    for (std::size_t r = 0; r <= M; ++r)
        for (int k = 0; k < kNumMoments; ++k) {
            double m = 0.0, q = 0.0;
            for (std::size_t s = 0; s < S; ++s) m += obs[s][r][k];
            m /= static_cast<double>(S);
            for (std::size_t s = 0; s < S; ++s) q += (obs[s][r][k] - m) * (obs[s][r][k] - m);
            ms.mean[r][k] = m;
            ms.se[r][k] = std::sqrt(q / static_cast<double>(S - 1) / static_cast<double>(S));
        }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

namespace {

Estimate mean_se(const std::vector<double>& v) {
    Estimate e;
    const double n = static_cast<double>(v.size());
    for (double x : v) e.value += x;
    e.value /= n;
    double q = 0.0;
    for (double x : v) q += (x - e.value) * (x - e.value);
    e.se = v.size() > 1 ? std::sqrt(q / (n - 1.0) / n) : 0.0;
    return e;
}

}  // namespace

QvReport empirical_qv(const FieldRunResult& run) {
    const std::size_t M = run.shells.size();
    if (M < 8) throw ValidationError("empirical_qv: need at least 8 shells");
    const std::size_t S = run.var_psi.size();
    QvReport r;
    std::vector<double> psi(S), deriv(S), phi(S), grad(S), dc(S);
    double e_phi = 0.0, e_grad = 0.0, e_dc = 0.0;
    for (const auto& q : run.shells) {
        e_phi += q.expected[ShellQV::kPhiXi];
        e_grad += q.expected[ShellQV::kGrad];
        e_dc += q.expected[ShellQV::kHessDc];
        r.max_calibration_dev = std::max(r.max_calibration_dev, std::abs(q.calibration - 1.0));
    }
    for (std::size_t s = 0; s < S; ++s) {
        double p = 0.0, d = 0.0, ph = 0.0, g = 0.0, h = 0.0;
        for (const auto& q : run.shells) {
            const auto& v = q.samples[s];
            const double L2 = q.expected[ShellQV::kPsi] / q.expected[ShellQV::kGradPsi];
            p += v[ShellQV::kPsi];
            d += v[ShellQV::kGradPsi] * L2;
            ph += v[ShellQV::kPhiXi];
            g += v[ShellQV::kGrad];
            h += v[ShellQV::kHessDc];
        }
        psi[s] = p;
        deriv[s] = d / p;
        phi[s] = ph / e_phi;
        grad[s] = g / e_grad;
        dc[s] = 0.5 * h / e_dc;
    }
    r.psi_qv = mean_se(psi);
    r.psi_qv_expected = run.cfg.eps * run.cfg.eps * std::log(run.cfg.L_max);
    r.derivative_ratio = mean_se(deriv);
    r.dphi_ratio = mean_se(phi);
    r.grad_ratio = mean_se(grad);
    r.frame_tri = mean_se(dc);
    r.var_psi = mean_se(run.var_psi);
    r.var_psi_expected = r.psi_qv_expected;
    return r;
}

void write_snapshot(const std::string& path, const FieldState& s) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("write_snapshot: cannot open " + tmp);
        const std::int64_t n = static_cast<std::int64_t>(s.grid.n), ncomp = 6;
        out.write(reinterpret_cast<const char*>(&n), sizeof n);
        out.write(reinterpret_cast<const char*>(&s.grid.box_len), sizeof(double));
        out.write(reinterpret_cast<const char*>(&s.lambda2), sizeof(double));
        out.write(reinterpret_cast<const char*>(&ncomp), sizeof ncomp);
        for (const auto* g : {&s.phi[0], &s.phi[1], &s.F[0], &s.F[1], &s.F[2], &s.F[3]})
            out.write(reinterpret_cast<const char*>(g->data()), static_cast<std::streamsize>(g->size() * sizeof(double)));
        if (!out) throw ValidationError("write_snapshot: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

FieldState read_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("read_snapshot: cannot open " + path);
    std::int64_t n = 0, ncomp = 0;
    FieldState s;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&s.grid.box_len), sizeof(double));
    in.read(reinterpret_cast<char*>(&s.lambda2), sizeof(double));
    in.read(reinterpret_cast<char*>(&ncomp), sizeof ncomp);
    if (!in || n <= 0 || n > (1 << 16) || ncomp != 6) throw ValidationError("read_snapshot: bad header in " + path);
    s.grid.n = static_cast<std::size_t>(n);
    for (auto* g : {&s.phi[0], &s.phi[1], &s.F[0], &s.F[1], &s.F[2], &s.F[3]}) {
        g->resize(s.grid.size());
        in.read(reinterpret_cast<char*>(g->data()), static_cast<std::streamsize>(g->size() * sizeof(double)));
    }
    if (!in) throw ValidationError("read_snapshot: truncated file " + path);
    return s;
}

}  // namespace critdiff
