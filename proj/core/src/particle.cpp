#include "critdiff/particle.hpp"

#include "critdiff/errors.hpp"
#include "critdiff/parallel.hpp"
#include "fft2d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

namespace critdiff {

namespace {

constexpr std::size_t kBlock = 256;

bool is_pow2(std::size_t n) { return n >= 4 && (n & (n - 1)) == 0; }

double wavenumber(const TorusGrid& g, std::size_t i, bool signed_axis) {
    if (i == g.n / 2) return 0.0;
    return g.dk() * static_cast<double>(signed_axis ? g.signed_index(i) : static_cast<std::ptrdiff_t>(i));
}

double uniform_from_normal(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

DriftField DriftField::zero(const TorusGrid& grid) {
    DriftField d;
    d.grid = grid;
    d.b = {Grid(grid.size(), 0.0), Grid(grid.size(), 0.0)};
    return d;
}

DriftField DriftField::from_psi(const CoefField& coef) {
    coef.validate();
    const TorusGrid& g = coef.grid;
    const auto& fft = detail::real_fft(g.n);
    detail::Spectrum p, s0, s1;
    fft.forward(coef.psi, p);
    s0.resize(p.size());
    s1.resize(p.size());
    const std::size_t nh = fft.half();
    const std::complex<double> I{0.0, 1.0};
    const double norm = 1.0 / static_cast<double>(g.size());
    for (std::size_t iy = 0; iy < g.n; ++iy)
        for (std::size_t ix = 0; ix < nh; ++ix) {
            const std::size_t s = iy * nh + ix;
            const double kx = wavenumber(g, ix, false), ky = wavenumber(g, iy, true);
            s0[s] = -I * ky * p[s] * norm;
            s1[s] = I * kx * p[s] * norm;
        }
    DriftField d;
    d.grid = g;
    fft.backward(s0, d.b[0]);
    fft.backward(s1, d.b[1]);
    return d;
}

void DriftField::validate() const {
    if (!is_pow2(grid.n)) throw ValidationError("particle: n must be a power of two >= 4");
    if (!(grid.box_len > 0.0) || !std::isfinite(grid.box_len)) throw ValidationError("particle: box_len must be positive");
    for (const auto& c : b) {
        if (c.size() != grid.size()) throw ValidationError("particle: drift does not match the grid");
        for (double v : c)
            if (!std::isfinite(v)) throw ValidationError("particle: drift is not finite");
    }
}

double DriftField::sup() const {
    double s = 0.0;
    for (std::size_t i = 0; i < b[0].size(); ++i) s = std::max(s, std::hypot(b[0][i], b[1][i]));
    return s;
}

double DriftField::max_divergence() const {
    validate();
    const auto& fft = detail::real_fft(grid.n);
    detail::Spectrum s0, s1;
    fft.forward(b[0], s0);
    fft.forward(b[1], s1);
    const std::size_t nh = fft.half();
    const std::complex<double> I{0.0, 1.0};
    const double norm = 1.0 / static_cast<double>(grid.size());
    for (std::size_t iy = 0; iy < grid.n; ++iy)
        for (std::size_t ix = 0; ix < nh; ++ix) {
            const std::size_t s = iy * nh + ix;
            s0[s] = I * (wavenumber(grid, ix, false) * s0[s] + wavenumber(grid, iy, true) * s1[s]) * norm;
        }
    Grid d;
    fft.backward(s0, d);
    double m = 0.0;
    for (double v : d) m = std::max(m, std::abs(v));
    return m;
}

std::array<double, 2> DriftField::at(double x, double y) const {
    const double h = grid.h();
    const std::size_t mask = grid.n - 1;
    const double u = x / h, v = y / h;
    const double fu = std::floor(u), fv = std::floor(v);
    const double tx = u - fu, ty = v - fv;
    const auto i0 = static_cast<std::size_t>(static_cast<std::int64_t>(fu)) & mask;
    const auto j0 = static_cast<std::size_t>(static_cast<std::int64_t>(fv)) & mask;
    const std::size_t i1 = (i0 + 1) & mask, j1 = (j0 + 1) & mask;
    const std::size_t a = j0 * grid.n + i0, bb = j0 * grid.n + i1, c = j1 * grid.n + i0, d = j1 * grid.n + i1;
    std::array<double, 2> out{};
    for (int k = 0; k < 2; ++k) {
        const Grid& f = b[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] =
            (1.0 - ty) * ((1.0 - tx) * f[a] + tx * f[bb]) + ty * ((1.0 - tx) * f[c] + tx * f[d]);
    }
    return out;
}

void PathOptions::validate() const {
    if (!(dt > 0.0) || dt > 0.1) throw ValidationError("particle: dt must lie in (0, 0.1]");
    if (times.empty()) throw ValidationError("particle: no reporting times");
    if (n_paths < 2) throw ValidationError("particle: n_paths must be >= 2");
    if (occupancy_cells < 1) throw ValidationError("particle: occupancy_cells must be >= 1");
    double prev = 0.0;
    for (double t : times) {
        if (!(t > prev)) throw ValidationError("particle: reporting times must be positive and increasing");
        const double k = t / dt;
        if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
            throw ValidationError("particle: reporting time " + std::to_string(t) + " is not a multiple of dt");
        prev = t;
    }
}

MsdEstimate euler_maruyama(const DriftField& drift, const PathOptions& opt) {
    opt.validate();
    drift.validate();
    const std::size_t nt = opt.times.size();
    std::vector<std::size_t> at_step(nt);
    for (std::size_t j = 0; j < nt; ++j) at_step[j] = static_cast<std::size_t>(std::llround(opt.times[j] / opt.dt));
    const std::size_t n_steps = at_step.back();
    const std::size_t n_blocks = (opt.n_paths + kBlock - 1) / kBlock;
    const std::size_t cells = opt.occupancy_cells;
    const double box = drift.grid.box_len, sq = std::sqrt(2.0 * opt.dt);
    const std::uint64_t key = derive_seed(opt.seed, "particle");

    // Per block: sums of d^2 and d^4 per time and component, and final cell counts.
    std::vector<std::vector<double>> s2(n_blocks), s4(n_blocks), sm2(n_blocks), sm4(n_blocks);
    std::vector<std::vector<std::size_t>> occ(n_blocks);
    std::vector<double> per_path(opt.keep_paths ? opt.n_paths * nt : 0);
    parallel_for(n_blocks, opt.threads, [&](std::size_t blk) {
        s2[blk].assign(2 * nt, 0.0);
        s4[blk].assign(2 * nt, 0.0);
        sm2[blk].assign(nt, 0.0);
        sm4[blk].assign(nt, 0.0);
        occ[blk].assign(cells * cells, 0);
        const std::size_t p_end = std::min(opt.n_paths, (blk + 1) * kBlock);
        for (std::size_t p = blk * kBlock; p < p_end; ++p) {
            NormalStream rng(key, p);
            double x = box * uniform_from_normal(rng()), y = box * uniform_from_normal(rng());
            double dx = 0.0, dy = 0.0;
            std::size_t j = 0;
            for (std::size_t step = 1; step <= n_steps; ++step) {
                const auto v = drift.at(x, y);
                const double ix = v[0] * opt.dt + sq * rng(), iy = v[1] * opt.dt + sq * rng();
                dx += ix;
                dy += iy;
                x += ix;
                y += iy;
                if (x < 0.0 || x >= box) x -= box * std::floor(x / box);
                if (y < 0.0 || y >= box) y -= box * std::floor(y / box);
                if (step == at_step[j]) {
                    const double ax = dx * dx, ay = dy * dy, m = 0.5 * (ax + ay);
                    s2[blk][2 * j] += ax;
                    s2[blk][2 * j + 1] += ay;
                    s4[blk][2 * j] += ax * ax;
                    s4[blk][2 * j + 1] += ay * ay;
                    sm2[blk][j] += m;
                    sm4[blk][j] += m * m;
                    if (opt.keep_paths) per_path[p * nt + j] = m;
                    ++j;
                }
            }
            const auto cx = std::min(cells - 1, static_cast<std::size_t>(x / box * static_cast<double>(cells)));
            const auto cy = std::min(cells - 1, static_cast<std::size_t>(y / box * static_cast<double>(cells)));
            ++occ[blk][cy * cells + cx];
        }
    });

    MsdEstimate est;
    est.times = opt.times;
    est.n_paths = opt.n_paths;
    est.dt = opt.dt;
    est.seed = opt.seed;
    est.per_path = std::move(per_path);
    const double N = static_cast<double>(opt.n_paths);
    auto finish = [N](double a2, double a4, double& mean, double& se) {
        mean = a2 / N;
        se = std::sqrt(std::max(0.0, a4 / N - mean * mean) / (N - 1.0));
    };
    for (int c = 0; c < 2; ++c) {
        est.msd[static_cast<std::size_t>(c)].resize(nt);
        est.se[static_cast<std::size_t>(c)].resize(nt);
    }
    est.msd_mean.resize(nt);
    est.se_mean.resize(nt);
    for (std::size_t j = 0; j < nt; ++j) {
        for (std::size_t c = 0; c < 2; ++c) {
            double a2 = 0.0, a4 = 0.0;
            for (std::size_t blk = 0; blk < n_blocks; ++blk) {
                a2 += s2[blk][2 * j + c];
                a4 += s4[blk][2 * j + c];
            }
            finish(a2, a4, est.msd[c][j], est.se[c][j]);
        }
        double a2 = 0.0, a4 = 0.0;
        for (std::size_t blk = 0; blk < n_blocks; ++blk) {
            a2 += sm2[blk][j];
            a4 += sm4[blk][j];
        }
        finish(a2, a4, est.msd_mean[j], est.se_mean[j]);
    }
    const double expected = N / static_cast<double>(cells * cells);
    for (std::size_t c = 0; c < cells * cells; ++c) {
        std::size_t o = 0;
        for (std::size_t blk = 0; blk < n_blocks; ++blk) o += occ[blk][c];
        est.occupancy_chi2 += (static_cast<double>(o) - expected) * (static_cast<double>(o) - expected) / expected;
    }
    est.occupancy_dof = cells * cells - 1;
    return est;
}

RatioEstimate msd_growth_ratio(const MsdEstimate& small_L, const MsdEstimate& large_L, double L1) {
    if (!(L1 > 0.0)) throw ValidationError("particle: L1 must be positive");
    const double t_max = L1 * L1;
    RatioEstimate r;
    bool found = false;
    for (std::size_t i = 0; i < small_L.times.size(); ++i) {
        const double t = small_L.times[i];
        if (t > t_max * (1.0 + 1e-12)) continue;
        for (std::size_t j = 0; j < large_L.times.size(); ++j) {
            if (std::abs(large_L.times[j] - t) > 1e-9 * t || (found && t <= r.t)) continue;
            const double a = small_L.msd_mean[i], b = large_L.msd_mean[j];
            if (!(a > 0.0)) throw NumericError("particle: vanishing MSD at t = " + std::to_string(t));
            r.t = t;
            r.value = b / a;
            r.se = r.value * std::hypot(small_L.se_mean[i] / a, large_L.se_mean[j] / b);
            r.paired = false;
            const std::size_t n = small_L.n_paths, ni = small_L.times.size(), nj = large_L.times.size();
            if (small_L.seed == large_L.seed && n == large_L.n_paths && small_L.per_path.size() == n * ni &&
                large_L.per_path.size() == n * nj) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t p = 0; p < n; ++p) {
                    const double e = large_L.per_path[p * nj + j] - r.value * small_L.per_path[p * ni + i];
                    s1 += e;
                    s2 += e * e;
                }
                const double N = static_cast<double>(n);
                const double var = std::max(0.0, s2 / N - (s1 / N) * (s1 / N));
                r.se = std::sqrt(var / (N - 1.0)) / a;
                r.paired = true;
            }
            found = true;
        }
    }
    if (!found) throw ValidationError("particle: MSD time ranges share no time <= L1^2");
    return r;
}

void ParticleConfig::validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ValidationError("particle: eps must be finite and >= 0");
    if (!(L > 1.0) || !std::isfinite(L)) throw ValidationError("particle: L must exceed 1");
    if (per_octave < 1) throw ValidationError("particle: per_octave must be >= 1");
    if (box_len < 0.0 || !std::isfinite(box_len)) throw ValidationError("particle: box_len must be >= 0");
    paths.validate();
    grid().validate(L);
}

TorusGrid ParticleConfig::grid() const {
    if (box_len > 0.0) return TorusGrid{n, box_len};
    return TorusGrid::for_cutoff(n, L);
}

ParticleRun run_particles(const ParticleConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    ParticleRun run;
    run.cfg = cfg;
    NormalStream rng(derive_seed(cfg.seed, "particle-field"), 0);
    const DriftField drift = DriftField::from_psi(sample_psi(cfg.grid(), cfg.eps, cfg.L, rng, cfg.per_octave));
    run.drift_sup = drift.sup();
    run.max_divergence = drift.max_divergence();
    run.msd = euler_maruyama(drift, cfg.paths);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

}  // namespace critdiff
