#include "critdiff/proxy_sde.hpp"

#include "critdiff/errors.hpp"
#include "critdiff/parallel.hpp"
#include "critdiff/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

namespace critdiff {

namespace {

constexpr std::size_t kBlock = 256;

Endo2 hess_slice(const std::array<double, 6>& h, int i) {
    // H_i(k, j) = hess(k; i, j)
    return i == 0 ? Endo2::from(h[0], h[1], h[3], h[4]) : Endo2::from(h[1], h[2], h[4], h[5]);
}

Endo2 from_e_coords(double c1, double c2, double c3) { return Endo2::from(c1, c2 + c3, c2 - c3, -c1); }

// Integrated drivers of one step of the scaled scheme.
struct Drivers {
    double rho = 1.0;
    TanVec U;
    Endo2 Gt;  // exponentially weighted grad
    Endo2 g;   // plain grad
    std::array<double, 6> h{};
};

// exp(g) = c I + s g for traceless g, with g^2 = q I and q = -det g.
Endo2 exp_traceless(const Endo2& g) {
    const double q = -g.det();
    double c, s;
    if (std::abs(q) < 1e-6) {
        c = 1.0 + q / 2.0 + q * q / 24.0;
        s = 1.0 + q / 6.0 + q * q / 120.0;
    } else if (q > 0.0) {
        const double r = std::sqrt(q);
        c = std::cosh(r);
        s = std::sinh(r) / r;
    } else {
        const double r = std::sqrt(-q);
        c = std::cos(r);
        s = std::sin(r) / r;
    }
    return c * Endo2::identity() + s * g;
}

// The grad part acts through its exponential, which keeps det F unchanged as
// the continuous flow does; the hessian part is an Euler increment.
void apply(TanVec& phi, Endo2& F, const Drivers& d, SdeMode mode) {
    Endo2 next = exp_traceless(d.g) * F;
    if (mode == SdeMode::full) {
        next += phi[0] * hess_slice(d.h, 0);
        next += phi[1] * hess_slice(d.h, 1);
    }
    F = next;
    const TanVec gp = d.Gt * phi;
    phi = TanVec{{d.rho * phi[0] + gp[0] + d.U[0], d.rho * phi[1] + gp[1] + d.U[1]}};
}

// Per-step factorization shared by every trajectory.
struct StepFactor {
    double rho = 1.0;
    std::array<double, 64> uh{};  // 8 x rank, rows (U, h)
    int rank = 0;
    double a11 = 0.0, a21 = 0.0, a22 = 0.0;  // Cholesky of [[S2, S1], [S1, S0]]
};

struct Unit {
    Eigen::Matrix<double, 8, 8> k;  // (u, h) block at lambda2 = 1, scaled coordinates
    Eigen::Matrix3d tsqrt;          // square root of the E-coordinate grad covariance
};

Unit unit_blocks(double eps, bool zero_c02) {
    const DriverCovariance c = build_cov(1.0, eps, true);
    const int idx[8] = {0, 1, 6, 7, 8, 9, 10, 11};
    Unit u;
    for (int p = 0; p < 8; ++p)
        for (int q = 0; q < 8; ++q) {
            const bool cross = (p < 2) != (q < 2);
            u.k(p, q) = (cross && zero_c02) ? 0.0 : c(idx[p], idx[q]);
        }
    Eigen::Matrix3d t;
    for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n) t(m, n) = 0.25 * c.grad_form(diamond_basis(m + 1), diamond_basis(n + 1));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(t);
    u.tsqrt = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
              es.eigenvectors().transpose();
    return u;
}

StepFactor make_factor(const Unit& u, double x0, double x1, double eps) {
    StepFactor f;
    const double S0 = std::log(x1 / x0);
    const double S1 = decay_weight(x0, x1, eps, 1);
    const double S2 = decay_weight(x0, x1, eps, 2);
    f.rho = std::exp(-(x1 - x0) / (eps * eps));

    Eigen::Matrix<double, 8, 8> a = u.k;
    a.topLeftCorner<2, 2>() *= S2;
    a.topRightCorner<2, 6>() *= S1;
    a.bottomLeftCorner<6, 2>() *= S1;
    a.bottomRightCorner<6, 6>() *= S0;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(a);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    for (int k = 7; k >= 0; --k) {
        const double lam = es.eigenvalues()(k);
        if (lam < -1e-10 * scale) {
            std::ostringstream os;
            os << "proxy-sde: step covariance not PSD at lambda2 = " << x0 << " (eigenvalue " << lam << ")";
            throw NumericError(os.str());
        }
        if (lam <= 1e-14 * scale) continue;
        const double s = std::sqrt(lam);
        for (int p = 0; p < 8; ++p) f.uh[8 * p + f.rank] = es.eigenvectors()(p, k) * s;
        ++f.rank;
    }
    f.a11 = std::sqrt(S2);
    f.a21 = S1 / f.a11;
    f.a22 = std::sqrt(std::max(S0 - f.a21 * f.a21, 0.0));
    return f;
}

Drivers draw(const StepFactor& f, const Eigen::Matrix3d& tsqrt, NormalStream& rng) {
    Drivers d;
    d.rho = f.rho;
    double z[8];
    for (int k = 0; k < f.rank; ++k) z[k] = rng();
    double v[8];
    for (int p = 0; p < 8; ++p) {
        double s = 0.0;
        for (int k = 0; k < f.rank; ++k) s += f.uh[8 * p + k] * z[k];
        v[p] = s;
    }
    d.U = TanVec{{v[0], v[1]}};
    for (int p = 0; p < 6; ++p) d.h[p] = v[2 + p];

    double w1[3], w2[3];
    for (double& w : w1) w = rng();
    for (double& w : w2) w = rng();
    double c1[3], c2[3];
    for (int p = 0; p < 3; ++p) {
        const double y1 = tsqrt(p, 0) * w1[0] + tsqrt(p, 1) * w1[1] + tsqrt(p, 2) * w1[2];
        const double y2 = tsqrt(p, 0) * w2[0] + tsqrt(p, 1) * w2[1] + tsqrt(p, 2) * w2[2];
        c1[p] = f.a11 * y1;
        c2[p] = f.a21 * y1 + f.a22 * y2;
    }
    d.Gt = from_e_coords(c1[0], c1[1], c1[2]);
    d.g = from_e_coords(c2[0], c2[1], c2[2]);
    return d;
}

// Exact aggregation of two consecutive steps.
Drivers combine(const Drivers& a, const Drivers& b) {
    Drivers c;
    c.rho = a.rho * b.rho;
    c.U = TanVec{{b.rho * a.U[0] + b.U[0], b.rho * a.U[1] + b.U[1]}};
    c.Gt = b.rho * a.Gt + b.Gt;
    c.g = a.g + b.g;
    for (int p = 0; p < 6; ++p) c.h[p] = a.h[p] + b.h[p];
    return c;
}

std::array<double, kNumMoments> observe(const TanVec& phi, const Endo2& F) {
    std::array<double, kNumMoments> o{};
    const double p2 = phi.norm2();
    const double f2 = F.frob2();
    const double det = F.det();
    const TriTensor tf = closure_tensor(F, phi);
    const TriTensor ta = closure_tensor(F.adjugate().transpose(), phi);
    o[kPhi2] = p2;
    o[kPhi4] = p2 * p2;
    o[kF2] = f2;
    o[kF4] = f2 * f2;
    o[kDet] = det;
    o[kDet2] = det * det;
    o[kMix] = p2 * f2;
    o[kBulletF] = bullet(tf, tf);
    o[kBulletAdj] = bullet(ta, ta);
    return o;
}

bool finite(const TanVec& phi, const Endo2& F) {
    bool ok = std::isfinite(phi[0]) && std::isfinite(phi[1]);
    for (double v : F.m) ok = ok && std::isfinite(v);
    return ok;
}

// Count, mean and centered sum of squares per (record, moment).
struct Stats {
    double n = 0.0;
    std::vector<double> mean, m2;

    explicit Stats(std::size_t cells = 0) : mean(cells, 0.0), m2(cells, 0.0) {}

    void merge(const Stats& o) {
        if (o.n == 0.0) return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double tot = n + o.n;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double d = o.mean[i] - mean[i];
            mean[i] += d * o.n / tot;
            m2[i] += o.m2[i] + d * d * n * o.n / tot;
        }
        n = tot;
    }
};

// Merges block results strictly in block order.
class OrderedReducer {
  public:
    explicit OrderedReducer(std::size_t cells) : total_(cells) {}

    void submit(std::size_t block, std::unique_ptr<Stats> s) {
        std::lock_guard<std::mutex> lk(mu_);
        pending_.emplace(block, std::move(s));
        for (auto it = pending_.find(next_); it != pending_.end(); it = pending_.find(next_)) {
            total_.merge(*it->second);
            pending_.erase(it);
            ++next_;
        }
    }
    const Stats& total() const { return total_; }

  private:
    std::mutex mu_;
    std::map<std::size_t, std::unique_ptr<Stats>> pending_;
    std::size_t next_ = 0;
    Stats total_;
};

[[noreturn]] void report_nonfinite(double lambda2) {
    std::ostringstream os;
    os.precision(17);
    os << "proxy-sde: non-finite state at lambda2 = " << lambda2;
    throw NumericError(os.str());
}

}  // namespace

std::array<double, kNumMoments> observe_moments(const TanVec& phi, const Endo2& F) { return observe(phi, F); }

ProxyState step(const ProxyState& s, const DriverIncrement& inc, SdeMode mode) {
    ProxyState out = s;
    out.phi = TanVec{{s.phi[0] + inc.dphi[0], s.phi[1] + inc.dphi[1]}};
    const TanVec gp = inc.grad * s.phi;
    out.phi[0] += gp[0];
    out.phi[1] += gp[1];
    Endo2 dF = inc.grad * s.F;
    if (mode == SdeMode::full) {
        const auto& h = inc.hess.components();
        dF += s.phi[0] * hess_slice(h, 0);
        dF += s.phi[1] * hess_slice(h, 1);
    }
    out.F += dF;
    out.lambda2 = s.lambda2 + inc.dlambda2;
    if (!finite(out.phi, out.F)) report_nonfinite(s.lambda2);
    return out;
}

TriTensor closure_tensor(const Endo2& m, const TanVec& phi) {
    TriTensor t;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) t(k, i, j) = m(k, j) * phi[i];
    return t;
}

void SdeConfig::validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ValidationError("sde: eps must be positive");
    if (record_every < 1) throw ValidationError("sde: record_every must be >= 1");
    if (n_traj < 1) throw ValidationError("sde: n_traj must be >= 1");
    if (grid.empty()) {
        if (n_steps < 1) throw ValidationError("sde: n_steps must be >= 1");
        if (!(lambda2_max > 1.0)) throw ValidationError("sde: lambda2_max must exceed 1");
    } else {
        ScaleGrid g{eps, grid};
        try {
            g.validate();
        } catch (const std::invalid_argument& e) {
            throw ValidationError(std::string("sde: ") + e.what());
        }
        if (grid.size() < 2) throw ValidationError("sde: grid needs at least two points");
    }
    const double xmax = grid.empty() ? lambda2_max : grid.back();
    if (scheme == SdeScheme::raw_shell && lnL_of(xmax, eps) > 300.0)
        throw ValidationError("sde: raw_shell scheme requires lnL <= 300");
    for (double s : snapshot_lambda2)
        if (!(s >= 1.0 && s <= xmax)) throw ValidationError("sde: snapshot lambda2 outside the grid");
}

std::vector<double> SdeConfig::lambda2_grid() const {
    if (!grid.empty()) return grid;
    return ScaleGrid::uniform(eps, lambda2_max, n_steps).lambda2;
}

const char* moment_name(int k) {
    static const char* names[kNumMoments] = {"E_phi2_resc", "E_phi4_resc", "E_F2",       "E_F4",      "E_det",
                                             "E_det2",      "E_mix",       "E_bullet_F", "E_bullet_adj"};
    if (k < 0 || k >= kNumMoments) throw std::out_of_range("moment_name");
    return names[k];
}

std::size_t MomentSeries::nearest(double x) const {
    if (lambda2.empty()) throw std::out_of_range("MomentSeries::nearest: empty series");
    std::size_t best = 0;
    for (std::size_t i = 1; i < lambda2.size(); ++i)
        if (std::abs(lambda2[i] - x) < std::abs(lambda2[best] - x)) best = i;
    return best;
}

double MomentSeries::interp(int k, double x) const {
    if (lambda2.empty() || x < lambda2.front() || x > lambda2.back())
        throw std::out_of_range("MomentSeries::interp: lambda2 outside series");
    auto it = std::upper_bound(lambda2.begin(), lambda2.end(), x);
    if (it == lambda2.end()) return mean.back()[k];
    const std::size_t i = static_cast<std::size_t>(it - lambda2.begin());
    const double t = (x - lambda2[i - 1]) / (lambda2[i] - lambda2[i - 1]);
    return (1.0 - t) * mean[i - 1][k] + t * mean[i][k];
}

EnsembleResult run_ensemble(const SdeConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<double> x = cfg.lambda2_grid();
    const std::size_t n = x.size() - 1;
    const double eps = cfg.eps;
    const bool scaled = cfg.scheme == SdeScheme::scaled;

    std::vector<std::size_t> rec_of(n + 1, SIZE_MAX);
    std::vector<double> rec_x;
    for (std::size_t i = 0; i <= n; ++i)
        if (i % cfg.record_every == 0 || i == n) {
            rec_of[i] = rec_x.size();
            rec_x.push_back(x[i]);
        }
    const std::size_t n_rec = rec_x.size();

    EnsembleResult res;
    std::vector<std::size_t> snap_of(n + 1, SIZE_MAX);
    for (double s : cfg.snapshot_lambda2) {
        std::size_t best = 0;
        for (std::size_t i = 1; i <= n; ++i)
            if (std::abs(x[i] - s) < std::abs(x[best] - s)) best = i;
        Snapshot sn;
        sn.lambda2 = x[best];
        sn.F2.assign(cfg.n_traj, 0.0);
        sn.det.assign(cfg.n_traj, 0.0);
        snap_of[best] = res.snapshots.size();
        res.snapshots.push_back(std::move(sn));
    }

    std::vector<StepFactor> factors;
    std::vector<DriverSampler> samplers;
    Eigen::Matrix3d tsqrt = Eigen::Matrix3d::Zero();
    if (scaled) {
        const Unit u = unit_blocks(eps, cfg.zero_c02);
        tsqrt = u.tsqrt;
        factors.reserve(n);
        for (std::size_t i = 0; i < n; ++i) factors.push_back(make_factor(u, x[i], x[i + 1], eps));
    } else {
        samplers.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            DriverCovariance c = shell_cov(x[i], x[i + 1], eps, false);
            if (cfg.zero_c02)
                for (int a = 0; a < 2; ++a)
                    for (int q = drv::kHess; q < drv::kDim; ++q) c(a, q) = c(q, a) = 0.0;
            samplers.emplace_back(c, 1.0);
        }
    }

    const std::uint64_t key = derive_seed(cfg.seed, "proxy-sde");
    const std::size_t n_blocks = (cfg.n_traj + kBlock - 1) / kBlock;
    OrderedReducer reducer(n_rec * kNumMoments);

    parallel_for(n_blocks, cfg.threads, [&](std::size_t b) {
        const std::size_t lo = b * kBlock, hi = std::min(cfg.n_traj, lo + kBlock);
        const std::size_t m = hi - lo;
        std::vector<NormalStream> rng;
        rng.reserve(m);
        for (std::size_t t = lo; t < hi; ++t) rng.emplace_back(key, t);
        std::vector<TanVec> phi(m);
        std::vector<Endo2> F(m, Endo2::identity());
        std::vector<std::array<double, kNumMoments>> obs(m);

        auto stats = std::make_unique<Stats>(n_rec * kNumMoments);
        stats->n = static_cast<double>(m);
        auto record = [&](std::size_t i) {
            const double inv_L = scaled ? 1.0 : std::exp(-lnL_of(x[i], eps));
            for (std::size_t t = 0; t < m; ++t) {
                const TanVec p{{phi[t][0] * inv_L, phi[t][1] * inv_L}};
                obs[t] = observe(p, F[t]);
            }
            const std::size_t r = rec_of[i];
            for (int k = 0; k < kNumMoments; ++k) {
                double s = 0.0;
                for (std::size_t t = 0; t < m; ++t) s += obs[t][k];
                const double mu = s / static_cast<double>(m);
                double q = 0.0;
                for (std::size_t t = 0; t < m; ++t) q += (obs[t][k] - mu) * (obs[t][k] - mu);
                stats->mean[r * kNumMoments + k] = mu;
                stats->m2[r * kNumMoments + k] = q;
            }
        };
        auto snapshot = [&](std::size_t i) {
            Snapshot& sn = res.snapshots[snap_of[i]];
            for (std::size_t t = 0; t < m; ++t) {
                sn.F2[lo + t] = F[t].frob2();
                sn.det[lo + t] = F[t].det();
            }
        };

        record(0);
        if (snap_of[0] != SIZE_MAX) snapshot(0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t t = 0; t < m; ++t) {
                if (scaled) {
                    apply(phi[t], F[t], draw(factors[i], tsqrt, rng[t]), cfg.mode);
                    if (!finite(phi[t], F[t])) report_nonfinite(x[i]);
                } else {
                    ProxyState s{phi[t], F[t], x[i]};
                    s = step(s, samplers[i].draw(rng[t]), cfg.mode);
                    phi[t] = s.phi;
                    F[t] = s.F;
                }
            }
            if (rec_of[i + 1] != SIZE_MAX) record(i + 1);
            if (snap_of[i + 1] != SIZE_MAX) snapshot(i + 1);
        }
        reducer.submit(b, std::move(stats));
    });

    const Stats& tot = reducer.total();
    MomentSeries& ms = res.series;
    ms.eps = eps;
    ms.n_traj = cfg.n_traj;
    ms.lambda2 = rec_x;
    ms.mean.resize(n_rec);
    ms.se.resize(n_rec);
    const double N = tot.n;
    for (std::size_t r = 0; r < n_rec; ++r)
        for (int k = 0; k < kNumMoments; ++k) {
            ms.mean[r][k] = tot.mean[r * kNumMoments + k];
            ms.se[r][k] = N > 1.0 ? std::sqrt(tot.m2[r * kNumMoments + k] / (N - 1.0) / N) : 0.0;
        }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

double truncated_second_moment(const std::vector<double>& F2, double rhat) {
    if (F2.empty()) throw ValidationError("truncated_second_moment: empty sample set");
    if (!(rhat > 0.0)) throw ValidationError("truncated_second_moment: rhat must be positive");
    const double mean = std::accumulate(F2.begin(), F2.end(), 0.0) / static_cast<double>(F2.size());
    const double cut = rhat * mean;
    double kept = 0.0;
    for (double v : F2)
        if (v <= cut) kept += v;
    return kept / static_cast<double>(F2.size()) / mean;
}

Histogram histogram(const std::vector<double>& F2, std::size_t bins) {
    if (F2.empty()) throw ValidationError("histogram: empty sample set");
    if (bins < 1) throw ValidationError("histogram: bins must be >= 1");
    const double N = static_cast<double>(F2.size());
    const double mean = std::accumulate(F2.begin(), F2.end(), 0.0) / N;
    std::vector<double> r(F2.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = F2[i] / mean;
    const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
    double lo = *mn, hi = *mx;
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
        lo -= 0.5;
        hi += 0.5;
        bins = 1;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + w * static_cast<double>(i);
    h.edges.back() = hi;
    std::vector<double> count(bins, 0.0);
    for (double v : r) {
        auto j = static_cast<std::size_t>((v - lo) / w);
        count[std::min(j, bins - 1)] += 1.0;
    }
    h.density.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) h.density[i] = count[i] / (N * (h.edges[i + 1] - h.edges[i]));
    const std::size_t mid = r.size() / 2;
    std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(mid), r.end());
    double med = r[mid];
    if (r.size() % 2 == 0) med = 0.5 * (med + *std::max_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(mid)));
    h.median_ratio = med;
    return h;
}

RefinementStudy refinement_study(const SdeConfig& cfg) {
    cfg.validate();
    if (!cfg.grid.empty()) throw ValidationError("refinement_study: uses the uniform grid");
    const std::size_t nf = 4 * cfg.n_steps;
    const auto x = ScaleGrid::uniform(cfg.eps, cfg.lambda2_max, nf).lambda2;
    const Unit u = unit_blocks(cfg.eps, cfg.zero_c02);
    std::vector<StepFactor> factors;
    factors.reserve(nf);
    for (std::size_t i = 0; i < nf; ++i) factors.push_back(make_factor(u, x[i], x[i + 1], cfg.eps));

    const std::uint64_t key = derive_seed(cfg.seed, "proxy-sde-refine");
    std::vector<std::array<double, 6>> out(cfg.n_traj);  // (F2, det) per level
    parallel_for(cfg.n_traj, cfg.threads, [&](std::size_t t) {
        NormalStream rng(key, t);
        TanVec phi[3];
        Endo2 F[3] = {Endo2::identity(), Endo2::identity(), Endo2::identity()};
        Drivers pend[2];
        for (std::size_t i = 0; i < nf; ++i) {
            const Drivers d = draw(factors[i], u.tsqrt, rng);
            apply(phi[2], F[2], d, cfg.mode);
            if (i % 2 == 0) {
                pend[1] = d;
            } else {
                const Drivers d2 = combine(pend[1], d);
                apply(phi[1], F[1], d2, cfg.mode);
                if (i % 4 == 1) {
                    pend[0] = d2;
                } else {
                    apply(phi[0], F[0], combine(pend[0], d2), cfg.mode);
                }
            }
        }
        for (int l = 0; l < 3; ++l) {
            if (!finite(phi[l], F[l])) report_nonfinite(cfg.lambda2_max);
            out[t][2 * l] = F[l].frob2();
            out[t][2 * l + 1] = F[l].det();
        }
    });

    RefinementStudy rs;
    const double N = static_cast<double>(cfg.n_traj);
    for (int l = 0; l < 3; ++l) {
        double s = 0.0, sd = 0.0;
        for (const auto& o : out) {
            s += o[2 * l];
            sd += o[2 * l + 1];
        }
        const double mf = s / N, md = sd / N;
        double qf = 0.0, qd = 0.0;
        for (const auto& o : out) {
            qf += (o[2 * l] - mf) * (o[2 * l] - mf);
            qd += (o[2 * l + 1] - md) * (o[2 * l + 1] - md);
        }
        rs.F2[l] = mf;
        rs.F2_se[l] = std::sqrt(qf / (N - 1.0) / N);
        rs.var_det[l] = qd / (N - 1.0);
    }
    rs.richardson_F2 = (rs.F2[0] - rs.F2[1]) / (rs.F2[1] - rs.F2[2]);
    rs.var_det_ratio = rs.var_det[0] / rs.var_det[1];
    return rs;
}

}  // namespace critdiff
