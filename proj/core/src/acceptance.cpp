#include "critdiff/acceptance.hpp"

#include "critdiff/corrector.hpp"
#include "critdiff/errors.hpp"
#include "critdiff/field_sim.hpp"
#include "critdiff/kolmogorov_tail.hpp"
#include "critdiff/moment_odes.hpp"
#include "critdiff/particle.hpp"
#include "critdiff/proxy_sde.hpp"
#include "critdiff/rng.hpp"
#include "critdiff/shell_cov.hpp"
#include "critdiff/tensor2d.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

namespace critdiff {

namespace {

Check le(std::string name, double v, double t) { return {std::move(name), v, t, "<=", 0.0, v <= t}; }
Check ge(std::string name, double v, double t) { return {std::move(name), v, t, ">=", 0.0, v >= t}; }
Check in(std::string name, double v, double lo, double hi) { return {std::move(name), v, lo, "in", hi, v >= lo && v <= hi}; }

std::uint64_t seed_for(const AcceptanceConfig& cfg, int id) {
    return derive_seed(cfg.seed, "acceptance", static_cast<std::uint64_t>(id));
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// ---- 1: algebra -------------------------------------------------------------

void algebra(const AcceptanceConfig& cfg, CriterionResult& r) {
    constexpr double diamond_diag[4] = {0.5, 0.5, 1.0, 0.0};
    constexpr double bullet_diag[6] = {0.5, 0.5, 0.5, 0.5, 0.0, 0.0};
    double dd = 0.0, bd = 0.0;
    for (int m = 1; m <= 4; ++m)
        for (int n = 1; n <= 4; ++n)
            dd = std::max(dd, std::abs(diamond(diamond_basis(m), diamond_basis(n)) - (m == n ? diamond_diag[m - 1] : 0.0)));
    for (int m = 1; m <= 6; ++m)
        for (int n = 1; n <= 6; ++n)
            bd = std::max(bd, std::abs(bullet(bullet_basis(m), bullet_basis(n)) - (m == n ? bullet_diag[m - 1] : 0.0)));
    r.checks.push_back(le("diamond_table_dev", dd, 1e-12));
    r.checks.push_back(le("bullet_table_dev", bd, 1e-12));
    const IdentityReport rep = contract_identities(10000, seed_for(cfg, 1));
    r.checks.push_back(le("frame_endo", rep.max_dev_frame_endo, 1e-12));
    r.checks.push_back(le("frame_tangent", rep.max_dev_frame_tangent, 1e-12));
    r.checks.push_back(le("rank_one", rep.max_dev_rank_one, 1e-12));
    r.checks.push_back(le("frame_covector", rep.max_dev_frame_covector, 1e-12));
    r.checks.push_back(le("frame_tri", rep.max_dev_frame_tri, 1e-12));
    r.checks.push_back(le("det_null", rep.max_dev_det_null, 1e-12));
    r.checks.push_back(le("det_null_tri", rep.max_dev_det_null_tri, 1e-12));
    r.checks.push_back(le("trace_pair", rep.max_dev_trace_pair, 1e-12));
    r.checks.push_back(le("negative_self_value", rep.max_negative, 1e-12));
}

// ---- 2: covariance ------------------------------------------------------------

double c02_annulus(int c, int a, int b, int d, double eps, double k_in, double k_out) {
    constexpr int n_theta = 256;
    auto inner = [&](double kr) {
        double s = 0.0;
        for (int i = 0; i < n_theta; ++i) {
            const double t = 2.0 * std::numbers::pi * (i + 0.5) / n_theta;
            const double k[2] = {kr * std::cos(t), kr * std::sin(t)};
            const double jk[2] = {-k[1], k[0]};
            const double k2 = kr * kr;
            s += -eps * eps * k[a] * k[b] * jk[c] * jk[d] / (k2 * k2 * k2);
        }
        return s / n_theta * kr;
    };
    const double integral = boost::math::quadrature::gauss<double, 30>::integrate(inner, k_in, k_out);
    return integral / (eps * eps * std::log(k_out / k_in));
}

void covariance(const AcceptanceConfig& cfg, CriterionResult& r) {
    NormalStream rng(seed_for(cfg, 2), 0);
    double form_dev = 0.0;
    for (auto [x, eps] : {std::pair{1.6, 0.5}, std::pair{1.3, 0.7}, std::pair{1.0, 0.3}}) {
        const DriverCovariance c = build_cov(x, eps);
        const double L2 = std::exp(2.0 * lnL_of(x, eps));
        for (int s = 0; s < 200; ++s) {
            const Endo2 g = Endo2::from(rng(), rng(), rng(), rng());
            const Endo2 h = Endo2::from(rng(), rng(), rng(), rng());
            const double dref = diamond(g, h) / x;
            form_dev = std::max(form_dev, std::abs(c.grad_form(g, h) - dref) / std::max(1.0, std::abs(dref)));
            TriTensor t, u;
            for (auto& v : t.t) v = rng();
            for (auto& v : u.t) v = rng();
            const double bref = bullet(t, u) / x;
            form_dev = std::max(form_dev, std::abs(c.hess_form(t, u) * L2 - bref) / std::max(1.0, std::abs(bref)));
        }
    }
    r.checks.push_back(le("quadratic_form_dev", form_dev, 1e-12));

    const DriverCovariance c = build_cov(1.0, 0.3);
    double c02 = 0.0;
    for (int cc = 0; cc < 2; ++cc)
        for (int q = 0; q < 6; ++q) {
            const int d = q / 3, rr = q % 3;
            const int a = rr == 2 ? 1 : 0, b = rr == 0 ? 0 : 1;
            const double ref = c02_annulus(cc, a, b, d, 0.3, 1.0 - 1e-6, 1.0);
            c02 = std::max(c02, std::abs(c(drv::kPhi + cc, drv::kHess + q) - ref) / std::max(1.0, std::abs(ref)));
        }
    r.checks.push_back(le("c02_oracle_dev", c02, 1e-8));

    double worst = 0.0;
    int factorized = 1;
    for (double x : {1.0, 1.3, 2.0, 4.0}) {
        const DriverCovariance s = build_cov(x, 0.4, true);
        const auto ev = s.eigenvalues();
        worst = std::min(worst, ev.front());
        try {
            DriverSampler sampler(s, 0.01);
        } catch (const std::exception&) {
            factorized = 0;
        }
    }
    r.checks.push_back(ge("min_eigenvalue", worst, -1e-12));
    r.checks.push_back(ge("factorizes", factorized, 1.0));
}

// ---- 3: MC vs ODE -------------------------------------------------------------

void mc_vs_ode(const AcceptanceConfig& cfg, CriterionResult& r) {
    SdeConfig c;
    c.eps = 0.2;
    c.lambda2_max = 4.0;
    c.n_steps = 400;
    c.n_traj = 100000;
    c.record_every = 5;
    c.seed = seed_for(cfg, 3);
    c.threads = cfg.threads;
    const MomentSeries s = run_ensemble(c).series;
    const auto ode = integrate(c.eps, c.lambda2_max, ClosureSource::mc(s));
    if (ode.size() != s.lambda2.size()) throw NumericError("acceptance: ODE output does not match the MC grid");
    const std::pair<int, double MomentVector::*> cols[] = {
        {kPhi2, &MomentVector::a_hat}, {kF2, &MomentVector::A}, {kF4, &MomentVector::B}, {kDet2, &MomentVector::C}};
    const std::size_t stride = (s.lambda2.size() - 1) / 8;
    for (auto [k, field] : cols) {
        double z = 0.0;
        for (std::size_t j = 1; j <= 8; ++j) {
            const std::size_t i = j * stride;
            z = std::max(z, std::abs(s.mean[i][k] - ode[i].*field) / s.se[i][k]);
        }
        r.checks.push_back(le(std::string(moment_name(k)) + "_max_z", z, 3.0));
    }
    double zd = 0.0;
    for (std::size_t i = 1; i < s.lambda2.size(); ++i) zd = std::max(zd, std::abs(s.mean[i][kDet] - 1.0) / s.se[i][kDet]);
    r.checks.push_back(le("det_max_z", zd, 3.0));
}

// ---- 4: exact-integral asymptotics ---------------------------------------------

void exact_asymptotics(const AcceptanceConfig&, CriterionResult& r) {
    const double eps = 0.05, x = 1.0 + eps * eps * 100.0;
    const Asymptotics as = asymptotics(x, eps);
    r.checks.push_back(in("a_ratio", exact_a_hat(x, eps) / as.a_hat, 0.98, 1.02));
    r.checks.push_back(in("b_ratio", exact_b_hat(x, eps) / as.b_hat, 0.95, 1.05));
    r.checks.push_back(in("A_ratio", exact_A(x, eps) / as.A, 0.99, 1.01));
}

// ---- 5, 6: shared eps = 0.1 ensemble ---------------------------------------------

struct Eps01 {
    MomentSeries series;
    std::vector<double> det;
};

const Eps01& eps01_ensemble(const AcceptanceConfig& cfg) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, unsigned>, std::unique_ptr<Eps01>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto& slot = cache[{cfg.seed, cfg.threads}];
    if (!slot) {
        SdeConfig c;
        c.eps = 0.1;
        c.lambda2_max = 25.0;
        c.n_steps = 2400;
        c.n_traj = 100000;
        c.record_every = 24;
        c.snapshot_lambda2 = {25.0};
        c.seed = seed_for(cfg, 5);
        c.threads = cfg.threads;
        auto res = run_ensemble(c);
        slot = std::make_unique<Eps01>();
        slot->series = std::move(res.series);
        slot->det = std::move(res.snapshots.at(0).det);
    }
    return *slot;
}

void fourth_moment(const AcceptanceConfig& cfg, CriterionResult& r) {
    const Eps01& e = eps01_ensemble(cfg);
    const double eps = 0.1;
    const auto k = envelope_constants(eps);
    const auto ode = integrate(eps, 25.0, ClosureSource::mc(e.series));
    double worst = 0.0;
    for (const auto& m : ode) {
        if (m.x <= 1.0) continue;
        const double dev = std::abs((1.5 * m.B - 2.0 * m.C) / std::pow(m.x, 1.5) - 4.0);
        worst = std::max(worst, dev / (2.0 * k.fourth_moment_bound(m.x)));
    }
    r.checks.push_back(le("combination_dev_over_bound", worst, 1.0));
    const double x = ode.back().x;
    r.checks.push_back(in("B_over_asymptote", ode.back().B / (8.0 / 3.0 * std::pow(x, 1.5) + 4.0 / 3.0), 0.9, 1.1));
}

void det_concentration(const AcceptanceConfig& cfg, CriterionResult& r) {
    const Eps01& e = eps01_ensemble(cfg);
    double s = 0.0;
    for (double d : e.det) s += (d - 1.0) * (d - 1.0);
    const double v = s / static_cast<double>(e.det.size());
    const double eps = 0.1;
    r.checks.push_back(le("E_det_minus_1_sq", v, 2.0 * envelope_constants(eps).kappa_pp * eps * eps));
}

// ---- 7: non-equi-integrability ---------------------------------------------------

void non_equi_integrability(const AcceptanceConfig& cfg, CriterionResult& r) {
    SdeConfig c;
    c.eps = 0.2;
    c.lambda2_max = 25.0;
    c.n_steps = 1200;
    c.n_traj = 100000;
    c.record_every = 100;
    c.snapshot_lambda2 = {9.0, 16.0, 25.0};
    c.seed = seed_for(cfg, 7);
    c.threads = cfg.threads;
    const auto res = run_ensemble(c);
    std::vector<double> ratio;
    for (const auto& snap : res.snapshots)
        ratio.push_back(truncated_second_moment(snap.F2, regime_rhat(snap.lambda2, 0.1)));
    r.checks.push_back(le("truncated_ratio_25", ratio.back(), 0.3));
    r.checks.push_back(le("ratio_16_minus_9", ratio[1] - ratio[0], 0.0));
    r.checks.push_back(le("ratio_25_minus_16", ratio[2] - ratio[1], 0.0));
    const auto& F2 = res.snapshots.back().F2;
    const TailReport t = verify_tail(F2, c.eps, tail_config_for(25.0, regime_rhat(25.0, 0.1), mean_of(F2)));
    r.checks.push_back(le("lhs_minus_E_zeta", t.lhs - t.e_zeta, 0.0));
    r.checks.push_back(le("E_zeta_minus_rhs", t.e_zeta - t.rhs, 0.0));
    r.checks.push_back(ge("chain_holds", t.chain_holds ? 1.0 : 0.0, 1.0));
}

// ---- 8: Kolmogorov solver ---------------------------------------------------------

void kolmogorov(const AcceptanceConfig&, CriterionResult& r) {
    TailConfig cfg;
    cfg.tau = 5.0;
    cfg.sigma_hat = -1.0;
    cfg.resolution = 4000;
    const TailProfile p = terminal_zeta(cfg);
    const TailProfile two = evolve(evolve(p, 3.0), 2.0), one = evolve(p, 5.0);
    double semi = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i) semi = std::max(semi, std::abs(two.v[i] - one.v[i]));
    r.checks.push_back(le("semigroup_dev", semi, 1e-9));

    double excess = -1.0;
    for (double dtau : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0})
        for (double s = -8.0; s <= 4.0; s += 0.05)
            excess = std::max(excess, zeta_hat(-1.0, dtau, s).v - phi_bound(-1.0, dtau, s));
    r.checks.push_back(le("zeta_minus_phi_bound", excess, 1e-12));

    std::vector<double> scaled;
    for (double tau : {4.0, 16.0, 64.0, 144.0, 400.0}) {
        TailConfig c;
        c.tau = tau;
        c.sigma_hat = tau / 4.0 - 2.0 * std::sqrt(tau);
        c.resolution = 1000;
        scaled.push_back(bound_terms(c).I1 * std::sqrt(tau));
    }
    const auto [mn, mx] = std::minmax_element(scaled.begin(), scaled.end());
    r.checks.push_back(le("I1_sqrt_tau_max", *mx, 6.0));
    r.checks.push_back(le("I1_sqrt_tau_max_over_min", *mx / *mn, 2.0));
}

// ---- 9: field mode ------------------------------------------------------------------

void field_mode(const AcceptanceConfig& cfg, CriterionResult& r) {
    FieldRunConfig fc;
    fc.n = 256;
    fc.L_max = 16.0;
    fc.eps = std::sqrt(1.5 / std::log(16.0));
    fc.n_samples = 40;
    fc.seed = seed_for(cfg, 9);
    fc.threads = cfg.threads;
    const FieldRunResult field = run_fields(fc);
    const QvReport q = empirical_qv(field);
    r.checks.push_back(le("var_psi_rel_dev", std::abs(q.var_psi.value / q.var_psi_expected - 1.0), 0.05));
    r.checks.push_back(le("psi_qv_rel_dev", std::abs(q.psi_qv.value / q.psi_qv_expected - 1.0), 0.05));
    r.checks.push_back(le("constraint_residual_max", *std::max_element(field.constraint_residual.begin(), field.constraint_residual.end()), 1e-10));

    SdeConfig pc;
    pc.eps = fc.eps;
    pc.scheme = SdeScheme::raw_shell;
    pc.grid = fc.lambda2_grid();
    pc.lambda2_max = pc.grid.back();
    pc.n_traj = 100000;
    pc.seed = derive_seed(fc.seed, "point");
    pc.threads = cfg.threads;
    const MomentSeries point = run_ensemble(pc).series;
    const auto& f = field.series;
    const std::size_t i = f.lambda2.size() - 1;
    double z = 0.0;
    for (int k : {kPhi2, kPhi4, kF2, kF4, kDet, kDet2})
        z = std::max(z, std::abs(f.mean[i][k] - point.mean[i][k]) / std::hypot(f.se[i][k], point.se[i][k]));
    r.checks.push_back(le("field_vs_point_max_z", z, 3.0));
}

// ---- 10: corrector --------------------------------------------------------------------

void corrector(const AcceptanceConfig& cfg, CriterionResult& r) {
    CorrectorConfig c;
    c.n = 512;
    c.eps = 0.05;
    c.L = 32.0;
    c.n_samples = 20;
    c.seed = seed_for(cfg, 10);
    c.threads = cfg.threads;
    const CorrectorEnsemble e = run_correctors(c);
    double min_lambda = 1e300, f2 = 0.0, det = 0.0, res = 0.0;
    for (const auto& s : e.samples) {
        min_lambda = std::min({min_lambda, s.lambda1, s.lambda2});
        f2 = std::max(f2, std::abs(s.stats.E_F2 - 2.0 * s.stats.lambda));
        det = std::max(det, std::abs(s.stats.E_det - 1.0));
        res = std::max(res, s.residual);
    }
    r.checks.push_back(ge("min_lambda", min_lambda, 1.0));
    r.checks.push_back(le("E_F2_minus_2lambda", f2, 1e-8));
    r.checks.push_back(le("mean_det_minus_1", det, 1e-8));
    r.checks.push_back(le("max_residual", res, c.solver.tol));
    r.checks.push_back(in("grad2_over_first_order", e.grad2.value / e.first_order_expected, 0.8, 1.2));
    r.checks.push_back(in("oracle_over_first_order", e.grad2_first_order.value / e.first_order_expected, 0.8, 1.2));
}

// ---- 11: particle -----------------------------------------------------------------------

void particle(const AcceptanceConfig& cfg, CriterionResult& r) {
    const std::uint64_t seed = seed_for(cfg, 11);
    PathOptions zo;
    zo.n_paths = 1000000;
    zo.times = {2.0, 4.0, 6.0, 8.0, 10.0};
    zo.seed = derive_seed(seed, "brownian");
    zo.threads = cfg.threads;
    const MsdEstimate z = euler_maruyama(DriftField::zero(TorusGrid{64, 64.0}), zo);
    double slope_dev = 0.0;
    for (std::size_t j = 0; j < z.times.size(); ++j)
        for (std::size_t c = 0; c < 2; ++c) slope_dev = std::max(slope_dev, std::abs(z.msd[c][j] / z.times[j] / 2.0 - 1.0));
    r.checks.push_back(le("zero_drift_slope_rel_dev", slope_dev, 0.01));

    ParticleConfig pc;
    pc.n = 2048;
    pc.box_len = 2.0 * 2.0 * std::numbers::pi * 64.0;
    pc.eps = 0.4;
    pc.L = 64.0;
    pc.seed = derive_seed(seed, "field");
    pc.paths.n_paths = 10000;
    pc.paths.times = {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0};
    pc.paths.seed = derive_seed(seed, "drift-paths");
    pc.paths.threads = cfg.threads;
    const ParticleRun run = run_particles(pc);
    double zmin = 1e300;
    for (std::size_t j = 0; j < run.msd.times.size(); ++j) {
        const double t2 = 2.0 * run.msd.times[j];
        zmin = std::min(zmin, (run.msd.msd_mean[j] / t2 - 1.0) / (run.msd.se_mean[j] / t2));
    }
    r.checks.push_back(ge("msd_over_2t_min_z", zmin, -3.0));
    const double dof = static_cast<double>(run.msd.occupancy_dof);
    r.checks.push_back(le("occupancy_chi2_dev", std::abs(run.msd.occupancy_chi2 - dof) / std::sqrt(2.0 * dof), 5.0));

    pc.paths.n_paths = 100000;
    pc.paths.times = {100.0, 200.0};
    pc.paths.keep_paths = true;
    pc.paths.seed = derive_seed(seed, "ratio-paths");
    pc.L = 16.0;
    const ParticleRun small = run_particles(pc);
    pc.L = 64.0;
    const ParticleRun large = run_particles(pc);
    const RatioEstimate ratio = msd_growth_ratio(small.msd, large.msd, 16.0);
    r.checks.push_back(ge("L_ratio_z", (ratio.value - 1.0) / ratio.se, -3.0));
    r.checks.push_back(ge("L_ratio", ratio.value, 1.0 - 3.0 * ratio.se));
}

struct Entry {
    const char* name;
    double limit;
    void (*fn)(const AcceptanceConfig&, CriterionResult&);
};

const Entry kEntries[kNumCriteria] = {
    {"algebra suite", 1.0, algebra},
    {"covariance consistency", 1.0, covariance},
    {"MC vs ODE", 120.0, mc_vs_ode},
    {"exact-integral asymptotics", 1.0, exact_asymptotics},
    {"fourth-moment asymptotic", 300.0, fourth_moment},
    {"determinant concentration", 300.0, det_concentration},
    {"non-equi-integrability", 600.0, non_equi_integrability},
    {"Kolmogorov solver", 30.0, kolmogorov},
    {"field-mode checks", 300.0, field_mode},
    {"corrector", 600.0, corrector},
    {"particle", 600.0, particle},
};

}  // namespace

bool CriterionResult::numeric_pass() const {
    if (checks.empty()) return false;
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const char* criterion_name(int id) {
    if (id < 1 || id > kNumCriteria) throw ValidationError("acceptance: criterion id must lie in [1, 11]");
    return kEntries[id - 1].name;
}

CriterionResult run_criterion(int id, const AcceptanceConfig& cfg) {
    CriterionResult r;
    r.id = id;
    r.name = criterion_name(id);
    r.time_limit = kEntries[id - 1].limit;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        kEntries[id - 1].fn(cfg, r);
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceConfig& cfg) {
    std::vector<CriterionResult> out;
    for (int id = 1; id <= kNumCriteria; ++id) {
        if (!cfg.only.empty() && std::find(cfg.only.begin(), cfg.only.end(), id) == cfg.only.end()) continue;
        out.push_back(run_criterion(id, cfg));
    }
    return out;
}

std::string format_line(const CriterionResult& r) {
    std::ostringstream os;
    os << (r.pass() ? "PASS" : "FAIL") << " [" << std::setw(2) << r.id << "] " << r.name << " (" << std::fixed
       << std::setprecision(1) << r.seconds << " s, limit " << r.time_limit << " s)";
    os << std::defaultfloat << std::setprecision(4);
    if (!r.error.empty()) os << " error: " << r.error;
    for (const auto& c : r.checks) {
        os << (c.pass ? "  " : "  !") << c.name << '=' << c.value << ' ';
        if (c.relation == "in")
            os << "in [" << c.threshold << ", " << c.upper << ']';
        else
            os << c.relation << ' ' << c.threshold;
    }
    return os.str();
}

}  // namespace critdiff
