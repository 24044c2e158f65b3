#include "cli.hpp"

#include "output.hpp"
#include "run_config.hpp"

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

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <numbers>
#include <ostream>

namespace critdiff::cli {

namespace {

using nlohmann::json;

struct Context {
    std::string command;
    RunConfig cfg;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string out_dir;
    std::chrono::steady_clock::time_point start;
    std::ostream* out = nullptr;

    std::uint64_t seed_for(const char* module) const { return derive_seed(seed, module); }

    json meta(json extra = json::object()) const {
        json m = {{"subcommand", command},
                  {"experiment", cfg.text("run", "experiment")},
                  {"config_hash", cfg.hash()},
                  {"config", cfg.serialize()},
                  {"seed", seed},
                  {"threads", threads},
                  {"critdiff_version", "0.1.0"},
                  {"compiler", __VERSION__},
                  {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                  {"wall_seconds",
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
        for (auto& [k, v] : extra.items()) m[k] = v;
        return m;
    }

    void emit(const std::string& name, const Table& t, json extra = json::object()) const {
        *out << emit_table(out_dir, name, t, meta(std::move(extra))) << '\n';
    }
};

std::vector<std::string> series_header() {
    std::vector<std::string> h{"lambda2", "lnL"};
    for (int k = 0; k < kNumMoments; ++k) h.push_back(moment_name(k));
    for (int k = 0; k < kNumMoments; ++k) h.push_back(std::string("se_") + moment_name(k));
    return h;
}

Table series_table(const MomentSeries& s) {
    Table t{series_header(), {}};
    for (std::size_t i = 0; i < s.lambda2.size(); ++i) {
        std::vector<double> row{s.lambda2[i], s.lnL(i)};
        row.insert(row.end(), s.mean[i].begin(), s.mean[i].end());
        row.insert(row.end(), s.se[i].begin(), s.se[i].end());
        t.add(std::move(row));
    }
    return t;
}

SdeMode sde_mode(const std::string& v) { return v == "exp" ? SdeMode::exp : SdeMode::full; }

double interp(const std::vector<double>& x, const std::vector<double>& y, double at) {
    auto it = std::upper_bound(x.begin(), x.end(), at);
    if (it == x.begin()) return y.front();
    if (it == x.end()) return y.back();
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    const double w = (at - x[j - 1]) / (x[j] - x[j - 1]);
    return (1.0 - w) * y[j - 1] + w * y[j];
}

// ---- subcommands -----------------------------------------------------------

int qv_check(const Context& c) {
    const IdentityReport rep =
        contract_identities(static_cast<std::size_t>(c.cfg.integer("qv", "samples")), c.seed_for("qv-check"));
    Table ids{{"samples", "frame_endo", "frame_tangent", "rank_one", "frame_covector", "frame_tri", "det_null",
               "det_null_tri", "trace_pair", "max_negative"},
              {}};
    ids.add({static_cast<double>(rep.samples), rep.max_dev_frame_endo, rep.max_dev_frame_tangent, rep.max_dev_rank_one,
             rep.max_dev_frame_covector, rep.max_dev_frame_tri, rep.max_dev_det_null, rep.max_dev_det_null_tri,
             rep.max_dev_trace_pair, rep.max_negative});
    c.emit("qv_identities", ids);

    Table cov{{"x"}, {}};
    for (int j = 0; j < 12; ++j) cov.header.push_back("eigenvalue_" + std::to_string(j));
    for (double x : c.cfg.reals("qv", "x")) {
        const auto ev = build_cov(x, c.cfg.real("qv", "eps"), true).eigenvalues();
        std::vector<double> row{x};
        row.insert(row.end(), ev.begin(), ev.end());
        cov.add(std::move(row));
    }
    c.emit("qv_covariance", cov);

    if (c.cfg.boolean("qv", "field")) {
        FieldRunConfig fc;
        fc.eps = c.cfg.real("field", "eps");
        fc.n = static_cast<std::size_t>(c.cfg.integer("field", "n"));
        fc.L_max = c.cfg.real("field", "L_max");
        fc.box_len = c.cfg.real("field", "box_mult") * 2.0 * std::numbers::pi * fc.L_max;
        fc.per_octave = static_cast<int>(c.cfg.integer("field", "per_octave"));
        fc.n_samples = static_cast<std::size_t>(c.cfg.integer("field", "n_samples"));
        fc.seed = c.seed_for("qv-check-field");
        fc.threads = c.threads;
        const QvReport q = empirical_qv(run_fields(fc));
        Table t{{"psi_qv", "psi_qv_se", "psi_qv_expected", "derivative_ratio", "derivative_ratio_se", "dphi_ratio",
                 "dphi_ratio_se", "grad_ratio", "grad_ratio_se", "frame_tri", "frame_tri_se", "var_psi", "var_psi_se",
                 "var_psi_expected", "max_calibration_dev"},
                {}};
        t.add({q.psi_qv.value, q.psi_qv.se, q.psi_qv_expected, q.derivative_ratio.value, q.derivative_ratio.se,
               q.dphi_ratio.value, q.dphi_ratio.se, q.grad_ratio.value, q.grad_ratio.se, q.frame_tri.value,
               q.frame_tri.se, q.var_psi.value, q.var_psi.se, q.var_psi_expected, q.max_calibration_dev});
        c.emit("qv_field", t);
    }
    return 0;
}

SdeConfig sde_config(const Context& c) {
    SdeConfig s;
    s.eps = c.cfg.real("sde", "eps");
    s.lambda2_max = c.cfg.real("sde", "lambda2_max");
    s.n_steps = static_cast<std::size_t>(c.cfg.integer("sde", "n_steps"));
    s.n_traj = static_cast<std::size_t>(c.cfg.integer("sde", "n_traj"));
    s.mode = sde_mode(c.cfg.text("sde", "mode"));
    s.scheme = c.cfg.text("sde", "scheme") == "raw_shell" ? SdeScheme::raw_shell : SdeScheme::scaled;
    s.record_every = static_cast<std::size_t>(c.cfg.integer("sde", "record_every"));
    s.snapshot_lambda2 = c.cfg.reals("sde", "snapshot_lambda2");
    s.zero_c02 = c.cfg.boolean("sde", "zero_c02");
    s.seed = c.seed_for("sde-run");
    s.threads = c.threads;
    return s;
}

int sde_run(const Context& c) {
    const SdeConfig s = sde_config(c);
    s.validate();
    const EnsembleResult r = run_ensemble(s);
    c.emit("sde_moments", series_table(r.series), {{"n_traj", r.series.n_traj}});
    for (std::size_t j = 0; j < r.snapshots.size(); ++j) {
        Table t{{"F2", "det"}, {}};
        for (std::size_t i = 0; i < r.snapshots[j].F2.size(); ++i) t.add({r.snapshots[j].F2[i], r.snapshots[j].det[i]});
        c.emit("sde_snapshot_" + std::to_string(j), t, {{"lambda2", r.snapshots[j].lambda2}});
    }
    return 0;
}

int ode_run(const Context& c) {
    const double eps = c.cfg.real("ode", "eps"), x_end = c.cfg.real("ode", "x_end");
    if (!(x_end > 1.0)) throw ValidationError("ode-run: x_end must exceed 1 (got " + std::to_string(x_end) + ")");
    const auto n_points = static_cast<std::size_t>(c.cfg.integer("ode", "n_points"));
    OdeOptions opt;
    opt.rel_tol = c.cfg.real("ode", "rel_tol");
    const Envelope env = envelope_BC(eps, x_end, n_points);

    MomentSeries mc;
    std::vector<MomentVector> ode;
    const bool use_mc = c.cfg.text("ode", "closure") == "mc";
    if (use_mc) {
        SdeConfig s;
        s.eps = eps;
        s.lambda2_max = x_end;
        s.n_steps = static_cast<std::size_t>(c.cfg.integer("ode", "n_steps"));
        s.n_traj = static_cast<std::size_t>(c.cfg.integer("ode", "n_traj"));
        s.seed = c.seed_for("ode-run");
        s.threads = c.threads;
        mc = run_ensemble(s).series;
        ode = integrate(eps, x_end, ClosureSource::mc(mc), {}, opt);
    } else {
        ode = integrate(eps, x_end, ClosureSource::bound(), env.x, opt);
    }

    Table t{{"lambda2", "lnL", "E_phi2_resc", "E_phi4_resc", "E_F2", "E_F4", "E_det", "E_det2", "a_hat_hi",
             "b_hat_hi", "B_lo", "B_hi", "C_lo", "C_hi", "B_crude", "C_crude_dev"},
            {}};
    for (const auto& m : ode) {
        const double x = m.x;
        t.add({x, lnL_of(x, eps), m.a_hat, m.b_hat, m.A, m.B, m.D, m.C, interp(env.x, env.a_hat_hi, x),
               interp(env.x, env.b_hat_hi, x), interp(env.x, env.B_lo, x), interp(env.x, env.B_hi, x),
               interp(env.x, env.C_lo, x), interp(env.x, env.C_hi, x), interp(env.x, env.B_crude, x),
               interp(env.x, env.C_crude_dev, x)});
    }
    const EnvelopeConstants& k = env.k;
    c.emit("ode_moments", t,
           {{"closure", use_mc ? "mc" : "bound"},
            {"kappa", k.kappa},
            {"kappa_B", k.kappa_B},
            {"kappa_p", k.kappa_p},
            {"kappa_pp", k.kappa_pp},
            {"kappa_Y", k.kappa_Y}});
    if (use_mc) c.emit("ode_mc_moments", series_table(mc));
    return 0;
}

int tail_check(const Context& c) {
    TailConfig tc;
    tc.margin = c.cfg.real("tail", "margin");
    tc.resolution = static_cast<std::size_t>(c.cfg.integer("tail", "resolution"));
    tc.tau_slices = static_cast<std::size_t>(c.cfg.integer("tail", "tau_slices"));

    if (c.cfg.has("tail", "tau")) {
        tc.tau = c.cfg.real("tail", "tau");
        tc.sigma_hat = c.cfg.real("tail", "sigma_hat");
        tc.validate();
        const TailProfile p = terminal_zeta(tc);
        const std::vector<double> fractions{1.0, 0.75, 0.5, 0.25, 0.0};
        std::vector<TailProfile> slices;
        Table t{{"sigma"}, {}};
        for (double f : fractions) {
            const double dtau = (1.0 - f) * tc.tau;
            slices.push_back(dtau > 0.0 ? evolve(p, dtau) : p);
            char name[48];
            std::snprintf(name, sizeof name, "zeta_hat_tau_prime_%g", f * tc.tau);
            t.header.push_back(name);
        }
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            std::vector<double> row{p.sigma(i)};
            for (const auto& s : slices) row.push_back(s.v[i]);
            t.add(std::move(row));
        }
        c.emit("tail_profile", t);
        const BoundTerms b = bound_terms(tc);
        Table bt{{"tau", "sigma_hat", "zeta0", "I1", "I2", "I1_sqrt_tau"}, {}};
        bt.add({tc.tau, tc.sigma_hat, zeta_at_origin(tc), b.I1, b.I2, b.I1 * std::sqrt(tc.tau)});
        c.emit("tail_bounds", bt);
        return 0;
    }

    const double eps = c.cfg.real("tail", "eps"), lambda2 = c.cfg.real("tail", "lambda2");
    const auto n_traj = c.cfg.integer("tail", "n_traj");
    if (n_traj < 2) throw ValidationError("tail-check: n_traj must be >= 2 without tau (got " + std::to_string(n_traj) + ")");
    SdeConfig s;
    s.eps = eps;
    s.lambda2_max = lambda2;
    s.n_steps = static_cast<std::size_t>(c.cfg.integer("tail", "n_steps"));
    s.n_traj = static_cast<std::size_t>(n_traj);
    s.record_every = s.n_steps;
    s.snapshot_lambda2 = {lambda2};
    s.seed = c.seed_for("tail-check");
    s.threads = c.threads;
    const auto r = run_ensemble(s);
    const auto& F2 = r.snapshots.at(0).F2;
    double mean = 0.0;
    for (double v : F2) mean += v;
    mean /= static_cast<double>(F2.size());
    const double rhat = regime_rhat(lambda2, tc.margin);
    TailConfig vc = tail_config_for(lambda2, rhat, mean);
    vc.resolution = tc.resolution;
    vc.tau_slices = tc.tau_slices;
    vc.margin = tc.margin;
    const TailReport rep = verify_tail(F2, eps, vc);
    const double ratio = truncated_second_moment(F2, rhat);
    const double threshold = c.cfg.real("tail", "threshold");
    Table t{{"lambda2", "eps", "tau", "sigma_hat", "rhat", "lhs", "lhs_se", "e_zeta", "e_zeta_se", "zeta0", "I1", "I2",
             "c", "c_prime", "rhs", "truncated_ratio", "chain_holds", "ratio_below_threshold"},
            {}};
    t.add({rep.lambda2, rep.eps, rep.tau, rep.sigma_hat, rhat, rep.lhs, rep.lhs_se, rep.e_zeta, rep.e_zeta_se, rep.zeta0,
           rep.I1, rep.I2, rep.c, rep.c_prime, rep.rhs, ratio, rep.chain_holds ? 1.0 : 0.0,
           ratio <= threshold ? 1.0 : 0.0});
    c.emit("tail_report", t, {{"threshold", threshold}});
    return 0;
}

int field_run(const Context& c) {
    FieldRunConfig fc;
    fc.eps = c.cfg.real("field", "eps");
    fc.n = static_cast<std::size_t>(c.cfg.integer("field", "n"));
    fc.L_max = c.cfg.real("field", "L_max");
    fc.box_len = c.cfg.real("field", "box_mult") * 2.0 * std::numbers::pi * fc.L_max;
    fc.per_octave = static_cast<int>(c.cfg.integer("field", "per_octave"));
    fc.n_samples = static_cast<std::size_t>(c.cfg.integer("field", "n_samples"));
    fc.mode = sde_mode(c.cfg.text("field", "mode"));
    fc.seed = c.seed_for("field-run");
    fc.threads = c.threads;
    fc.validate();
    const FieldRunResult r = run_fields(fc);
    c.emit("field_moments", series_table(r.series));
    Table s{{"sample", "var_psi", "constraint_residual"}, {}};
    for (std::size_t i = 0; i < r.var_psi.size(); ++i)
        s.add({static_cast<double>(i), r.var_psi[i], r.constraint_residual[i]});
    c.emit("field_samples", s);
    const QvReport q = empirical_qv(r);
    Table qt{{"psi_qv", "psi_qv_se", "psi_qv_expected", "var_psi", "var_psi_se", "var_psi_expected"}, {}};
    qt.add({q.psi_qv.value, q.psi_qv.se, q.psi_qv_expected, q.var_psi.value, q.var_psi.se, q.var_psi_expected});
    c.emit("field_qv", qt);
    if (c.cfg.boolean("field", "snapshot")) {
        const std::string path = (std::filesystem::path(c.out_dir) / "field_state.bin").string();
        const std::string tmp = path + ".tmp";
        write_snapshot(tmp, r.final_state);
        std::filesystem::rename(tmp, path);
        *c.out << path << '\n';
    }
    return 0;
}

int corrector_run(const Context& c) {
    const auto r_schedule = c.cfg.reals("corrector", "r_schedule");
    std::vector<std::string> header{"eps", "L", "N", "lambda", "lambda_se", "E_F2", "E_F2_se", "E_absdet",
                                    "E_absdet_se", "E_det", "E_det_se", "grad2", "grad2_se", "grad2_first_order",
                                    "grad2_first_order_se", "first_order_expected"};
    for (double r : r_schedule) {
        char name[48];
        std::snprintf(name, sizeof name, "truncated_r%g", r);
        header.push_back(name);
        header.push_back(std::string(name) + "_se");
    }
    Table t{header, {}};
    Table per{{"L", "sample", "lambda1", "lambda2", "residual", "iterations", "used_fallback"}, {}};
    for (double L : c.cfg.reals("corrector", "L")) {
        CorrectorConfig cc;
        cc.eps = c.cfg.real("corrector", "eps");
        cc.n = static_cast<std::size_t>(c.cfg.integer("corrector", "n"));
        cc.L = L;
        cc.box_len = c.cfg.real("corrector", "box_mult") * 2.0 * std::numbers::pi * L;
        cc.per_octave = static_cast<int>(c.cfg.integer("corrector", "per_octave"));
        cc.n_samples = static_cast<std::size_t>(c.cfg.integer("corrector", "n_samples"));
        cc.solver.tol = c.cfg.real("corrector", "tol");
        cc.solver.max_iter = static_cast<std::size_t>(c.cfg.integer("corrector", "max_iter"));
        cc.solver.restart = static_cast<std::size_t>(c.cfg.integer("corrector", "restart"));
        cc.r_schedule = r_schedule;
        cc.seed = c.seed_for("corrector-run");
        cc.threads = c.threads;
        cc.validate();
        const CorrectorEnsemble e = run_correctors(cc);
        std::vector<double> row{cc.eps, L, static_cast<double>(cc.n), e.lambda.value, e.lambda.se, e.E_F2.value,
                                e.E_F2.se, e.E_absdet.value, e.E_absdet.se, e.E_det.value, e.E_det.se, e.grad2.value,
                                e.grad2.se, e.grad2_first_order.value, e.grad2_first_order.se, e.first_order_expected};
        for (const auto& tr : e.truncated) {
            row.push_back(tr.value);
            row.push_back(tr.se);
        }
        t.add(std::move(row));
        for (std::size_t i = 0; i < e.samples.size(); ++i) {
            const auto& s = e.samples[i];
            per.add({L, static_cast<double>(i), s.lambda1, s.lambda2, s.residual, static_cast<double>(s.iterations),
                     s.used_fallback ? 1.0 : 0.0});
        }
    }
    c.emit("corrector", t);
    c.emit("corrector_samples", per);
    return 0;
}

int particle_run(const Context& c) {
    ParticleConfig pc;
    pc.eps = c.cfg.real("particle", "eps");
    pc.n = static_cast<std::size_t>(c.cfg.integer("particle", "n"));
    pc.L = c.cfg.real("particle", "L");
    pc.box_len = c.cfg.real("particle", "box_mult") * 2.0 * std::numbers::pi * pc.L;
    pc.per_octave = static_cast<int>(c.cfg.integer("particle", "per_octave"));
    pc.seed = c.seed_for("particle-run-field");
    pc.paths.dt = c.cfg.real("particle", "dt");
    pc.paths.times = c.cfg.reals("particle", "times");
    pc.paths.n_paths = static_cast<std::size_t>(c.cfg.integer("particle", "n_paths"));
    pc.paths.occupancy_cells = static_cast<std::size_t>(c.cfg.integer("particle", "occupancy_cells"));
    pc.paths.seed = c.seed_for("particle-run-paths");
    pc.paths.threads = c.threads;
    pc.validate();
    const ParticleRun r = run_particles(pc);
    Table t{{"t", "msd_x", "msd_y", "msd_mean", "se_x", "se_y", "se_mean"}, {}};
    const auto& m = r.msd;
    for (std::size_t j = 0; j < m.times.size(); ++j)
        t.add({m.times[j], m.msd[0][j], m.msd[1][j], m.msd_mean[j], m.se[0][j], m.se[1][j], m.se_mean[j]});
    c.emit("particle_msd", t,
           {{"drift_sup", r.drift_sup},
            {"max_divergence", r.max_divergence},
            {"occupancy_chi2", m.occupancy_chi2},
            {"occupancy_dof", m.occupancy_dof}});
    return 0;
}

int accept(const Context& c) {
    AcceptanceConfig ac;
    ac.seed = c.seed;
    ac.threads = c.threads;
    for (auto id : c.cfg.integers("accept", "only")) ac.only.push_back(static_cast<int>(id));
    json summary = json::object();
    Table t{{"criterion", "pass", "seconds", "time_limit"}, {}};
    bool all = true;
    for (int id = 1; id <= kNumCriteria; ++id) {
        if (!ac.only.empty() && std::find(ac.only.begin(), ac.only.end(), id) == ac.only.end()) continue;
        const CriterionResult r = run_criterion(id, ac);
        *c.out << format_line(r) << std::endl;
        all = all && r.pass();
        char key[8];
        std::snprintf(key, sizeof key, "c%02d", id);
        summary[key] = {{"value", r.seconds}, {"threshold", r.time_limit}, {"pass", r.pass()}};
        if (!r.error.empty()) summary[key]["error"] = r.error;
        for (const auto& ch : r.checks) {
            json th = ch.relation == "in" ? json::array({ch.threshold, ch.upper}) : json(ch.threshold);
            summary[std::string(key) + "." + ch.name] = {{"value", ch.value}, {"threshold", th}, {"pass", ch.pass}};
        }
        t.add({static_cast<double>(id), r.pass() ? 1.0 : 0.0, r.seconds, r.time_limit});
    }
    c.emit("acceptance", t);
    const std::string path = (std::filesystem::path(c.out_dir) / "acceptance.json").string();
    write_atomic(path, summary.dump(2) + "\n");
    *c.out << path << '\n';
    return all ? 0 : 2;
}

}  // namespace

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"critdiff: scale-by-scale homogenization laboratory"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    double tau = 0.0, sigma_hat = 0.0, margin = 0.0;

    using Handler = int (*)(const Context&);
    const std::vector<std::pair<std::string, Handler>> commands = {
        {"qv-check", qv_check},       {"sde-run", sde_run},           {"ode-run", ode_run},
        {"tail-check", tail_check},   {"field-run", field_run},       {"corrector-run", corrector_run},
        {"particle-run", particle_run}, {"accept", accept}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, fn] : commands) {
        CLI::App* s = app.add_subcommand(name);
        s->add_option("--config", config_path, "config file, or 'default'")->required();
        s->add_option("--out", out_dir, "output directory");
        s->add_option("--seed", seed, "root seed");
        s->add_option("--threads", threads, "worker threads (0 = hardware)");
        if (name == "tail-check") {
            s->add_option("--tau", tau, "final time ln lambda2 (profile mode)");
            s->add_option("--sigma-hat", sigma_hat, "truncation location ln rhat");
            s->add_option("--margin", margin, "regime margin");
        }
        subs.push_back(s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        Context c;
        c.start = std::chrono::steady_clock::now();
        c.out = &out;
        std::size_t which = 0;
        while (!subs[which]->parsed()) ++which;
        const CLI::App* sub = subs[which];
        c.command = commands[which].first;
        c.cfg = RunConfig::load(config_path);
        if (sub->count("--seed")) c.cfg.set("run", "seed", std::to_string(seed));
        if (sub->count("--threads")) c.cfg.set("run", "threads", std::to_string(threads));
        if (sub->count("--out")) c.cfg.set("run", "out", out_dir);
        if (c.command == "tail-check") {
            char buf[40];
            if (sub->count("--tau")) c.cfg.set("tail", "tau", (std::snprintf(buf, sizeof buf, "%.17g", tau), buf));
            if (sub->count("--sigma-hat"))
                c.cfg.set("tail", "sigma_hat", (std::snprintf(buf, sizeof buf, "%.17g", sigma_hat), buf));
            if (sub->count("--margin")) c.cfg.set("tail", "margin", (std::snprintf(buf, sizeof buf, "%.17g", margin), buf));
        }
        c.seed = c.cfg.seed("run", "seed");
        c.threads = static_cast<unsigned>(c.cfg.integer("run", "threads"));
        c.out_dir = c.cfg.text("run", "out");
        return commands[which].second(c);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "numeric error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace critdiff::cli
