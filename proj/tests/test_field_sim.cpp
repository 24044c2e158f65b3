#include <doctest.h>

#include "critdiff/errors.hpp"
#include "critdiff/field_sim.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace critdiff;

namespace {

using boost::math::quadrature::gauss_kronrod;

// Continuum shell integral eps^2 int r^p / (1 - eps^2 ln r)^w dr over 1/L1 < r <= 1/L0.
double shell_integral(double L0, double L1, double eps, int p, bool weighted) {
    auto f = [&](double r) { return std::pow(r, p) / (weighted ? 1.0 - eps * eps * std::log(r) : 1.0); };
    return eps * eps * gauss_kronrod<double, 61>::integrate(f, 1.0 / L1, 1.0 / L0, 10, 1e-13);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Point-mode reference on the field shell grid, and the field run itself, at lambda2_max = 2.5.
struct Crit9 {
    FieldRunResult field;
    MomentSeries point;
};
const Crit9& crit9() {
    static const Crit9 c = [] {
        FieldRunConfig fc;
        fc.n = 256;
        fc.L_max = 16.0;
        fc.eps = std::sqrt(1.5 / std::log(16.0));
        fc.n_samples = 40;
        fc.seed = 11;
        Crit9 r;
        r.field = run_fields(fc);
        SdeConfig pc;
        pc.eps = fc.eps;
        pc.scheme = SdeScheme::raw_shell;
        pc.grid = fc.lambda2_grid();
        pc.lambda2_max = pc.grid.back();
        pc.n_traj = 100000;
        pc.seed = 12;
        r.point = run_ensemble(pc).series;
        return r;
    }();
    return c;
}

}  // namespace

TEST_CASE("torus grid and shell ladder") {
    const auto g = TorusGrid::for_cutoff(256, 16.0);
    CHECK(g.box_len == doctest::Approx(4 * 2 * std::numbers::pi * 16));
    CHECK_NOTHROW(g.validate(16.0));
    CHECK_THROWS_AS((TorusGrid{200, g.box_len}.validate(16.0)), ValidationError);
    CHECK_THROWS_AS((TorusGrid{256, 50.0}.validate(16.0)), ValidationError);
    CHECK_THROWS_AS((TorusGrid{64, g.box_len}.validate(16.0)), ValidationError);
    CHECK(g.signed_index(0) == 0);
    CHECK(g.signed_index(128) == 128);
    CHECK(g.signed_index(255) == -1);

    const auto s = shell_ladder(16.0);
    REQUIRE(s.size() == 16);
    CHECK(s.front().L0 == 1.0);
    CHECK(s.back().L1 == 16.0);
    for (std::size_t j = 0; j < s.size(); ++j) {
        CHECK(s[j].L1 / s[j].L0 == doctest::Approx(std::pow(2.0, 0.25)));
        if (j > 0) CHECK(s[j].L0 == s[j - 1].L1);
    }
}

TEST_CASE("shell spectrum: calibration, empty annulus, reality") {
    const auto g = TorusGrid::for_cutoff(128, 8.0);
    for (const auto& sh : shell_ladder(8.0)) {
        const auto sp = make_shell_spectrum(g, sh, 0.4);
        double sum = 0.0;
        for (const auto& m : sp.modes) sum += 2 * m.sd * m.sd * 2;  // two real parts, two partners
        CHECK(sum == doctest::Approx(0.16 * std::log(sh.L1 / sh.L0)).epsilon(1e-12));
        CHECK(std::abs(sp.calibration - 1.0) < 0.3);
        for (const auto& m : sp.modes) {
            CHECK(m.k2 > 1.0 / (sh.L1 * sh.L1));
            CHECK(m.k2 <= 1.0 / (sh.L0 * sh.L0) * (1 + 1e-12));
        }
    }
    // Annulus 1/1.1 < |k| <= 1 misses the lattice with dk = 0.45.
    const TorusGrid coarse{8, 2 * std::numbers::pi / 0.45};
    CHECK_THROWS_WITH_AS(make_shell_spectrum(coarse, Shell{1.0, 1.1}, 0.3), doctest::Contains("no lattice modes"),
                         ValidationError);

    const auto sp = make_shell_spectrum(g, Shell{2.0, 2.5}, 0.4);
    NormalStream rng(derive_seed(1, "t"), 0);
    const auto f = sample_shell_field(sp, rng);
    double imag = 1.0;
    const auto x = to_real(f, &imag);
    CHECK(imag < 1e-12);
    std::size_t nz = 0;
    for (const auto& c : f.coef) nz += std::abs(c) > 0.0;
    CHECK(nz == sp.n_modes());
    // Parseval: spatial mean of psi^2 equals the coefficient energy.
    double e = 0.0, v = 0.0;
    for (const auto& c : f.coef) e += std::norm(c);
    for (double y : x) v += y * y;
    CHECK(v / static_cast<double>(x.size()) == doctest::Approx(e).epsilon(1e-12));
}

TEST_CASE("disjoint shells are uncorrelated and Var psi_L = eps^2 ln L") {
    const double eps = 0.4;
    const auto g = TorusGrid::for_cutoff(256, 16.0);
    const auto shells = shell_ladder(16.0);
    std::vector<ShellSpectrum> specs;
    for (const auto& s : shells) specs.push_back(make_shell_spectrum(g, s, eps));
    const std::size_t samples = 1000;
    std::vector<double> var(samples), prod(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        NormalStream rng(derive_seed(7, "var-psi"), k);
        std::vector<double> psi(g.size(), 0.0);
        std::vector<double> a, b;
        for (std::size_t j = 0; j < specs.size(); ++j) {
            const auto x = to_real(sample_shell_field(specs[j], rng));
            if (j == 10) a = x;
            if (j == 12) b = x;
            for (std::size_t i = 0; i < x.size(); ++i) psi[i] += x[i];
        }
        double v = 0.0;
        for (double p : psi) v += p * p;
        var[k] = v / static_cast<double>(psi.size());
        prod[k] = a[777] * b[777];
    }
    const double vm = mean_of(var);
    CHECK(std::abs(vm / (eps * eps * std::log(16.0)) - 1) < 0.05);
    const double pm = mean_of(prod);
    double q = 0.0;
    for (double p : prod) q += (p - pm) * (p - pm);
    const double se = std::sqrt(q / (samples - 1.0) / samples);
    CHECK(std::abs(pm) < 5 * se);
}

TEST_CASE("driver fields: local relations and quadratic variations") {
    const double eps = 0.5;
    const auto g = TorusGrid::for_cutoff(128, 8.0);
    const Shell sh{4.0, 4.0 * std::pow(2.0, 0.25)};
    const auto sp = make_shell_spectrum(g, sh, eps);
    const double x0 = 1 + eps * eps * std::log(sh.L0), x1 = 1 + eps * eps * std::log(sh.L1);
    const double lam = std::sqrt((x1 - x0) / std::log(x1 / x0));
    double phi = 0.0, grad = 0.0, resid = 0.0;
    const int samples = 200;
    for (int k = 0; k < samples; ++k) {
        NormalStream rng(derive_seed(3, "drivers"), static_cast<std::uint64_t>(k));
        const auto d = driver_fields(sample_shell_field(sp, rng));
        CHECK(d.lambda2_0 == doctest::Approx(x0));
        CHECK(d.lambda2_1 == doctest::Approx(x1));
        for (std::size_t i = 0; i < g.size(); ++i) {
            resid = std::max(resid, std::abs(d.grad[0][i] + d.grad[3][i]));
            resid = std::max(resid, std::abs(lam * (d.grad[2][i] - d.grad[1][i]) + d.dpsi[i]));
            phi += d.dphi[0][i] * d.dphi[0][i];
            for (int c = 0; c < 4; ++c) grad += d.grad[c][i] * d.grad[c][i];
        }
    }
    const double N = static_cast<double>(samples) * static_cast<double>(g.size());
    CHECK(resid < 1e-10);
    // [xi.dphi xi.dphi] = |xi|^2 L^2 dlambda2 / (2 lambda2) and sum_ij Var(d_j dphi^i) = dlambda2 / lambda2.
    CHECK(std::abs(phi / N / (0.5 * shell_integral(sh.L0, sh.L1, eps, -3, true)) - 1) < 0.1);
    CHECK(std::abs(grad / N / shell_integral(sh.L0, sh.L1, eps, -1, true) - 1) < 0.1);
}

TEST_CASE("step_fields") {
    const auto g = TorusGrid::for_cutoff(64, 4.0);
    const auto sp = make_shell_spectrum(g, Shell{2.0, 2.5}, 0.4);
    NormalStream rng(derive_seed(2, "step"), 0);
    auto d = driver_fields(sample_shell_field(sp, rng));
    FieldState s = FieldState::initial(g);
    s.lambda2 = d.lambda2_0;

    DriverGrids zero = d;
    for (auto* v : {&zero.dpsi, &zero.dphi[0], &zero.dphi[1]}) std::fill(v->begin(), v->end(), 0.0);
    for (auto& v : zero.grad) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : zero.hess) std::fill(v.begin(), v.end(), 0.0);
    const auto z = step_fields(s, zero);
    CHECK(z.phi[0] == s.phi[0]);
    CHECK(z.F[1] == s.F[1]);
    CHECK(z.lambda2 == d.lambda2_1);

    // Pointwise agreement with the single-point step.
    const auto t = step_fields(s, d);
    for (std::size_t i : {0ul, 17ul, 1234ul}) {
        DriverIncrement inc;
        inc.dphi = TanVec{{d.dphi[0][i], d.dphi[1][i]}};
        inc.grad = Endo2::from(d.grad[0][i], d.grad[1][i], d.grad[2][i], d.grad[3][i]);
        inc.hess = SymTriTensor::from_components(
            {d.hess[0][i], d.hess[1][i], d.hess[2][i], d.hess[3][i], d.hess[4][i], d.hess[5][i]});
        const auto p = step(ProxyState{}, inc);
        CHECK(t.phi[0][i] == p.phi[0]);
        CHECK(t.F[2][i] == p.F.m[2]);
    }

    FieldState wrong = s;
    wrong.lambda2 = 7.0;
    CHECK_THROWS_AS(step_fields(wrong, d), ValidationError);
    d.dphi[0][5] = NAN;
    CHECK_THROWS_WITH_AS(step_fields(s, d), doctest::Contains("node (5, 0)"), NumericError);
}

TEST_CASE("stationarity at 16 random grid points") {
    const double eps = 0.6;
    const auto g = TorusGrid::for_cutoff(128, 8.0);
    const auto shells = shell_ladder(8.0);
    std::vector<ShellSpectrum> specs;
    for (const auto& s : shells) specs.push_back(make_shell_spectrum(g, s, eps));
    NormalStream pick(derive_seed(5, "points"), 0);
    std::vector<std::size_t> pts;
    for (int k = 0; k < 16; ++k)
        pts.push_back(static_cast<std::size_t>(std::abs(pick()) * 1e6) % g.size());
    const std::size_t samples = 150;
    std::vector<std::vector<double>> f2(16, std::vector<double>(samples)), dt(16, std::vector<double>(samples));
    for (std::size_t k = 0; k < samples; ++k) {
        NormalStream rng(derive_seed(5, "stationarity"), k);
        FieldState st = FieldState::initial(g);
        for (const auto& sp : specs) step_fields_inplace(st, driver_fields(sample_shell_field(sp, rng)));
        for (int p = 0; p < 16; ++p) {
            const std::size_t i = pts[p];
            f2[p][k] = st.F[0][i] * st.F[0][i] + st.F[1][i] * st.F[1][i] + st.F[2][i] * st.F[2][i] +
                       st.F[3][i] * st.F[3][i];
            dt[p][k] = st.F[0][i] * st.F[3][i] - st.F[1][i] * st.F[2][i];
        }
    }
    for (auto* obs : {&f2, &dt}) {
        std::vector<double> m(16), se(16);
        for (int p = 0; p < 16; ++p) {
            m[p] = mean_of((*obs)[p]);
            double q = 0.0;
            for (double v : (*obs)[p]) q += (v - m[p]) * (v - m[p]);
            se[p] = std::sqrt(q / (samples - 1.0) / samples);
        }
        for (int p = 0; p < 16; ++p)
            for (int r = p + 1; r < 16; ++r)
                CHECK(std::abs(m[p] - m[r]) <= 4 * std::hypot(se[p], se[r]));
    }
}

TEST_CASE("field mode against point mode at lambda2 = 2.5") {
    const auto& c = crit9();
    const auto& f = c.field.series;
    const auto& p = c.point;
    REQUIRE(f.lambda2.size() == p.lambda2.size());
    CHECK(f.lambda2.back() == doctest::Approx(2.5));
    const std::size_t r = f.lambda2.size() - 1;
    for (int k : {kPhi2, kPhi4, kF2, kF4, kDet, kDet2})
        CHECK_MESSAGE(std::abs(f.mean[r][k] - p.mean[r][k]) <= 3 * std::hypot(f.se[r][k], p.se[r][k]),
                      moment_name(k) << " field=" << f.mean[r][k] << "+-" << f.se[r][k] << " point=" << p.mean[r][k]
                                     << "+-" << p.se[r][k]);
    for (std::size_t i = 0; i < f.lambda2.size(); ++i)
        CHECK(std::abs(f.mean[i][kDet] - 1.0) <= 3 * f.se[i][kDet] + 1e-12);
    for (double v : c.field.constraint_residual) CHECK(v < 1e-10);
}

TEST_CASE("empirical quadratic variations") {
    const auto& run = crit9().field;
    const auto q = empirical_qv(run);
    CHECK(std::abs(q.psi_qv.value / q.psi_qv_expected - 1) < 0.05);
    CHECK(q.psi_qv_expected == doctest::Approx(1.5));
    CHECK(std::abs(q.var_psi.value / q.var_psi_expected - 1) < 0.05);
    CHECK(std::abs(q.derivative_ratio.value - 1) < 0.1);
    CHECK(std::abs(q.dphi_ratio.value - 1) < 0.1);
    CHECK(std::abs(q.grad_ratio.value - 1) < 0.1);
    CHECK(std::abs(q.frame_tri.value - 0.5) < 0.05);

    FieldRunConfig few;
    few.n = 64;
    few.L_max = 2.0;
    few.n_samples = 2;
    const auto small = run_fields(few);
    CHECK_THROWS_AS(empirical_qv(small), ValidationError);
}

TEST_CASE("run_fields is independent of the thread count") {
    FieldRunConfig c;
    c.n = 64;
    c.L_max = 4.0;
    c.eps = 0.5;
    c.n_samples = 4;
    c.seed = 9;
    c.threads = 1;
    const auto a = run_fields(c);
    c.threads = 3;
    const auto b = run_fields(c);
    CHECK(a.series.mean == b.series.mean);
    CHECK(a.var_psi == b.var_psi);
    CHECK(a.final_state.F[0] == b.final_state.F[0]);
    c.eps = 0.0;
    CHECK_THROWS_AS(run_fields(c), ValidationError);
    c.eps = 0.5;
    c.n_samples = 1;
    CHECK_THROWS_AS(run_fields(c), ValidationError);
}

TEST_CASE("snapshot round trip") {
    FieldRunConfig c;
    c.n = 64;
    c.L_max = 4.0;
    c.eps = 0.5;
    c.n_samples = 2;
    const auto run = run_fields(c);
    const auto path = (std::filesystem::temp_directory_path() / "critdiff_snapshot_test.bin").string();
    write_snapshot(path, run.final_state);
    CHECK(std::filesystem::file_size(path) == 32 + 6 * 64 * 64 * 8);
    const auto back = read_snapshot(path);
    CHECK(back.grid.n == 64);
    CHECK(back.grid.box_len == run.final_state.grid.box_len);
    CHECK(back.lambda2 == run.final_state.lambda2);
    CHECK(back.phi[1] == run.final_state.phi[1]);
    CHECK(back.F[3] == run.final_state.F[3]);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "junk";
    }
    CHECK_THROWS_AS(read_snapshot(path), ValidationError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_snapshot(path), ValidationError);
}
