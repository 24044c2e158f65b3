#include <doctest.h>

#include "critdiff/errors.hpp"
#include "critdiff/kolmogorov_tail.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace critdiff;

namespace {

using boost::math::quadrature::gauss_kronrod;

// zeta^(tau', sigma) = E zeta^_T(sigma + X), X ~ N(dtau/4, dtau/2), by adaptive quadrature in X.
double oracle_zeta_hat(double sigma_hat, double dtau, double sigma) {
    const double mu = 0.25 * dtau, sd = std::sqrt(0.5 * dtau);
    auto f = [&](double x) {
        const double u = sigma + x - sigma_hat;
        const double z = (x - mu) / sd;
        return (1.0 - smoothstep(u)) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * std::numbers::pi));
    };
    double s = 0.0;
    const double a = mu - 12 * sd, b = mu + 12 * sd;
    // Split at the ramp ends so each piece is smooth.
    std::vector<double> cuts{a, b, sigma_hat - sigma, sigma_hat + 1 - sigma};
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = std::clamp(cuts[i], a, b), hi = std::clamp(cuts[i + 1], a, b);
        if (hi > lo) s += gauss_kronrod<double, 61>::integrate(f, lo, hi, 12, 1e-14);
    }
    return s + 0.5 * std::erfc((mu - a) / (sd * std::numbers::sqrt2));
}

// Explicit central-difference solve of zeta_tau + zeta_s/4 + zeta_ss/4 = 0 in
// s = ln r, backward from tau to 0. Returns the max error of zeta(0, s) against
// e^s zeta^(0, s) on |s - center| <= 2.
double fd_error(double tau, double sigma_hat, double h) {
    const double center = sigma_hat - tau / 4;
    const double lo = center - 10.0, hi = sigma_hat + tau / 2 + 6.0;
    const auto n = static_cast<std::size_t>(std::lround((hi - lo) / h)) + 1;
    const auto steps = static_cast<std::size_t>(std::ceil(tau / h / h));
    const double dt = tau / static_cast<double>(steps);
    std::vector<double> z(n), zn(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = lo + h * static_cast<double>(i);
        z[i] = std::exp(s - tau / 2) * (1.0 - smoothstep(s - tau / 2 - sigma_hat));
    }
    for (std::size_t k = 1; k <= steps; ++k) {
        const double tp = tau - dt * static_cast<double>(k);
        for (std::size_t i = 1; i + 1 < n; ++i)
            zn[i] = z[i] + dt * (0.25 * (z[i + 1] - z[i - 1]) / (2 * h) + 0.25 * (z[i + 1] - 2 * z[i] + z[i - 1]) / (h * h));
        zn[0] = std::exp(lo - tp / 2);
        zn[n - 1] = 0.0;
        std::swap(z, zn);
    }
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = lo + h * static_cast<double>(i);
        if (std::abs(s - center) > 2.0) continue;
        err = std::max(err, std::abs(z[i] - std::exp(s) * zeta_hat(sigma_hat, tau, s).v));
    }
    return err;
}

double total_variation(const std::vector<double>& v) {
    double tv = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) tv += std::abs(v[i] - v[i - 1]);
    return tv;
}

}  // namespace

TEST_CASE("smoothstep") {
    CHECK(smoothstep(0.0) == 0.0);
    CHECK(smoothstep(1.0) == 1.0);
    CHECK(smoothstep(0.5) == doctest::Approx(0.5));
    CHECK(smoothstep(-1.0) == 0.0);
    CHECK(smoothstep(2.0) == 1.0);
    double m = 0.0;
    for (int i = 0; i <= 200000; ++i) m = std::max(m, std::abs(smoothstep_d2(i / 200000.0)));
    CHECK(m == doctest::Approx(kSmoothstepMaxD2).epsilon(1e-9));
    CHECK(kSmoothstepMaxD2 == doctest::Approx(10.0 / std::sqrt(3.0)).epsilon(1e-15));
    const double h = 1e-5;
    for (double u : {0.1, 0.37, 0.5, 0.81}) {
        CHECK(smoothstep_d1(u) == doctest::Approx((smoothstep(u + h) - smoothstep(u - h)) / (2 * h)).epsilon(1e-8));
        CHECK(smoothstep_d2(u) ==
              doctest::Approx((smoothstep_d1(u + h) - smoothstep_d1(u - h)) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("zeta_hat matches adaptive quadrature") {
    for (double dtau : {0.01, 0.3, 2.0, 40.0})
        for (double s : {-5.0, -1.0, -0.2, 0.3, 0.9, 1.5})
            CHECK_MESSAGE(std::abs(zeta_hat(0.0, dtau, s).v - oracle_zeta_hat(0.0, dtau, s)) < 1e-12,
                          "dtau=" << dtau << " s=" << s);
    // Derivatives by central differences.
    for (double dtau : {0.05, 1.0, 9.0}) {
        const double h = 1e-4, s = -0.1;
        const auto z = zeta_hat(0.0, dtau, s);
        const auto zp = zeta_hat(0.0, dtau, s + h), zm = zeta_hat(0.0, dtau, s - h);
        CHECK(z.d1 == doctest::Approx((zp.v - zm.v) / (2 * h)).epsilon(1e-6));
        CHECK(z.d2 == doctest::Approx((zp.d1 - zm.d1) / (2 * h)).epsilon(1e-6));
    }
    const auto t = zeta_hat(0.0, 0.0, 0.5);
    CHECK(t.v == doctest::Approx(0.5));
    CHECK(t.d2 == 0.0);
}

TEST_CASE("a step moves to sigma0 - dtau/4") {
    TailProfile p;
    p.tau_prime = 2.0;
    p.sigma0 = -10.0;
    p.h = 1e-3;
    p.v.resize(20001);
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = p.sigma(i) <= 0.0 ? 1.0 : 0.0;
    p.ref_c = 0.0;
    p.ref_w = 0.2;
    const double dtau = 1.0;
    const auto q = evolve(p, dtau);
    auto at = [&](double s) { return q.v[static_cast<std::size_t>(std::lround((s - q.sigma0) / q.h))]; };
    CHECK(at(-dtau / 4) == doctest::Approx(0.5).epsilon(2e-3));
    CHECK(at(dtau / 4) < 0.3);
    CHECK(q.tau_prime == doctest::Approx(1.0));
}

TEST_CASE("evolve: semigroup, exact solution, maximum principle and total variation") {
    TailConfig cfg;
    cfg.tau = 5.0;
    cfg.sigma_hat = -1.0;
    cfg.resolution = 4000;
    const auto p = terminal_zeta(cfg);
    CHECK(p.v.front() == 1.0);
    CHECK(p.v.back() == 0.0);
    const auto two = evolve(evolve(p, 3.0), 2.0);
    const auto one = evolve(p, 5.0);
    double semi = 0.0, exact = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        semi = std::max(semi, std::abs(two.v[i] - one.v[i]));
        exact = std::max(exact, std::abs(one.v[i] - zeta_hat(cfg.sigma_hat, 5.0, one.sigma(i)).v));
    }
    CHECK(semi < 1e-9);
    CHECK(exact < 1e-9);
    CHECK(one.tau_prime == doctest::Approx(0.0));

    for (double dtau : {0.5, 1.0, 2.5}) {
        const auto q = evolve(p, dtau);
        const auto [mn, mx] = std::minmax_element(q.v.begin(), q.v.end());
        CHECK(*mn >= -1e-9);
        CHECK(*mx <= 1.0 + 1e-9);
        CHECK(total_variation(q.v) <= total_variation(p.v) + 1e-9);
    }
}

TEST_CASE("evolve rejects under-resolved kernels") {
    const auto p = terminal_zeta(0.0, 1.0, -10.0, 10.0, 1001);
    CHECK_THROWS_AS(evolve(p, 1e-4), ValidationError);
    CHECK_THROWS_AS(evolve(p, 2.0), ValidationError);
    CHECK_THROWS_AS(evolve(p, -1.0), ValidationError);
    CHECK_NOTHROW(evolve(p, 0.5));
    CHECK_THROWS_AS(terminal_zeta(0.0, 1.0, -1.0, 10.0, 1001), ValidationError);
}

TEST_CASE("zeta at the origin against the Gaussian bound") {
    for (double tau : {1.0, std::log(25.0), 6.0, 20.0}) {
        TailConfig hi;
        hi.tau = tau;
        hi.sigma_hat = tau / 4 + std::sqrt(tau);
        CHECK(zeta_at_origin(hi) >= 2 * normal_cdf(1 - std::numbers::ln2));

        TailConfig lo = hi;
        lo.sigma_hat = tau / 4 - 3 * std::sqrt(tau);
        const double z = zeta_at_origin(lo);
        CHECK(z <= 0.01);
        const double phi = normal_cdf((1 - std::numbers::ln2 + lo.sigma_hat - tau / 4) / std::sqrt(tau / 2));
        CHECK(z <= 2 * phi);
        CHECK(z >= 0.0);
    }
    for (double s : {-3.0, -1.0, 0.0, 0.5, 2.0})
        for (double dtau : {0.1, 1.0, 10.0}) CHECK(zeta_hat(-1.0, dtau, s).v <= phi_bound(-1.0, dtau, s) + 1e-15);
}

TEST_CASE("terminal zeta in r") {
    TailConfig cfg;
    cfg.tau = std::log(16.0);
    cfg.sigma_hat = -1.0;
    const double lam = 4.0;
    CHECK(zeta_terminal(cfg, 0.0) == 0.0);
    CHECK(zeta_terminal(cfg, lam * std::exp(-2.0)) == doctest::Approx(std::exp(-2.0)));
    CHECK(zeta_terminal(cfg, lam * std::exp(0.5)) == 0.0);
    // zeta >= r/lambda on the truncation set.
    for (double r = 0.01; r < 5.0; r += 0.01) {
        const double ind = r <= lam * std::exp(cfg.sigma_hat) ? r / lam : 0.0;
        CHECK(zeta_terminal(cfg, r) >= ind - 1e-15);
    }
}

TEST_CASE("finite differences in (tau, ln r) converge to the kernel solution") {
    const double e1 = fd_error(2.0, 0.0, 0.04);
    const double e2 = fd_error(2.0, 0.0, 0.02);
    CHECK(e2 < 2e-4);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
}

TEST_CASE("bound terms converge and I1 decays like tau^{-1/2}") {
    TailConfig cfg;
    cfg.tau = 6.0;
    cfg.sigma_hat = -1.5;
    const auto a = bound_terms(cfg);
    TailConfig fine = cfg;
    fine.resolution *= 2;
    fine.tau_slices *= 2;
    const auto b = bound_terms(fine);
    CHECK(std::abs(a.I1 / b.I1 - 1) < 0.01);
    CHECK(std::abs(a.I2 / b.I2 - 1) < 0.01);
    CHECK(a.I2 <= 2.0 / 3.0 * 1.875 + 1e-9);
    CHECK(a.I2 > 0.0);

    std::vector<double> scaled;
    for (double tau : {4.0, 16.0, 64.0, 400.0}) {
        TailConfig c;
        c.tau = tau;
        c.sigma_hat = tau / 4 - 2 * std::sqrt(tau);
        c.resolution = 1000;
        const auto bt = bound_terms(c);
        scaled.push_back(bt.I1 * std::sqrt(tau));
        CHECK(bt.I2 < 1.5);
    }
    const auto [mn, mx] = std::minmax_element(scaled.begin(), scaled.end());
    CHECK(*mx < 6.0);
    CHECK(*mx / *mn < 2.0);
}

TEST_CASE("verify_tail on synthetic samples") {
    const double lambda2 = 16.0;
    const auto cfg = tail_config_for(lambda2, 0.05, 8.0);
    CHECK(std::exp(cfg.sigma_hat) * 4.0 == doctest::Approx(0.05 * 8.0));
    std::vector<double> F2;
    for (int i = 0; i < 1000; ++i) F2.push_back(0.1 + 0.016 * i);
    const auto r = verify_tail(F2, 0.3, cfg);
    CHECK(r.chain_holds);
    CHECK(r.lhs <= r.e_zeta);
    CHECK(r.rhs >= r.zeta0);
    CHECK(r.truncated_ratio == doctest::Approx(truncated_second_moment(F2, 0.4 / r.mean_F2)));
    CHECK(r.c > 0.5);
    CHECK(r.c_prime > 0.5 * 0.5);

    // eps = 0: F stays the identity.
    const auto d = verify_tail(std::vector<double>(100, 2.0), 0.0, cfg);
    CHECK(d.lhs == 0.0);
    CHECK(d.truncated_ratio == 0.0);
    CHECK(d.c == doctest::Approx(0.5));
    CHECK_FALSE(d.warnings.empty());

    // Truncation outside the regime is flagged but still evaluated.
    const auto wide = verify_tail(F2, 0.3, tail_config_for(lambda2, 0.9, r.mean_F2));
    CHECK(std::any_of(wide.warnings.begin(), wide.warnings.end(),
                      [](const std::string& w) { return w.find("regime") != std::string::npos; }));
    CHECK(regime_rhat(25.0, 0.1) == doctest::Approx(0.1 * std::sqrt(5.0) * std::exp(-std::sqrt(2 * std::log(5.0)))));

    CHECK_THROWS_AS(verify_tail({1.0}, 0.3, cfg), ValidationError);
    CHECK_THROWS_AS(verify_tail({1.0, NAN}, 0.3, cfg), NumericError);
    TailConfig bad = cfg;
    bad.resolution = 10;
    CHECK_THROWS_AS(bound_terms(bad), ValidationError);
}

TEST_CASE("verify_tail on proxy ensembles") {
    SdeConfig c;
    c.eps = 0.3;
    c.lambda2_max = 9.0;
    c.n_steps = 300;
    c.n_traj = 4000;
    c.seed = 5;
    c.record_every = 300;
    c.snapshot_lambda2 = {9.0};
    const auto res = run_ensemble(c);
    REQUIRE(res.snapshots.size() == 1);
    const auto& F2 = res.snapshots[0].F2;
    double mean = 0.0;
    for (double f : F2) mean += f;
    mean /= static_cast<double>(F2.size());
    for (double rhat : {regime_rhat(9.0, 0.1), 0.3, 0.6}) {
        const auto r = verify_tail(F2, c.eps, tail_config_for(9.0, rhat, mean));
        CHECK_MESSAGE(r.chain_holds, "rhat=" << rhat << " lhs=" << r.lhs << " Ezeta=" << r.e_zeta << " rhs=" << r.rhs);
        CHECK(r.truncated_ratio == doctest::Approx(truncated_second_moment(F2, rhat)));
    }
}
