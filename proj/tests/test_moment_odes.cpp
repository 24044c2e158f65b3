#include <doctest.h>

#include "critdiff/errors.hpp"
#include "critdiff/moment_odes.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>

using namespace critdiff;

namespace {

using boost::math::quadrature::gauss_kronrod;

// Raw-form quadratures at eps = 1 where L stays small.
double raw_a(double x) {
    auto f = [](double y) { return std::exp(2 * (y - 1)) * std::pow(y, -1.5); };
    return std::sqrt(x) * gauss_kronrod<double, 61>::integrate(f, 1.0, x, 0, 0);
}
double raw_b(double x) {
    auto inner = [](double y) {
        auto g = [](double z) { return std::exp(2 * (z - 1)) * std::pow(z, -1.5); };
        return gauss_kronrod<double, 61>::integrate(g, 1.0, y, 0, 0);
    };
    auto f = [&](double y) { return std::exp(2 * (y - 1)) / (y * y) * inner(y); };
    return 4 * std::pow(x, 1.5) * gauss_kronrod<double, 61>::integrate(f, 1.0, x, 0, 0);
}
double raw_A(double x) {
    auto f = [](double y) { return raw_a(y) * std::pow(y, -1.5) * std::exp(-2 * (y - 1)); };
    return std::sqrt(x) * (2 + 0.5 * gauss_kronrod<double, 61>::integrate(f, 1.0, x, 0, 0));
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

const MomentSeries& mc_series_eps02() {
    static const MomentSeries s = [] {
        SdeConfig c;
        c.eps = 0.2;
        c.lambda2_max = 4.0;
        c.n_steps = 400;
        c.n_traj = 20000;
        c.seed = 99;
        c.record_every = 4;
        return run_ensemble(c).series;
    }();
    return s;
}

}  // namespace

TEST_CASE("rhs at the initial point") {
    const MomentVector m;
    const auto d = rhs(m, 0.3, ClosureSource::bound());
    CHECK(d[0] == doctest::Approx(1.0));
    CHECK(d[1] == 0.0);
    CHECK(d[2] == doctest::Approx(1.0));
    CHECK(d[3] == doctest::Approx(4.0));
    CHECK(d[4] == 0.0);
    CHECK(d[5] == 0.0);
}

TEST_CASE("exact integrals against raw quadrature at eps = 1") {
    CHECK(exact_a(1.0, 1.0) == 0.0);
    CHECK(exact_b(1.0, 1.0) == 0.0);
    CHECK(exact_A(1.0, 1.0) == 2.0);
    // Regression baselines from 30-digit quadrature of the raw forms.
    CHECK(rel(exact_a(2.0, 1.0), 2.24296397670694336) < 1e-12);
    CHECK(rel(exact_b(2.0, 1.0), 10.8381544991275705) < 1e-10);
    CHECK(rel(exact_A(2.0, 1.0), 2.91406897303005918) < 1e-12);
    for (double x : {1.1, 1.5, 2.0, 2.5}) {
        CHECK(rel(exact_a(x, 1.0), raw_a(x)) < 1e-12);
        CHECK(rel(exact_b(x, 1.0), raw_b(x)) < 1e-10);
        CHECK(rel(exact_A(x, 1.0), raw_A(x)) < 1e-12);
    }
}

TEST_CASE("integrate reproduces the exact integrals") {
    for (auto [eps, x_end] : {std::pair{1.0, 2.0}, std::pair{0.2, 4.0}, std::pair{0.1, 9.0}}) {
        const auto out = integrate(eps, x_end, ClosureSource::bound());
        const auto& m = out.back();
        CHECK(m.x == x_end);
        CHECK(rel(m.a_hat, exact_a_hat(x_end, eps)) < 1e-6);
        CHECK(rel(m.b_hat, exact_b_hat(x_end, eps)) < 1e-6);
        CHECK(rel(m.A, exact_A(x_end, eps)) < 1e-6);
        for (const auto& v : out) CHECK(v.D == 1.0);
    }
}

TEST_CASE("pre-asymptotic bounds hold along integrations") {
    for (double eps : {1.0, 0.5, 0.2, 0.05}) {
        const auto k = envelope_constants(eps);
        for (const auto& m : integrate(eps, 6.0, ClosureSource::bound())) {
            CHECK(m.a_hat <= k.c3 * eps * eps / m.x * (1 + 1e-9));
            CHECK(m.b_hat <= 4 * k.c3 * k.c7 * std::pow(eps, 4) / (m.x * m.x) * (1 + 1e-9));
        }
    }
}

TEST_CASE("bound closure obeys |C'| <= kappa eps^2 sqrt(B) / x^2") {
    const double eps = 0.3;
    const auto k = envelope_constants(eps);
    for (const auto& m : integrate(eps, 5.0, ClosureSource::bound())) {
        const double dC = rhs(m, eps, ClosureSource::bound())[4];
        CHECK(std::abs(dC) <= k.kappa * eps * eps * std::sqrt(m.B) / (m.x * m.x) * (1 + 1e-9));
    }
}

TEST_CASE("asymptotics") {
    const auto a = asymptotics(4.0, 0.3);
    CHECK(a.A == doctest::Approx(4.0));
    CHECK(asymptotics(1.0, 0.3).B == doctest::Approx(4.0));
    CHECK(a.b_hat == doctest::Approx(2 * a.a_hat * a.a_hat));
    CHECK(a.lnL == doctest::Approx(3.0 / 0.09));

    // lnL = 100 at eps = 0.05.
    const double eps = 0.05, x = 1.25;
    const auto as = asymptotics(x, eps);
    const double ra = exact_a_hat(x, eps) / as.a_hat;
    const double rb = exact_b_hat(x, eps) / as.b_hat;
    const double rA = exact_A(x, eps) / as.A;
    CHECK(ra >= 0.98);
    CHECK(ra <= 1.02);
    CHECK(rb >= 0.95);
    CHECK(rb <= 1.05);
    CHECK(rA >= 0.99);
    CHECK(rA <= 1.01);
}

TEST_CASE("asymptotic ratios within 5% at lnL = 100 and 400") {
    const double eps = 0.1;
    for (double lnL : {100.0, 400.0}) {
        const double x = 1 + eps * eps * lnL;
        const auto as = asymptotics(x, eps);
        CHECK(std::abs(exact_a_hat(x, eps) / as.a_hat - 1) < 0.05);
        CHECK(std::abs(exact_b_hat(x, eps) / as.b_hat - 1) < 0.05);
        CHECK(std::abs(exact_A(x, eps) / as.A - 1) < 0.05);
    }
    // a/a_inf approaches 1 monotonically once the transient has decayed.
    double prev = 0.0;
    for (double x = 1 + 10 * eps * eps; x <= 10.0; x += 0.5) {
        const double dev = std::abs(exact_a_hat(x, eps) / asymptotics(x, eps).a_hat - 1);
        if (prev > 0.0) CHECK(dev <= prev);
        prev = dev;
    }
}

TEST_CASE("envelope collapses to the exact solution at eps = 0") {
    const auto env = envelope_BC(0.0, 9.0, 33);
    for (std::size_t i = 0; i < env.x.size(); ++i) {
        const double x = env.x[i];
        const double exact = 8.0 / 3.0 * std::pow(x, 1.5) + 4.0 / 3.0;
        CHECK(rel(env.B_hi[i], exact) < 1e-8);
        CHECK(rel(env.B_lo[i], exact) < 1e-8);
        CHECK(env.C_hi[i] == 1.0);
        CHECK(env.C_lo[i] == 1.0);
    }
}

TEST_CASE("envelope constants and curves") {
    const auto k = envelope_constants(0.1);
    CHECK(k.kappa_bullet == doctest::Approx(0.375));
    CHECK(k.kappa_p == doctest::Approx(2.0 / 7.0 * k.kappa_B));
    const auto env = envelope_BC(0.1, 25.0);
    for (std::size_t i = 0; i < env.x.size(); ++i) {
        CHECK(env.C_hi[i] - 1.0 <= k.kappa_pp * 0.01 * (1 + 1e-9));
        CHECK(env.B_hi[i] <= env.B_crude[i] * (1 + 1e-9));
        CHECK(env.B_lo[i] <= env.B_hi[i]);
    }
}

TEST_CASE("envelope contains the mc-closure integration and the MC moments") {
    const auto& s = mc_series_eps02();
    const auto env = envelope_BC(0.2, 4.0, 301);
    const auto ode = integrate(0.2, 4.0, ClosureSource::mc(s), env.x);
    for (std::size_t i = 0; i < env.x.size(); ++i) {
        CHECK(ode[i].B <= env.B_hi[i] * (1 + 1e-9));
        CHECK(ode[i].B >= env.B_lo[i] * (1 - 1e-9));
        CHECK(ode[i].C <= env.C_hi[i] + 1e-12);
        CHECK(ode[i].C >= env.C_lo[i] - 1e-12);
    }
    for (std::size_t i = 0; i < s.lambda2.size(); ++i) {
        const std::size_t j = static_cast<std::size_t>(std::lround((s.lambda2[i] - 1.0) / 3.0 * 300.0));
        CHECK(s.mean[i][kF4] <= env.B_hi[j] + 3 * s.se[i][kF4]);
        CHECK(s.mean[i][kDet2] <= env.C_hi[j] + 3 * s.se[i][kDet2]);
    }
}

TEST_CASE("fourth-moment combination stays near 4 along mc-closure runs") {
    const auto& s = mc_series_eps02();
    const auto k = envelope_constants(0.2);
    for (const auto& m : integrate(0.2, 4.0, ClosureSource::mc(s))) {
        const double y = (1.5 * m.B - 2 * m.C) / std::pow(m.x, 1.5);
        CHECK(std::abs(y - 4.0) <= k.fourth_moment_bound(m.x));
    }
}

TEST_CASE("mc closure agrees with MC moments") {
    const auto& s = mc_series_eps02();
    const auto ode = integrate(0.2, 4.0, ClosureSource::mc(s));
    for (std::size_t i = 0; i < s.lambda2.size(); i += 10) {
        REQUIRE(ode[i].x == s.lambda2[i]);
        for (auto [k, v] : {std::pair{kPhi2, ode[i].a_hat}, std::pair{kF2, ode[i].A}, std::pair{kF4, ode[i].B},
                            std::pair{kDet2, ode[i].C}})
            CHECK_MESSAGE(std::abs(s.mean[i][k] - v) <= 3 * s.se[i][k] + 0.01 * v, moment_name(k) << " x=" << ode[i].x);
    }
}

TEST_CASE("errors") {
    const auto& s = mc_series_eps02();
    CHECK_THROWS_AS(integrate(0.2, 5.0, ClosureSource::mc(s)), ValidationError);
    CHECK_THROWS_AS(integrate(0.3, 4.0, ClosureSource::mc(s)), ValidationError);
    CHECK_THROWS_AS(integrate(0.2, 1.0, ClosureSource::bound()), ValidationError);
    OdeOptions tight;
    tight.max_steps = 5;
    CHECK_THROWS_AS(integrate(0.05, 4.0, ClosureSource::bound(), {}, tight), NumericError);
}
