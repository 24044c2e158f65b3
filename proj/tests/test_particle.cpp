#include <doctest.h>

#include "critdiff/particle.hpp"

#include <cmath>
#include <numbers>

using namespace critdiff;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

ParticleConfig small_config(double eps, double L) {
    ParticleConfig c;
    c.n = 512;
    c.eps = eps;
    c.L = L;
    c.seed = 4;
    c.paths.seed = 5;
    c.paths.n_paths = 4000;
    c.paths.times = {1.0, 10.0, 50.0, 100.0};
    return c;
}

}  // namespace

TEST_CASE("drift of a single Fourier mode and its divergence") {
    const std::size_t n = 64;
    const double box = 30.0, A = 1.7, h = box / n, dk = kTwoPi / box;
    const int mx = 2, my = 5;
    CoefField c = CoefField::constant(TorusGrid{n, box}, 0.0);
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) c.psi[iy * n + ix] = A * std::sin(dk * (mx * h * ix + my * h * iy));
    const DriftField d = DriftField::from_psi(c);
    double err = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double cs = A * std::cos(dk * (mx * h * ix + my * h * iy));
            err = std::max(err, std::abs(d.b[0][iy * n + ix] + dk * my * cs));
            err = std::max(err, std::abs(d.b[1][iy * n + ix] - dk * mx * cs));
        }
    CHECK(err < 1e-12);
    CHECK(d.max_divergence() < 1e-12);
    CHECK(d.sup() == doctest::Approx(A * dk * std::hypot(mx, my)).epsilon(1e-9));
    CHECK(DriftField::zero(TorusGrid{n, box}).sup() == 0.0);
}

TEST_CASE("sampled drift is divergence free and bilinear interpolation is periodic") {
    NormalStream rng(derive_seed(1, "particle-test"), 0);
    const CoefField c = sample_psi(TorusGrid{256, 4.0 * kTwoPi * 16.0}, 0.4, 16.0, rng);
    const DriftField d = DriftField::from_psi(c);
    CHECK(d.max_divergence() < 1e-10);
    CHECK(d.sup() > 0.1);
    const double h = d.grid.h(), box = d.grid.box_len;
    const auto node = d.at(5 * h, 7 * h);
    CHECK(node[0] == d.b[0][7 * 256 + 5]);
    CHECK(node[1] == d.b[1][7 * 256 + 5]);
    const auto mid = d.at(5.5 * h, 7 * h);
    CHECK(mid[0] == doctest::Approx(0.5 * (d.b[0][7 * 256 + 5] + d.b[0][7 * 256 + 6])).epsilon(1e-14));
    const auto p = d.at(3.3, 101.7), q = d.at(3.3 + box, 101.7 - box);
    CHECK(p[0] == doctest::Approx(q[0]).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(q[1]).epsilon(1e-12));
    const auto edge = d.at(box - 0.25 * h, 0.0);
    CHECK(edge[0] == doctest::Approx(0.25 * d.b[0][255] + 0.75 * d.b[0][0]).epsilon(1e-12));
}

TEST_CASE("zero drift is Brownian motion with slope 2 per component") {
    PathOptions o;
    o.n_paths = 20000;
    o.times = {0.5, 2.0, 5.0};
    o.seed = 8;
    const MsdEstimate e = euler_maruyama(DriftField::zero(TorusGrid{64, 40.0}), o);
    for (std::size_t j = 0; j < o.times.size(); ++j)
        for (int c = 0; c < 2; ++c) {
            const double m = e.msd[c][j], se = e.se[c][j];
            CHECK(se > 0.0);
            CHECK(std::abs(m - 2.0 * o.times[j]) < 3.0 * se);
        }
    CHECK(e.occupancy_dof == 63);
}

TEST_CASE("drift enhances MSD, keeps the uniform law, and is stable under dt halving") {
    ParticleConfig c = small_config(0.4, 16.0);
    const ParticleRun run = run_particles(c);
    CHECK(run.max_divergence < 1e-10);
    for (std::size_t j = 0; j < run.msd.times.size(); ++j) {
        const double t = run.msd.times[j];
        CHECK(run.msd.msd_mean[j] / (2.0 * t) >= 1.0 - 3.0 * run.msd.se_mean[j] / (2.0 * t));
        if (j > 0) CHECK(run.msd.msd_mean[j] >= run.msd.msd_mean[j - 1] - 3.0 * run.msd.se_mean[j]);
    }
    const double dof = static_cast<double>(run.msd.occupancy_dof);
    CHECK(std::abs(run.msd.occupancy_chi2 - dof) < 5.0 * std::sqrt(2.0 * dof));

    c.paths.dt = 0.05;
    c.paths.seed = 6;
    const ParticleRun fine = run_particles(c);
    const std::size_t j = 3;
    REQUIRE(run.msd.times[j] == 100.0);
    const double se = std::hypot(run.msd.se_mean[j], fine.msd.se_mean[j]);
    CHECK(std::abs(fine.msd.msd_mean[j] - run.msd.msd_mean[j]) < 2.0 * se);
}

TEST_CASE("growth ratio: identity, pairing, and range checks") {
    ParticleConfig c = small_config(0.4, 16.0);
    c.paths.n_paths = 600;
    c.paths.keep_paths = true;
    const ParticleRun a = run_particles(c);
    const RatioEstimate same = msd_growth_ratio(a.msd, a.msd, 16.0);
    CHECK(same.paired);
    CHECK(same.value == 1.0);
    CHECK(same.se == 0.0);
    CHECK(same.t == 100.0);
    CHECK(msd_growth_ratio(a.msd, a.msd, 8.0).t == 50.0);
    CHECK_THROWS_AS(msd_growth_ratio(a.msd, a.msd, 0.9), ValidationError);

    PathOptions o;
    o.n_paths = 600;
    o.times = {1.0, 10.0};
    const DriftField z = DriftField::zero(TorusGrid{64, 40.0});
    const MsdEstimate z1 = euler_maruyama(z, o);
    o.seed = 1;
    const MsdEstimate z2 = euler_maruyama(z, o);
    const RatioEstimate r = msd_growth_ratio(z1, z2, 4.0);
    CHECK_FALSE(r.paired);
    CHECK(std::abs(r.value - 1.0) < 3.0 * r.se);
}

TEST_CASE("paths are deterministic across thread counts; options are validated") {
    PathOptions o;
    o.n_paths = 700;
    o.times = {1.0, 3.0};
    o.threads = 1;
    NormalStream rng(derive_seed(2, "particle-test"), 0);
    const DriftField d = DriftField::from_psi(sample_psi(TorusGrid{128, 4.0 * kTwoPi * 8.0}, 0.4, 8.0, rng));
    const MsdEstimate a = euler_maruyama(d, o);
    o.threads = 4;
    const MsdEstimate b = euler_maruyama(d, o);
    CHECK(a.msd_mean == b.msd_mean);
    CHECK(a.occupancy_chi2 == b.occupancy_chi2);

    PathOptions bad = o;
    bad.dt = 0.2;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = o;
    bad.times = {1.0, 1.025};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = o;
    bad.times = {2.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = o;
    bad.n_paths = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
