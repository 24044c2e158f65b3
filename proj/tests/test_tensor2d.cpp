#include <doctest.h>

#include "critdiff/tensor2d.hpp"
#include "oracles.hpp"

#include <chrono>
#include <algorithm>
#include <random>
#include <stdexcept>

using namespace critdiff;

namespace {
const double kDiamondDiag[4] = {0.5, 0.5, 1.0, 0.0};
}

TEST_CASE("diamond basis table is diagonal with values (1/2, 1/2, 1, 0)") {
    for (int m = 1; m <= 4; ++m)
        for (int n = 1; n <= 4; ++n) {
            const double v = diamond(diamond_basis(m), diamond_basis(n));
            CHECK(v == (m == n ? kDiamondDiag[m - 1] : 0.0));
        }
}

TEST_CASE("diamond closed form matches circle-average oracle") {
    CHECK(diamond(outer(CoVec{{1, 0}}, TanVec{{1, 0}}), outer(CoVec{{1, 0}}, TanVec{{1, 0}})) == 0.125);
    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd;
    for (int s = 0; s < 100; ++s) {
        const Endo2 g = Endo2::from(nd(gen), nd(gen), nd(gen), nd(gen));
        const Endo2 h = Endo2::from(nd(gen), nd(gen), nd(gen), nd(gen));
        CHECK(diamond(g, h) == doctest::Approx(oracle::diamond(g, h)).epsilon(1e-12));
        CHECK(diamond(diamond_basis(4), g) == 0.0);
        CHECK(diamond(g.transpose(), g.transpose()) == doctest::Approx(diamond(g, g)).epsilon(1e-14));
    }
}

TEST_CASE("bullet basis table is diagonal with values (1/2,1/2,1/2,1/2,0,0)") {
    for (int m = 1; m <= 6; ++m)
        for (int n = 1; n <= 6; ++n) {
            const double v = bullet(bullet_basis(m), bullet_basis(n));
            CHECK(v == (m == n ? kBulletGram[m - 1] : 0.0));
        }
    const TriTensor e111 = outer3(CoVec{{1, 0}}, TanVec{{1, 0}}, TanVec{{1, 0}});
    CHECK(bullet(e111, e111) == 0.0625);
}

TEST_CASE("bullet Gram representation matches circle-average oracle") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd;
    for (int s = 0; s < 100; ++s) {
        TriTensor g, h;
        for (auto& v : g.t) v = nd(gen);
        for (auto& v : h.t) v = nd(gen);
        CHECK(bullet(g, h) == doctest::Approx(oracle::bullet(g, h)).epsilon(1e-12));
        CHECK(bullet(bullet_basis(5), g) == 0.0);
        CHECK(bullet(bullet_basis(6), g) == 0.0);
    }
}

TEST_CASE("basis_expand reproduces the standard-basis relations exactly") {
    const CoVec e1{{1, 0}}, e2{{0, 1}};
    const TanVec t1{{1, 0}}, t2{{0, 1}};
    using A = std::array<double, 6>;
    CHECK(basis_expand(4.0 * outer3(e1, t1, t1)) == A{-1, 0, 1, 0, 1, 0});
    CHECK(basis_expand(4.0 * outer3(e1, t2, t2)) == A{1, 0, 3, 0, -1, 0});
    CHECK(basis_expand(2.0 * (outer3(e2, t1, t2) + outer3(e2, t2, t1))) == A{1, 0, -1, 0, 1, 0});
    CHECK(basis_expand(4.0 * outer3(e2, t2, t2)) == A{0, -1, 0, 1, 0, 1});
    CHECK(basis_expand(4.0 * outer3(e2, t1, t1)) == A{0, 1, 0, 3, 0, -1});
    CHECK(basis_expand(2.0 * (outer3(e1, t2, t1) + outer3(e1, t1, t2))) == A{0, 1, 0, -1, 0, 1});
    CHECK(basis_expand(bullet_basis(2)) == A{0, 1, 0, 0, 0, 0});
    CHECK(basis_expand(bullet_basis(7)) == A{0, 0, -2, 0, 1, 0});
    CHECK(basis_expand(bullet_basis(8)) == A{0, 0, 0, -2, 0, 1});
    CHECK_THROWS_AS(basis_expand(outer3(e1, t1, t2)), std::invalid_argument);
}

TEST_CASE("basis_expand reconstruction is exact") {
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<int> ud(-8, 8);
    for (int s = 0; s < 200; ++s) {
        std::array<double, 6> c;
        for (auto& v : c) v = ud(gen) / 4.0;
        const SymTriTensor g = SymTriTensor::from_components(c);
        const auto coef = basis_expand(g);
        TriTensor rec;
        for (int n = 0; n < 6; ++n) rec += coef[n] * bullet_basis(n + 1);
        CHECK(rec.t == g.full().t);
    }
}

TEST_CASE("adjugate, determinant and Frobenius norm") {
    CHECK(Endo2::identity().adjugate().m == Endo2::identity().m);
    CHECK(Endo2::from(1, 2, 3, 4).adjugate().m == Endo2::from(4, -2, -3, 1).m);
    const Endo2 f = Endo2::from(1, 2, 3, 4);
    CHECK((f * f.adjugate()).m == Endo2::from(-2, 0, 0, -2).m);
    CHECK((f.adjugate() * f).m == Endo2::from(-2, 0, 0, -2).m);
    CHECK(f.det() == -2.0);
    CHECK(f.frob2() == 30.0);
    CHECK(f.adjugate().adjugate().m == f.m);
    CHECK(f.transpose().transpose().m == f.m);
    const Endo2 singular = Endo2::from(1, 2, 2, 4);
    CHECK((singular * singular.adjugate()).m == Endo2::zero().m);
    const Endo2 g = Endo2::from(-1, 0.5, 2, 3);
    CHECK((f + g).adjugate().m == (f.adjugate() + g.adjugate()).m);
}

TEST_CASE("musical map is an isometric involution") {
    const TanVec v{{0.3, -1.7}};
    CHECK(sharp(flat(v)).c == v.c);
    CHECK(flat(v).norm2() == v.norm2());
    CHECK(pair(CoVec{{2, 3}}, TanVec{{5, 7}}) == 31.0);
}

TEST_CASE("forms are nonnegative and rotation invariant") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ang(0.0, 6.283185307179586);
    double min_d = 0.0, min_b = 0.0;
    for (int s = 0; s < 10000; ++s) {
        const Endo2 g = Endo2::from(nd(gen), nd(gen), nd(gen), nd(gen));
        TriTensor t;
        for (auto& v : t.t) v = nd(gen);
        min_d = std::min(min_d, diamond(g, g));
        min_b = std::min(min_b, bullet(t, t));
        if (s < 100) {
            const Endo2 q = rotation(ang(gen));
            const Endo2 gq = rotate(g, q);
            const TriTensor tq = rotate(t, q);
            CHECK(diamond(gq, gq) == doctest::Approx(diamond(g, g)).epsilon(1e-12));
            CHECK(bullet(tq, tq) == doctest::Approx(bullet(t, t)).epsilon(1e-12));
        }
    }
    CHECK(min_d >= -1e-14);
    CHECK(min_b >= -1e-14);
}

TEST_CASE("bullet is invariant under permuting the tangent indices (i,j,k,l)") {
    const CoVec co[2] = {CoVec{{1, 0}}, CoVec{{0, 1}}};
    const TanVec ta[2] = {TanVec{{1, 0}}, TanVec{{0, 1}}};
    int idx[4];
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int mask = 0; mask < 16; ++mask) {
                for (int q = 0; q < 4; ++q) idx[q] = (mask >> q) & 1;
                const double ref = bullet(outer3(co[a], ta[idx[0]], ta[idx[1]]), outer3(co[b], ta[idx[2]], ta[idx[3]]));
                std::array<int, 4> p{0, 1, 2, 3};
                do {
                    const double v = bullet(outer3(co[a], ta[idx[p[0]]], ta[idx[p[1]]]),
                                            outer3(co[b], ta[idx[p[2]]], ta[idx[p[3]]]));
                    CHECK(v == doctest::Approx(ref).epsilon(1e-15));
                } while (std::next_permutation(p.begin(), p.end()));
            }
}

TEST_CASE("contraction identities on 1e4 random inputs") {
    const auto t0 = std::chrono::steady_clock::now();
    const IdentityReport r = contract_identities(10000, 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.max_deviation() <= 1e-12);
    CHECK(secs < 1.0);
    // G = id: sum of squares of the four unit tangent-slot images is 1.
    double sum = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const Endo2 m = apply_to_tangent_slot(Endo2::identity(), i, j);
            sum += diamond(m, m);
        }
    CHECK(sum == 1.0);
}

TEST_CASE("operator norms") {
    CHECK(diamond_operator_norm() == doctest::Approx(0.5).epsilon(1e-14));
    // Frozen from an independent power iteration on the circle-average form.
    CHECK(bullet_operator_norm() == doctest::Approx(0.375).epsilon(1e-12));
}
