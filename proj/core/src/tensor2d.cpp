#include "critdiff/tensor2d.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <stdexcept>

namespace critdiff {

Endo2 rotation(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return Endo2::from(c, -s, s, c);
}

Endo2 apply_to_tangent_slot(const Endo2& g, int i, int j) {
    Endo2 out;
    out(i, 0) = g(0, j);
    out(i, 1) = g(1, j);
    return out;
}

Endo2 diamond_basis(int n) {
    switch (n) {
        case 1: return Endo2::from(1, 0, 0, -1);
        case 2: return Endo2::from(0, 1, 1, 0);
        case 3: return Endo2::from(0, 1, -1, 0);
        case 4: return Endo2::from(1, 0, 0, 1);
        default: throw std::out_of_range("diamond_basis: index must be 1..4");
    }
}

Endo2 rotate(const Endo2& g, const Endo2& q) { return q * g * q.transpose(); }

TriTensor outer3(const CoVec& xi, const TanVec& a, const TanVec& b) {
    TriTensor t;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) t(k, i, j) = xi[k] * a[i] * b[j];
    return t;
}

SymTriTensor::SymTriTensor(const TriTensor& t) {
    if (!t.is_symmetric())
        throw std::invalid_argument("SymTriTensor: input not symmetric in its tangent slots");
    *this = symmetrized(t);
}

SymTriTensor SymTriTensor::symmetrized(const TriTensor& t) {
    SymTriTensor s;
    for (int k = 0; k < 2; ++k) {
        s.c_[3 * k + 0] = t(k, 0, 0);
        s.c_[3 * k + 1] = 0.5 * (t(k, 0, 1) + t(k, 1, 0));
        s.c_[3 * k + 2] = t(k, 1, 1);
    }
    return s;
}

SymTriTensor SymTriTensor::from_components(const std::array<double, 6>& c) {
    SymTriTensor s;
    s.c_ = c;
    return s;
}

double SymTriTensor::operator()(int k, int i, int j) const { return c_[3 * k + i + j]; }

TriTensor SymTriTensor::full() const {
    TriTensor t;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) t(k, i, j) = (*this)(k, i, j);
    return t;
}

double SymTriTensor::frob2() const {
    double s = 0.0;
    for (int k = 0; k < 2; ++k)
        s += c_[3 * k] * c_[3 * k] + 2.0 * c_[3 * k + 1] * c_[3 * k + 1] +
             c_[3 * k + 2] * c_[3 * k + 2];
    return s;
}

TriTensor bullet_basis(int n) {
    TriTensor t;
    switch (n) {
        case 1:
            t(0, 0, 0) = -1; t(1, 0, 1) = 1; t(1, 1, 0) = 1; t(0, 1, 1) = 1;
            break;
        case 2:
            t(1, 1, 1) = -1; t(0, 1, 0) = 1; t(0, 0, 1) = 1; t(1, 0, 0) = 1;
            break;
        case 3:
            t(0, 0, 0) = 1; t(0, 1, 1) = 1;
            break;
        case 4:
            t(1, 1, 1) = 1; t(1, 0, 0) = 1;
            break;
        case 5:
            t(0, 0, 0) = 2; t(1, 0, 1) = 1; t(1, 1, 0) = 1;
            break;
        case 6:
            t(1, 1, 1) = 2; t(0, 1, 0) = 1; t(0, 0, 1) = 1;
            break;
        case 7:
            t(0, 1, 1) = -2; t(1, 0, 1) = 1; t(1, 1, 0) = 1;
            break;
        case 8:
            t(1, 0, 0) = -2; t(0, 1, 0) = 1; t(0, 0, 1) = 1;
            break;
        default: throw std::out_of_range("bullet_basis: index must be 1..8");
    }
    return t;
}

std::array<double, 6> basis_expand(const SymTriTensor& g) {
    const auto& c = g.components();
    const double a11 = c[0], a12 = c[1], a22 = c[2];  // k = 1
    const double b11 = c[3], b12 = c[4], b22 = c[5];  // k = 2
    // Inverts 4e1(x)e1(x)e1 = -E1+E3+E5, 4e1(x)e2(x)e2 = E1+3E3-E5,
    // 4e2(x)e1(x)e2 =sym E1-E3+E5 and their images under the swap 1 <-> 2.
    return {0.25 * (-a11 + a22) + 0.5 * b12, 0.25 * (-b22 + b11) + 0.5 * a12,
            0.25 * (a11 + 3.0 * a22) - 0.5 * b12, 0.25 * (b22 + 3.0 * b11) - 0.5 * a12,
            0.25 * (a11 - a22) + 0.5 * b12, 0.25 * (b22 - b11) + 0.5 * a12};
}

std::array<double, 6> basis_expand(const TriTensor& g) { return basis_expand(SymTriTensor(g)); }

double bullet(const SymTriTensor& g, const SymTriTensor& h) {
    const auto cg = basis_expand(g);
    const auto ch = basis_expand(h);
    double s = 0.0;
    for (int n = 0; n < 6; ++n) s += kBulletGram[n] * cg[n] * ch[n];
    return s;
}

double bullet(const TriTensor& g, const TriTensor& h) {
    return bullet(SymTriTensor::symmetrized(g), SymTriTensor::symmetrized(h));
}

TriTensor rotate(const TriTensor& g, const Endo2& q) {
    TriTensor out;
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double s = 0.0;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        for (int c = 0; c < 2; ++c) s += q(k, a) * q(i, b) * q(j, c) * g(a, b, c);
                out(k, i, j) = s;
            }
    return out;
}

double bullet_operator_norm() {
    // Quadratic forms on the six symmetric coordinates; Frobenius counts the
    // mixed slot twice.
    Eigen::Matrix<double, 6, 6> form, metric = Eigen::Matrix<double, 6, 6>::Zero();
    for (int a = 0; a < 6; ++a) {
        std::array<double, 6> ea{};
        ea[a] = 1.0;
        for (int b = 0; b < 6; ++b) {
            std::array<double, 6> eb{};
            eb[b] = 1.0;
            form(a, b) = bullet(SymTriTensor::from_components(ea), SymTriTensor::from_components(eb));
        }
        metric(a, a) = (a % 3 == 1) ? 2.0 : 1.0;
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(form, metric);
    return es.eigenvalues().maxCoeff();
}

double diamond_operator_norm() {
    Eigen::Matrix4d form;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            Endo2 ea, eb;
            ea.m[a] = 1.0;
            eb.m[b] = 1.0;
            form(a, b) = diamond(ea, eb);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(form);
    return es.eigenvalues().maxCoeff();
}

double IdentityReport::max_deviation() const {
    return std::max({max_dev_frame_endo, max_dev_frame_tangent, max_dev_rank_one, max_dev_frame_covector, max_dev_frame_tri,
                     max_dev_det_null, max_dev_det_null_tri, max_dev_trace_pair, max_negative});
}

IdentityReport contract_identities(std::size_t samples, unsigned long long seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    IdentityReport r;
    r.samples = samples;
    auto upd = [](double& slot, double dev) { slot = std::max(slot, std::abs(dev)); };
    const CoVec e_co[2] = {CoVec{{1, 0}}, CoVec{{0, 1}}};
    const TanVec e_tan[2] = {TanVec{{1, 0}}, TanVec{{0, 1}}};

    for (std::size_t s = 0; s < samples; ++s) {
        const Endo2 g = Endo2::from(nd(gen), nd(gen), nd(gen), nd(gen));
        const TanVec xdot{{nd(gen), nd(gen)}};
        const CoVec xi{{nd(gen), nd(gen)}};

        double sum = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const Endo2 m = apply_to_tangent_slot(g, i, j);
                sum += diamond(m, m);
            }
        upd(r.max_dev_frame_endo, sum - 0.5 * g.frob2());

        sum = 0.0;
        for (int i = 0; i < 2; ++i) {
            const Endo2 m = outer(e_co[i], xdot);
            sum += diamond(m, m);
        }
        upd(r.max_dev_frame_tangent, sum - 0.5 * xdot.norm2());

        const Endo2 xx = outer(flat(xdot), xdot);
        upd(r.max_dev_rank_one, diamond(xx, xx) - 0.125 * xdot.norm2() * xdot.norm2());

        sum = 0.0;
        for (int i = 0; i < 2; ++i) {
            const Endo2 m = outer(xi, e_tan[i]);
            sum += diamond(m, m);
        }
        upd(r.max_dev_frame_covector, sum - 0.5 * xi.norm2());

        sum = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const TriTensor t = outer3(e_co[i], e_tan[j], xdot);
                sum += bullet(t, t);
            }
        upd(r.max_dev_frame_tri, sum - 0.5 * xdot.norm2());

        upd(r.max_dev_det_null,
            diamond(apply_to_tangent_slot(g, 0, 0), apply_to_tangent_slot(g, 1, 1)) -
                diamond(apply_to_tangent_slot(g, 0, 1), apply_to_tangent_slot(g, 1, 0)));

        upd(r.max_dev_det_null_tri,
            bullet(outer3(e_co[0], e_tan[0], xdot), outer3(e_co[1], e_tan[1], xdot)) -
                bullet(outer3(e_co[0], e_tan[1], xdot), outer3(e_co[1], e_tan[0], xdot)));

        const SymTriTensor gs = SymTriTensor::from_components(
            {nd(gen), nd(gen), nd(gen), nd(gen), nd(gen), nd(gen)});
        r.max_negative = std::max({r.max_negative, -diamond(g, g), -bullet(gs, gs)});
    }
    const TriTensor e7 = bullet_basis(7), e8 = bullet_basis(8);
    r.max_dev_trace_pair = std::abs(bullet(e7, e7) + bullet(e8, e8) - 4.0);
    return r;
}

}  // namespace critdiff
