#pragma once
//! \file tensor2d.hpp
//! Two-dimensional tensor algebra and the universal quadratic-variation
//! forms diamond (on endomorphisms) and bullet (on symmetric three-tensors).

#include <array>
#include <cmath>
#include <cstddef>

namespace critdiff {

enum class Role { tangent, cotangent };

//! Two-component vector with a role tag (tangent or cotangent).
template <Role R>
struct Vec2 {
    std::array<double, 2> c{0.0, 0.0};

    constexpr double operator[](std::size_t i) const { return c[i]; }
    constexpr double& operator[](std::size_t i) { return c[i]; }
    constexpr double norm2() const { return c[0] * c[0] + c[1] * c[1]; }
    double norm() const { return std::sqrt(norm2()); }
};

using TanVec = Vec2<Role::tangent>;
using CoVec = Vec2<Role::cotangent>;

constexpr double pair(const CoVec& xi, const TanVec& xdot) {
    return xi[0] * xdot[0] + xi[1] * xdot[1];
}
//! Musical isomorphism with respect to the Euclidean metric.
constexpr CoVec flat(const TanVec& v) { return CoVec{{v[0], v[1]}}; }
constexpr TanVec sharp(const CoVec& v) { return TanVec{{v[0], v[1]}}; }

/*!
 * 2x2 matrix m(r, c), row r a tangent index and column c a cotangent index.
 *
 * Gradients follow the convention m(r, c) = d_c u^r, so the Jacobian of
 * a map x -> x + phi(x) is id + grad phi with (grad phi)(r, c) = d_c phi^r.
 * The pairing with another gradient is the Frobenius product.
 */
struct Endo2 {
    std::array<double, 4> m{0.0, 0.0, 0.0, 0.0};
    Role role = Role::cotangent;

    static constexpr Endo2 identity() { return Endo2{{1.0, 0.0, 0.0, 1.0}}; }
    static constexpr Endo2 zero() { return Endo2{}; }
    static constexpr Endo2 from(double a, double b, double c, double d) {
        return Endo2{{a, b, c, d}};
    }

    constexpr double operator()(int r, int c) const { return m[2 * r + c]; }
    constexpr double& operator()(int r, int c) { return m[2 * r + c]; }

    constexpr double trace() const { return m[0] + m[3]; }
    constexpr double det() const { return m[0] * m[3] - m[2] * m[1]; }
    constexpr double frob2() const {
        return m[0] * m[0] + m[1] * m[1] + m[2] * m[2] + m[3] * m[3];
    }
    double frob() const { return std::sqrt(frob2()); }
    constexpr Endo2 transpose() const { return Endo2{{m[0], m[2], m[1], m[3]}, role}; }
    constexpr Endo2 adjugate() const { return Endo2{{m[3], -m[1], -m[2], m[0]}, role}; }

    constexpr Endo2& operator+=(const Endo2& o) {
        for (int i = 0; i < 4; ++i) m[i] += o.m[i];
        return *this;
    }
    constexpr Endo2& operator*=(double s) {
        for (auto& v : m) v *= s;
        return *this;
    }
};

constexpr Endo2 operator+(Endo2 a, const Endo2& b) { return a += b; }
constexpr Endo2 operator-(Endo2 a, const Endo2& b) {
    for (int i = 0; i < 4; ++i) a.m[i] -= b.m[i];
    return a;
}
constexpr Endo2 operator*(double s, Endo2 a) { return a *= s; }
constexpr Endo2 operator*(const Endo2& a, const Endo2& b) {
    return Endo2{{a.m[0] * b.m[0] + a.m[1] * b.m[2], a.m[0] * b.m[1] + a.m[1] * b.m[3],
                  a.m[2] * b.m[0] + a.m[3] * b.m[2], a.m[2] * b.m[1] + a.m[3] * b.m[3]},
                 a.role};
}
constexpr TanVec operator*(const Endo2& a, const TanVec& v) {
    return TanVec{{a.m[0] * v[0] + a.m[1] * v[1], a.m[2] * v[0] + a.m[3] * v[1]}};
}
//! Frobenius product G:G' = tr(G^T G').
constexpr double frob_dot(const Endo2& a, const Endo2& b) {
    return a.m[0] * b.m[0] + a.m[1] * b.m[1] + a.m[2] * b.m[2] + a.m[3] * b.m[3];
}
//! The skew coordinate used in tr(J^T G); its sign never matters in the forms.
constexpr double skew_trace(const Endo2& g) { return g.m[1] - g.m[2]; }

Endo2 rotation(double theta);
//! Outer product xi (x) xdot as the matrix m(r, c) = xi_r xdot_c.
constexpr Endo2 outer(const CoVec& xi, const TanVec& xdot) {
    return Endo2{{xi[0] * xdot[0], xi[0] * xdot[1], xi[1] * xdot[0], xi[1] * xdot[1]}};
}
//! (G e^i (x) e_j) := e^i (x) G e_j.
Endo2 apply_to_tangent_slot(const Endo2& g, int i, int j);

//! E^1..E^4 (index 1..4).
Endo2 diamond_basis(int n);

//! Polarized diamond form, closed form with Frobenius, trace and skew parts.
constexpr double diamond(const Endo2& g, const Endo2& h) {
    return 0.25 * frob_dot(g, h) -
           0.125 * (g.trace() * h.trace() - skew_trace(g) * skew_trace(h));
}
//! Rotation action Q.G for Q orthogonal (cotangent slot by Q^{-T} = Q).
Endo2 rotate(const Endo2& g, const Endo2& q);

/*!
 * General three-tensor t(k, i, j) over e^k (x) e_i (x) e_j: first slot
 * cotangent (pairs with the component d phi^k), last two tangent (pair
 * with the derivatives d_i d_j).
 */
struct TriTensor {
    std::array<double, 8> t{};

    constexpr double operator()(int k, int i, int j) const { return t[4 * k + 2 * i + j]; }
    constexpr double& operator()(int k, int i, int j) { return t[4 * k + 2 * i + j]; }
    constexpr double frob2() const {
        double s = 0.0;
        for (double v : t) s += v * v;
        return s;
    }
    constexpr bool is_symmetric(double tol = 0.0) const {
        return std::abs(t[1] - t[2]) <= tol && std::abs(t[5] - t[6]) <= tol;
    }
    constexpr TriTensor& operator+=(const TriTensor& o) {
        for (int i = 0; i < 8; ++i) t[i] += o.t[i];
        return *this;
    }
    constexpr TriTensor& operator*=(double s) {
        for (auto& v : t) v *= s;
        return *this;
    }
};

constexpr TriTensor operator+(TriTensor a, const TriTensor& b) { return a += b; }
constexpr TriTensor operator*(double s, TriTensor a) { return a *= s; }

TriTensor outer3(const CoVec& xi, const TanVec& a, const TanVec& b);

/*!
 * Three-tensor symmetric in its two tangent slots. Components are stored
 * as (k;11), (k;12), (k;22) for k = 0, 1.
 */
class SymTriTensor {
  public:
    SymTriTensor() = default;
    //! Throws std::invalid_argument unless t(k,0,1) == t(k,1,0).
    explicit SymTriTensor(const TriTensor& t);
    static SymTriTensor symmetrized(const TriTensor& t);
    static SymTriTensor from_components(const std::array<double, 6>& c);

    const std::array<double, 6>& components() const { return c_; }
    std::array<double, 6>& components() { return c_; }
    double operator()(int k, int i, int j) const;
    TriTensor full() const;
    double frob2() const;

  private:
    std::array<double, 6> c_{};
};

//! Bold E^1..E^8 (index 1..8).
TriTensor bullet_basis(int n);

//! Coefficients of a symmetric tensor in bold E^1..E^6.
std::array<double, 6> basis_expand(const SymTriTensor& g);
//! Rejects non-symmetric input with std::invalid_argument.
std::array<double, 6> basis_expand(const TriTensor& g);

//! Gram values of bullet on bold E^1..E^6.
inline constexpr std::array<double, 6> kBulletGram{0.5, 0.5, 0.5, 0.5, 0.0, 0.0};

double bullet(const SymTriTensor& g, const SymTriTensor& h);
//! Bullet on general tensors acts through their symmetrization.
double bullet(const TriTensor& g, const TriTensor& h);

TriTensor rotate(const TriTensor& g, const Endo2& q);

//! sup G.G / |G|^2 over nonzero symmetric tensors, Frobenius norm of all eight slots.
double bullet_operator_norm();
//! sup G<>G / |G|^2 over nonzero endomorphisms.
double diamond_operator_norm();

struct IdentityReport {
    double max_dev_frame_endo = 0.0;         // sum_ij G e^i(x)e_j <> same = |G|^2 / 2
    double max_dev_frame_tangent = 0.0;      // sum_i e^i(x)xdot <> same = |xdot|^2 / 2
    double max_dev_rank_one = 0.0;           // xdot*(x)xdot <> same = |xdot|^4 / 8
    double max_dev_frame_covector = 0.0;     // sum_i xi(x)e_i <> same = |xi|^2 / 2
    double max_dev_frame_tri = 0.0;          // sum_ij e^i(x)e_j(x)xdot . same = |xdot|^2 / 2
    double max_dev_det_null = 0.0;
    double max_dev_det_null_tri = 0.0;
    double max_dev_trace_pair = 0.0;         // E7.E7 + E8.E8 = 4
    double max_negative = 0.0;               // most negative diamond/bullet self-value
    std::size_t samples = 0;

    double max_deviation() const;
};

/*!
 * Evaluates every contraction identity on \p samples random inputs drawn
 * from a standard normal stream seeded with \p seed.
 */
IdentityReport contract_identities(std::size_t samples, unsigned long long seed);

}  // namespace critdiff
