#include "critdiff/shell_cov.hpp"

#include "quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace critdiff {

ScaleGrid ScaleGrid::uniform(double eps, double lambda2_max, std::size_t n_steps) {
    ScaleGrid g;
    g.eps = eps;
    g.lambda2.resize(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        g.lambda2[i] = 1.0 + (lambda2_max - 1.0) * static_cast<double>(i) / static_cast<double>(n_steps);
    g.lambda2.back() = lambda2_max;
    return g;
}

void ScaleGrid::validate() const {
    if (lambda2.empty() || lambda2.front() != 1.0)
        throw std::invalid_argument("ScaleGrid: first lambda2 must be 1");
    for (std::size_t i = 1; i < lambda2.size(); ++i)
        if (!(lambda2[i] > lambda2[i - 1]))
            throw std::invalid_argument("ScaleGrid: lambda2 must increase strictly");
    if (!(eps > 0.0)) throw std::invalid_argument("ScaleGrid: eps must be positive");
}

double angular_moment(int a, int b) {
    if (a < 0 || b < 0 || a + b > 6)
        throw std::invalid_argument("angular_moment: total degree must be in [0, 6]");
    if (a % 2 || b % 2) return 0.0;
    auto dfact = [](int n) {
        double r = 1.0;
        for (int k = n; k > 1; k -= 2) r *= k;
        return r;
    };
    return dfact(a - 1) * dfact(b - 1) / dfact(a + b);
}

namespace {

// A factor theta_i or (J theta)^a reduces to a signed coordinate,
// (J theta) = (-theta_2, theta_1).
struct Factor {
    int var;
    int sign;
};
constexpr Factor th(int i) { return {i, 1}; }
constexpr Factor jt(int a) { return a == 0 ? Factor{1, -1} : Factor{0, 1}; }

template <std::size_t N>
double mean_product(const std::array<Factor, N>& f) {
    int pw[2] = {0, 0};
    int sign = 1;
    for (const auto& x : f) {
        ++pw[x.var];
        sign *= x.sign;
    }
    return sign * angular_moment(pw[0], pw[1]);
}

// hess coordinate (k; ij) with ij in {11, 12, 22} -> (k, i, j).
struct HessIdx {
    int k, i, j;
};
constexpr HessIdx hess_idx(int n) {
    const int k = n / 3, r = n % 3;
    return {k, r == 2 ? 1 : 0, r == 0 ? 0 : 1};
}

struct Weights {
    double w00, w11, w22, w02;
};

DriverCovariance assemble(const Weights& w) {
    DriverCovariance c;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            c(drv::kPhi + a, drv::kPhi + b) = w.w00 * mean_product(std::array{jt(a), jt(b)});
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) {
            const int r1 = p / 2, c1 = p % 2, r2 = q / 2, c2 = q % 2;
            c(drv::kGrad + p, drv::kGrad + q) =
                w.w11 * mean_product(std::array{th(c1), th(c2), jt(r1), jt(r2)});
        }
    for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q) {
            const auto u = hess_idx(p), v = hess_idx(q);
            c(drv::kHess + p, drv::kHess + q) =
                w.w22 * mean_product(std::array{th(u.i), th(u.j), th(v.i), th(v.j), jt(u.k), jt(v.k)});
        }
    for (int a = 0; a < 2; ++a)
        for (int q = 0; q < 6; ++q) {
            const auto v = hess_idx(q);
            const double val = -w.w02 * mean_product(std::array{th(v.i), th(v.j), jt(a), jt(v.k)});
            c(drv::kPhi + a, drv::kHess + q) = val;
            c(drv::kHess + q, drv::kPhi + a) = val;
        }
    return c;
}

}  // namespace

double DriverCovariance::grad_form(const Endo2& g, const Endo2& h) const {
    double s = 0.0;
    for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) s += g.m[p] * (*this)(drv::kGrad + p, drv::kGrad + q) * h.m[q];
    return s;
}

double DriverCovariance::hess_form(const TriTensor& g, const TriTensor& h) const {
    auto pairing = [](const TriTensor& t) {
        std::array<double, 6> v;
        for (int k = 0; k < 2; ++k) {
            v[3 * k + 0] = t(k, 0, 0);
            v[3 * k + 1] = t(k, 0, 1) + t(k, 1, 0);
            v[3 * k + 2] = t(k, 1, 1);
        }
        return v;
    };
    const auto pg = pairing(g), ph = pairing(h);
    double s = 0.0;
    for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q) s += pg[p] * (*this)(drv::kHess + p, drv::kHess + q) * ph[q];
    return s;
}

std::array<double, 12> DriverCovariance::eigenvalues() const {
    Eigen::Map<const Eigen::Matrix<double, 12, 12, Eigen::RowMajor>> a(m.data());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> es(a, Eigen::EigenvaluesOnly);
    std::array<double, 12> out;
    for (int i = 0; i < 12; ++i) out[i] = es.eigenvalues()(i);
    return out;
}

DriverCovariance build_cov(double lambda2, double eps, bool scaled) {
    if (!(lambda2 >= 1.0) || !(eps > 0.0))
        throw std::invalid_argument("build_cov: requires lambda2 >= 1 and eps > 0");
    const double lnL = lnL_of(lambda2, eps);
    const double L2 = scaled ? 1.0 : std::exp(2.0 * lnL);
    const double inv = 1.0 / lambda2;
    DriverCovariance c = assemble({L2 * inv, inv, inv / L2, inv});
    c.lambda2 = lambda2;
    c.eps = eps;
    c.lnL = lnL;
    c.scaled = scaled;
    return c;
}

double shell_weight(double x0, double x1, double eps, int p) {
    if (!(x1 > x0)) throw std::invalid_argument("shell_weight: empty shell");
    if (p == 0) return std::log(x1 / x0);
    const double e2 = eps * eps;
    if (p > 0) {
        // Factor out the growth at the right end.
        auto f = [&](double s) { return std::exp(-p * s / e2) / (x1 - s); };
        const double hi = std::min(x1 - x0, 40.0 * e2 / p);
        return std::exp(p * (x1 - x0) / e2) * detail::panel_quadrature(f, 0.0, hi, e2 / p);
    }
    auto f = [&](double y) { return std::exp(p * (y - x0) / e2) / y; };
    return detail::panel_quadrature(f, x0, std::min(x1, x0 - 40.0 * e2 / p), -e2 / p);
}

double decay_weight(double x0, double x1, double eps, int p) {
    if (!(x1 > x0) || p <= 0) throw std::invalid_argument("decay_weight: empty shell or p <= 0");
    const double e2 = eps * eps;
    auto f = [&](double s) { return std::exp(-p * s / e2) / (x1 - s); };
    return detail::panel_quadrature(f, 0.0, std::min(x1 - x0, 40.0 * e2 / p), e2 / p);
}

DriverCovariance shell_cov(double x0, double x1, double eps, bool scaled) {
    if (!(x0 >= 1.0) || !(x1 > x0) || !(eps > 0.0))
        throw std::invalid_argument("shell_cov: requires 1 <= x0 < x1 and eps > 0");
    const double lnL0 = lnL_of(x0, eps);
    const double L02 = scaled ? 1.0 : std::exp(2.0 * lnL0);
    const double w_up = shell_weight(x0, x1, eps, 2);
    const double w_0 = shell_weight(x0, x1, eps, 0);
    const double w_dn = shell_weight(x0, x1, eps, -2);
    DriverCovariance c = assemble({L02 * w_up, w_0, w_dn / L02, w_0});
    c.lambda2 = x0;
    c.eps = eps;
    c.lnL = lnL0;
    c.scaled = scaled;
    return c;
}

DriverSampler::DriverSampler(const DriverCovariance& cov, double dlambda2) : dlambda2_(dlambda2) {
    if (!(dlambda2 > 0.0)) throw std::invalid_argument("DriverSampler: step must be positive");
    using Mat8 = Eigen::Matrix<double, 8, 8>;
    for (int i = 0; i < 12; ++i)
        for (int j = drv::kGrad; j < drv::kHess; ++j)
            if ((i < drv::kGrad || i >= drv::kHess) && cov(i, j) != 0.0)
                throw std::runtime_error("DriverSampler: grad block couples to phi/hess");

    const int idx[8] = {0, 1, 6, 7, 8, 9, 10, 11};
    Mat8 a;
    for (int p = 0; p < 8; ++p)
        for (int q = 0; q < 8; ++q) a(p, q) = dlambda2 * cov(idx[p], idx[q]);
    Eigen::SelfAdjointEigenSolver<Mat8> es(a);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    phi_hess_rank_ = 0;
    for (int k = 7; k >= 0; --k) {
        const double lam = es.eigenvalues()(k);
        if (lam < -1e-12 * scale) {
            std::ostringstream os;
            os << "DriverSampler: covariance not PSD, eigenvalue " << lam << " (index " << k << ")";
            throw std::runtime_error(os.str());
        }
        if (lam <= 1e-14 * scale) continue;
        const double s = std::sqrt(lam);
        for (int p = 0; p < 8; ++p) phi_hess_factor_[8 * p + phi_hess_rank_] = es.eigenvectors()(p, k) * s;
        ++phi_hess_rank_;
    }

    // grad = sum_n c_n E^n with c_n = (E^n : grad) / 2.
    Eigen::Matrix<double, 4, 4> t;
    for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n)
            t(m, n) = 0.25 * dlambda2 * cov.grad_form(diamond_basis(m + 1), diamond_basis(n + 1));
    const double tscale = std::max(1.0, t.cwiseAbs().maxCoeff());
    if (std::abs(t(3, 3)) > 1e-12 * tscale)
        throw std::runtime_error("DriverSampler: grad covariance has a trace component");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eg(t.topLeftCorner<3, 3>());
    for (int k = 0; k < 3; ++k) {
        const double lam = eg.eigenvalues()(k);
        if (lam < -1e-12 * tscale) {
            std::ostringstream os;
            os << "DriverSampler: grad covariance not PSD, eigenvalue " << lam;
            throw std::runtime_error(os.str());
        }
        const double s = std::sqrt(std::max(lam, 0.0));
        for (int p = 0; p < 3; ++p) grad_factor_[3 * p + k] = eg.eigenvectors()(p, k) * s;
    }
}

DriverIncrement DriverSampler::draw(NormalStream& rng) const {
    DriverIncrement inc;
    inc.dlambda2 = dlambda2_;
    double z[8];
    for (int k = 0; k < phi_hess_rank_; ++k) z[k] = rng();
    double v[8];
    for (int p = 0; p < 8; ++p) {
        double s = 0.0;
        for (int k = 0; k < phi_hess_rank_; ++k) s += phi_hess_factor_[8 * p + k] * z[k];
        v[p] = s;
    }
    inc.dphi = TanVec{{v[0], v[1]}};
    inc.hess = SymTriTensor::from_components({v[2], v[3], v[4], v[5], v[6], v[7]});

    const double w[3] = {rng(), rng(), rng()};
    double c[3];
    for (int p = 0; p < 3; ++p)
        c[p] = grad_factor_[3 * p] * w[0] + grad_factor_[3 * p + 1] * w[1] + grad_factor_[3 * p + 2] * w[2];
    // c1 E^1 + c2 E^2 + c3 E^3, trace-free by construction.
    inc.grad = Endo2::from(c[0], c[1] + c[2], c[1] - c[2], -c[0]);
    return inc;
}

DriverIncrement sample_increment(const DriverCovariance& cov, double dlambda2, NormalStream& rng) {
    return DriverSampler(cov, dlambda2).draw(rng);
}

FourTensor cprime_spectrum(const CoVec& k, double eps, double Lmax) {
    const double k2 = k.norm2();
    if (!(k2 > 0.0)) throw std::invalid_argument("cprime_spectrum: k = 0");
    FourTensor out{};
    const double kn = std::sqrt(k2);
    if (kn <= 1.0 / Lmax || kn > 1.0) return out;
    const double pref = eps * eps / (1.0 - eps * eps * std::log(kn)) / (k2 * k2 * k2);
    const double jk[2] = {-k[1], k[0]};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d) out[((a * 2 + b) * 2 + c) * 2 + d] = pref * jk[a] * k[b] * jk[c] * k[d];
    return out;
}

}  // namespace critdiff
