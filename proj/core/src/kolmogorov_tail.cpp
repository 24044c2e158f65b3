#include "critdiff/kolmogorov_tail.hpp"

#include "critdiff/errors.hpp"
#include "critdiff/moment_odes.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace critdiff {

double smoothstep(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double smoothstep_d1(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double w = u * (1.0 - u);
    return 30.0 * w * w;
}

double smoothstep_d2(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

void TailConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("kolmogorov-tail: tau must be positive");
    if (!std::isfinite(sigma_hat)) throw ValidationError("kolmogorov-tail: sigma_hat must be finite");
    if (resolution < 1000) throw ValidationError("kolmogorov-tail: resolution must be at least 1000");
    if (tau_slices < 16) throw ValidationError("kolmogorov-tail: tau_slices must be at least 16");
    if (!(margin > 0.0)) throw ValidationError("kolmogorov-tail: margin must be positive");
}

double TailConfig::lambda() const { return std::exp(0.5 * tau); }

double regime_rhat(double lambda2, double margin) {
    if (!(lambda2 > 1.0)) throw ValidationError("regime_rhat: lambda2 must exceed 1");
    const double lam = std::sqrt(lambda2);
    return margin * std::sqrt(lam) * std::exp(-std::sqrt(2.0 * std::log(lam)));
}

TailConfig tail_config_for(double lambda2, double rhat, double mean_F2) {
    if (!(lambda2 > 1.0) || !(rhat > 0.0) || !(mean_F2 > 0.0))
        throw ValidationError("tail_config_for: requires lambda2 > 1, rhat > 0, mean_F2 > 0");
    TailConfig c;
    c.tau = std::log(lambda2);
    c.sigma_hat = std::log(rhat * mean_F2 / std::sqrt(lambda2));
    return c;
}

double TailProfile::reference(double s) const {
    const double vl = v.front(), vr = v.back();
    return vr + (vl - vr) * normal_cdf((ref_c - s) / ref_w);
}

TailProfile terminal_zeta(double sigma_hat, double tau, double lo, double hi, std::size_t n) {
    if (!(hi > lo) || n < 3) throw ValidationError("terminal_zeta: need hi > lo and n >= 3");
    if (!(lo < sigma_hat - 3.0) || !(hi > sigma_hat + 4.0))
        throw ValidationError("terminal_zeta: grid must contain the ramp with flat margins");
    TailProfile p;
    p.tau_prime = tau;
    p.sigma0 = lo;
    p.h = (hi - lo) / static_cast<double>(n - 1);
    p.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.v[i] = 1.0 - smoothstep(p.sigma(i) - sigma_hat);
    p.ref_c = sigma_hat + 0.5;
    p.ref_w = 0.3;
    return p;
}

TailProfile terminal_zeta(const TailConfig& cfg) {
    cfg.validate();
    const double sd = std::sqrt(0.5 * cfg.tau);
    return terminal_zeta(cfg.sigma_hat, cfg.tau, cfg.sigma_hat - 0.25 * cfg.tau - 10.0 * sd - 4.0,
                         cfg.sigma_hat + 1.0 + 10.0 * sd + 4.0, cfg.resolution);
}

TailProfile evolve(const TailProfile& p, double dtau) {
    if (!(dtau > 0.0)) throw ValidationError("evolve: dtau must be positive");
    if (dtau > p.tau_prime * (1.0 + 1e-12)) throw ValidationError("evolve: cannot evolve past tau' = 0");
    const double sd = std::sqrt(0.5 * dtau), mu = 0.25 * dtau;
    if (sd < 2.0 * p.h) {
        std::ostringstream os;
        os << "evolve: kernel std " << sd << " is below two grid cells (h = " << p.h << ")";
        throw ValidationError(os.str());
    }
    const std::size_t n = p.v.size();
    std::vector<double> res(n);
    for (std::size_t j = 0; j < n; ++j) res[j] = p.v[j] - p.reference(p.sigma(j));

    TailProfile q = p;
    q.tau_prime = std::max(0.0, p.tau_prime - dtau);
    q.ref_c = p.ref_c - mu;
    q.ref_w = std::hypot(p.ref_w, sd);
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(12.0 * sd / p.h));
    const double norm = p.h / sd;
    for (std::size_t i = 0; i < n; ++i) {
        const double si = p.sigma(i);
        const auto c = static_cast<std::ptrdiff_t>(std::lround((si + mu - p.sigma0) / p.h));
        const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, c - reach);
        const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, c + reach);
        double acc = 0.0;
        for (std::ptrdiff_t j = j0; j <= j1; ++j)
            acc += res[static_cast<std::size_t>(j)] * normal_pdf((p.sigma(static_cast<std::size_t>(j)) - si - mu) / sd);
        q.v[i] = q.reference(si) + norm * acc;
    }
    q.v.front() = p.v.front();
    q.v.back() = p.v.back();
    return q;
}

ZetaHat zeta_hat(double sigma_hat, double dtau, double sigma) {
    const double u0 = sigma - sigma_hat;
    if (!(dtau > 0.0)) return {1.0 - smoothstep(u0), -smoothstep_d1(u0), -smoothstep_d2(u0)};
    const double sd = std::sqrt(0.5 * dtau), mu = 0.25 * dtau;
    // sigma + X lands at u = u0 + X on the ramp.
    const double uc = u0 + mu;
    ZetaHat z;
    z.v = normal_cdf((sigma_hat - sigma - mu) / sd);
    const double a = std::max(0.0, uc - 10.0 * sd), b = std::min(1.0, uc + 10.0 * sd);
    if (!(b > a)) return z;
    const int panels = static_cast<int>(std::ceil((b - a) / std::min(sd, 1.0)));
    const double w = (b - a) / panels;
    using GL = boost::math::quadrature::gauss<double, 10>;
    const auto& x = GL::abscissa();
    const auto& wt = GL::weights();
    for (int k = 0; k < panels; ++k) {
        const double mid = a + (k + 0.5) * w, half = 0.5 * w;
        for (std::size_t m = 0; m < x.size(); ++m) {
            for (int sgn : {-1, 1}) {
                if (m == 0 && sgn < 0 && x[0] == 0.0) continue;
                const double u = mid + sgn * half * x[m];
                const double g = wt[m] * half * normal_pdf((u - uc) / sd) / sd;
                z.v += g * (1.0 - smoothstep(u));
                z.d1 -= g * smoothstep_d1(u);
                z.d2 -= g * smoothstep_d2(u);
            }
        }
    }
    return z;
}

double phi_bound(double sigma_hat, double dtau, double sigma) {
    if (!(dtau > 0.0)) return sigma <= sigma_hat + 1.0 ? 1.0 : 0.0;
    return normal_cdf((sigma_hat + 1.0 - sigma - 0.25 * dtau) / std::sqrt(0.5 * dtau));
}

double zeta_at_origin(const TailConfig& cfg) {
    cfg.validate();
    return 2.0 * zeta_hat(cfg.sigma_hat, cfg.tau, std::numbers::ln2).v;
}

double zeta_terminal(const TailConfig& cfg, double r) {
    if (!(r > 0.0)) return 0.0;
    const double rhat = r / cfg.lambda();
    return rhat * (1.0 - smoothstep(std::log(rhat) - cfg.sigma_hat));
}

namespace {

// sup_sigma |zeta^_ss + zeta^_s| and sup_sigma |zeta^_s + zeta^| at lag dtau.
std::pair<double, double> slice_sups(double sigma_hat, double dtau, std::size_t n) {
    const double sd = std::sqrt(0.5 * std::max(dtau, 0.0)), mu = 0.25 * dtau;
    const double lo = sigma_hat - mu - 8.0 * sd - 0.05, hi = sigma_hat + 1.0 - mu + 8.0 * sd + 0.05;
    double s1 = 0.0, s2 = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const auto z = zeta_hat(sigma_hat, dtau, s);
        s1 = std::max(s1, std::abs(z.d2 + z.d1));
        s2 = std::max(s2, std::abs(z.d1 + z.v));
    }
    return {s1, s2};
}

}  // namespace

BoundTerms bound_terms(const TailConfig& cfg) {
    cfg.validate();
    const double tau = cfg.tau;
    // Uniform panels where the e^{-tau'/2} weight lives, geometric panels in
    // the lag near tau' = tau where the profile sharpens.
    const std::size_t half = cfg.tau_slices / 8;
    std::vector<double> edges{0.0, tau};
    const double span = std::min(tau, 40.0);
    for (std::size_t k = 1; k < half; ++k) edges.push_back(span * static_cast<double>(k) / static_cast<double>(half));
    const double d0 = std::min(1e-4, tau / 2.0);
    const double ratio = std::pow(tau / d0, 1.0 / static_cast<double>(half));
    for (double d = d0; d < tau; d *= ratio) edges.push_back(tau - d);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(), [](double a, double b) { return b - a < 1e-12; }), edges.end());

    using GL = boost::math::quadrature::gauss<double, 4>;
    BoundTerms bt;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double mid = 0.5 * (edges[e] + edges[e + 1]), hw = 0.5 * (edges[e + 1] - edges[e]);
        for (std::size_t m = 0; m < GL::abscissa().size(); ++m) {
            for (int sgn : {-1, 1}) {
                const double tp = mid + sgn * hw * GL::abscissa()[m];
                const auto [s1, s2] = slice_sups(cfg.sigma_hat, tau - tp, cfg.resolution);
                const double w = GL::weights()[m] * hw, decay = std::exp(-0.5 * tp);
                bt.I1 += w * decay * s1;
                bt.I2 += w * std::exp(-tp) * decay * s2;
            }
        }
    }
    return bt;
}

TailReport verify_tail(const std::vector<double>& F2, double eps, const TailConfig& cfg) {
    cfg.validate();
    if (F2.size() < 2) throw ValidationError("verify_tail: need at least two samples");
    if (!(eps >= 0.0)) throw ValidationError("verify_tail: eps must be non-negative");
    TailReport r;
    r.eps = eps;
    r.tau = cfg.tau;
    r.lambda2 = std::exp(cfg.tau);
    r.sigma_hat = cfg.sigma_hat;
    const double lam = cfg.lambda(), cut = lam * std::exp(cfg.sigma_hat);
    const double n = static_cast<double>(F2.size());

    double m1 = 0.0, m2 = 0.0, z1 = 0.0, z2 = 0.0, f1 = 0.0;
    for (double f : F2) {
        if (!std::isfinite(f) || f < 0.0) throw NumericError("verify_tail: invalid |F|^2 sample");
        const double t = f <= cut ? f / lam : 0.0;
        const double z = zeta_terminal(cfg, f);
        m1 += t;
        m2 += t * t;
        z1 += z;
        z2 += z * z;
        f1 += f;
    }
    r.mean_F2 = f1 / n;
    r.lhs = m1 / n;
    r.lhs_se = std::sqrt(std::max(0.0, m2 / n - r.lhs * r.lhs) / (n - 1.0));
    r.e_zeta = z1 / n;
    r.e_zeta_se = std::sqrt(std::max(0.0, z2 / n - r.e_zeta * r.e_zeta) / (n - 1.0));

    const auto k = envelope_constants(eps);
    const double e2 = eps * eps;
    r.zeta0 = zeta_at_origin(cfg);
    const auto bt = bound_terms(cfg);
    r.I1 = bt.I1;
    r.I2 = bt.I2;
    r.c = 0.5 * std::sqrt(1.0 + k.kappa_pp * e2) + 2.0 * k.kappa_bullet * k.c3 * e2;
    r.c_prime = 0.5 * k.c3;
    r.rhs = r.zeta0 + r.c * r.I1 + e2 * r.c_prime * r.I2;
    r.truncated_ratio = r.mean_F2 > 0.0 ? r.lhs * lam / r.mean_F2 : 0.0;
    r.chain_holds = r.lhs <= r.e_zeta + 1e-12 && r.e_zeta <= r.rhs + 3.0 * r.e_zeta_se;

    if (eps == 0.0) r.warnings.emplace_back("eps = 0: F is the identity and the tail is degenerate");
    if (r.lambda2 > 1.0 && r.mean_F2 > 0.0) {
        const double rhat = cut / r.mean_F2, bound = regime_rhat(r.lambda2, cfg.margin);
        if (rhat > bound) {
            std::ostringstream os;
            os << "truncation rhat = " << rhat << " exceeds the regime bound " << bound << " at margin " << cfg.margin;
            r.warnings.push_back(os.str());
        }
    }
    if (0.25 * cfg.tau - cfg.sigma_hat < std::sqrt(cfg.tau))
        r.warnings.emplace_back("tau/4 - sigma_hat < sqrt(tau): the Gaussian tail bound is not small");
    return r;
}

}  // namespace critdiff
