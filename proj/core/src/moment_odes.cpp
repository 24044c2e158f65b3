#include "critdiff/moment_odes.hpp"

#include "critdiff/errors.hpp"
#include "quadrature.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <sstream>

namespace critdiff {

namespace odeint = boost::numeric::odeint;
using State = std::array<double, 6>;

double MomentVector::log_a() const { return std::log(a_hat) + 2.0 * lnL; }
double MomentVector::log_b() const { return std::log(b_hat) + 4.0 * lnL; }

ClosureSource ClosureSource::mc(const MomentSeries& series) {
    ClosureSource c;
    c.mode_ = ClosureMode::mc;
    c.series_ = &series;
    return c;
}

ClosureSource ClosureSource::bound() { return ClosureSource{}; }

void ClosureSource::check_range(double x_end, double eps) const {
    if (mode_ == ClosureMode::bound) return;
    const auto& s = *series_;
    if (s.lambda2.size() < 2 || s.lambda2.front() > 1.0 || s.lambda2.back() < x_end * (1.0 - 1e-14))
        throw ValidationError("moment-odes: mc closure series does not cover [1, x_end]");
    if (std::abs(s.eps - eps) > 1e-12 * eps) throw ValidationError("moment-odes: mc closure series has a different eps");
}

std::array<double, 3> ClosureSource::eval(const MomentVector& m) const {
    if (mode_ == ClosureMode::mc) {
        const auto& s = *series_;
        const double x = std::min(m.x, s.lambda2.back());
        if (m.x < s.lambda2.front() || m.x > s.lambda2.back() * (1.0 + 1e-12))
            throw ValidationError("moment-odes: mc closure evaluated outside its series");
        return {s.interp(kMix, x), s.interp(kBulletF, x), s.interp(kBulletAdj, x)};
    }
    const double r = std::sqrt(std::max(m.b_hat, 0.0) * std::max(m.B, 0.0));
    static const double kb = bullet_operator_norm();
    return {r, kb * r, kb * r};
}

std::array<double, 6> rhs(const MomentVector& m, double eps, const ClosureSource& closure) {
    if (!(m.x >= 1.0)) throw ValidationError("moment-odes: rhs requires x >= 1");
    const double x = m.x, e2 = eps * eps;
    const auto cl = closure.eval(m);
    return {m.a_hat / (2 * x) + 1.0 / x - 2.0 * m.a_hat / e2,
            1.5 * m.b_hat / x + 4.0 * m.a_hat / x - 4.0 * m.b_hat / e2,
            (m.A + m.a_hat) / (2 * x),
            (1.5 * m.B - 2.0 * m.C) / x + (cl[0] + 4.0 * cl[1]) / x,
            cl[2] / x,
            0.0};
}

namespace {

MomentVector unpack(const State& s, double x, double eps) {
    MomentVector m;
    m.x = x;
    m.lnL = lnL_of(x, eps);
    m.a_hat = s[0];
    m.b_hat = s[1];
    m.A = s[2];
    m.B = s[3];
    m.C = s[4];
    m.D = s[5];
    return m;
}

template <class System, class Observer>
void run_adaptive(System&& sys, State& s, const std::vector<double>& times, const OdeOptions& opt, Observer&& obs,
                  const char* who) {
    auto stepper = odeint::make_controlled(opt.abs_tol, opt.rel_tol, odeint::runge_kutta_cash_karp54<State>());
    const double dt0 = std::max(1e-8, 1e-3 * (times.back() - times.front()));
    try {
        odeint::integrate_times(stepper, sys, s, times.begin(), times.end(), dt0, obs,
                                odeint::max_step_checker(static_cast<int>(opt.max_steps)));
    } catch (const std::exception& e) {
        std::ostringstream os;
        os << who << ": integration failed (" << e.what() << ")";
        throw NumericError(os.str());
    }
}

}  // namespace

std::vector<MomentVector> integrate(double eps, double x_end, const ClosureSource& closure,
                                    std::vector<double> x_out, const OdeOptions& opt) {
    if (!(eps > 0.0)) throw ValidationError("moment-odes: eps must be positive");
    if (!(x_end > 1.0)) throw ValidationError("moment-odes: x_end must exceed 1");
    closure.check_range(x_end, eps);
    if (x_out.empty()) {
        if (closure.mode() == ClosureMode::mc) {
            for (double x : closure.series()->lambda2)
                if (x < x_end) x_out.push_back(x);
            x_out.push_back(x_end);
        } else {
            for (int i = 0; i <= 200; ++i) x_out.push_back(1.0 + (x_end - 1.0) * i / 200.0);
            x_out.back() = x_end;
        }
    }
    for (std::size_t i = 0; i < x_out.size(); ++i)
        if (x_out[i] < 1.0 || x_out[i] > x_end || (i > 0 && !(x_out[i] > x_out[i - 1])))
            throw ValidationError("moment-odes: output points must increase within [1, x_end]");
    if (x_out.front() != 1.0) x_out.insert(x_out.begin(), 1.0);

    State s{0.0, 0.0, 2.0, 4.0, 1.0, 1.0};
    auto sys = [&](const State& y, State& dy, double x) { dy = rhs(unpack(y, x, eps), eps, closure); };
    std::vector<MomentVector> out;
    out.reserve(x_out.size());
    run_adaptive(sys, s, x_out, opt, [&](const State& y, double x) { out.push_back(unpack(y, x, eps)); },
                 "moment-odes");
    return out;
}

namespace {

// I(y) = int_1^y e^{-2(y-z)/eps^2} z^{-3/2} dz, so that a^(y) = sqrt(y) I(y).
double inner_I(double y, double eps) {
    const double e2 = eps * eps;
    auto f = [&](double s) { return std::exp(-2.0 * s / e2) * std::pow(y - s, -1.5); };
    return detail::panel_quadrature(f, 0.0, std::min(y - 1.0, 20.0 * e2), 0.5 * e2);
}

}  // namespace

double exact_a_hat(double x, double eps) {
    if (!(x >= 1.0) || !(eps > 0.0)) throw ValidationError("exact_a: requires x >= 1, eps > 0");
    return std::sqrt(x) * inner_I(x, eps);
}

double exact_b_hat(double x, double eps) {
    if (!(x >= 1.0) || !(eps > 0.0)) throw ValidationError("exact_b: requires x >= 1, eps > 0");
    const double e2 = eps * eps;
    auto f = [&](double s) {
        const double y = x - s;
        return std::exp(-4.0 * s / e2) * inner_I(y, eps) / (y * y);
    };
    return 4.0 * std::pow(x, 1.5) * detail::panel_quadrature(f, 0.0, std::min(x - 1.0, 10.0 * e2), 0.25 * e2);
}

double exact_A(double x, double eps) {
    if (!(x >= 1.0) || !(eps > 0.0)) throw ValidationError("exact_A: requires x >= 1, eps > 0");
    const double e2 = eps * eps;
    auto f = [&](double y) { return inner_I(y, eps) / y; };
    const double knee = std::min(x, 1.0 + 40.0 * e2);
    const double head = detail::panel_quadrature(f, 1.0, knee, 0.5 * e2);
    const double tail = detail::panel_quadrature(f, knee, x, 0.25);
    return std::sqrt(x) * (2.0 + 0.5 * (head + tail));
}

double exact_a(double x, double eps) { return exact_a_hat(x, eps) * std::exp(2.0 * lnL_of(x, eps)); }
double exact_b(double x, double eps) { return exact_b_hat(x, eps) * std::exp(4.0 * lnL_of(x, eps)); }

Asymptotics asymptotics(double x, double eps) {
    if (!(x >= 1.0) || !(eps > 0.0)) throw ValidationError("asymptotics: requires x >= 1, eps > 0");
    Asymptotics r;
    r.lnL = lnL_of(x, eps);
    r.a_hat = eps * eps / (2.0 * x);
    r.b_hat = 2.0 * r.a_hat * r.a_hat;
    r.A = 2.0 * std::sqrt(x);
    r.B = 8.0 / 3.0 * std::pow(x, 1.5) + 4.0 / 3.0;
    return r;
}

EnvelopeConstants envelope_constants(double eps) {
    if (!(eps >= 0.0)) throw ValidationError("envelope_constants: eps must be non-negative");
    EnvelopeConstants k;
    k.eps = eps;
    const double e2 = eps * eps;
    k.c3 = detail::panel_quadrature([&](double u) { return std::pow(1.0 + e2 * u, 1.5) * std::exp(-2.0 * u); }, 0.0,
                                    40.0, 0.5);
    k.c7 = detail::panel_quadrature([&](double u) { return std::pow(1.0 + e2 * u, 3.5) * std::exp(-4.0 * u); }, 0.0,
                                    20.0, 0.25);
    k.kappa_bullet = bullet_operator_norm();
    const double root = std::sqrt(4.0 * k.c3 * k.c7);
    k.kappa = k.kappa_bullet * root;
    k.kappa_B = (1.0 + 4.0 * k.kappa_bullet) * root;
    k.kappa_p = 2.0 / 7.0 * k.kappa_B;
    k.kappa_pp = 4.0 * k.kappa * (2.0 + k.kappa_p * e2);
    k.kappa_Y = 4.0 / 7.0 * (1.5 * k.kappa_B + 2.0 * k.kappa) * (2.0 + k.kappa_p * e2);
    return k;
}

Envelope envelope_BC(double eps, double x_end, std::size_t n_points) {
    if (!(x_end > 1.0)) throw ValidationError("envelope_BC: x_end must exceed 1");
    if (n_points < 2) throw ValidationError("envelope_BC: need at least two points");
    Envelope env;
    env.k = envelope_constants(eps);
    const auto& k = env.k;
    const double e2 = eps * eps;
    std::vector<double> xs(n_points);
    for (std::size_t i = 0; i < n_points; ++i)
        xs[i] = 1.0 + (x_end - 1.0) * static_cast<double>(i) / static_cast<double>(n_points - 1);
    xs.back() = x_end;

    // (Y_hi, Y_lo, Delta) with Y = B / x^{3/2} and |C - 1| <= Delta.
    State s{4.0, 4.0, 0.0, 0.0, 0.0, 0.0};
    auto sys = [&](const State& y, State& dy, double x) {
        const double rt = std::sqrt(std::max(y[0], 0.0));
        dy = {-2.0 * (1.0 - y[2]) * std::pow(x, -2.5) + k.kappa_B * e2 * rt * std::pow(x, -2.75),
              -2.0 * (1.0 + y[2]) * std::pow(x, -2.5),
              k.kappa * e2 * rt * std::pow(x, -1.25),
              0.0,
              0.0,
              0.0};
    };
    run_adaptive(sys, s, xs, OdeOptions{}, [&](const State& y, double x) {
        const double x32 = std::pow(x, 1.5);
        env.x.push_back(x);
        env.a_hat_hi.push_back(k.c3 * e2 / x);
        env.b_hat_hi.push_back(4.0 * k.c3 * k.c7 * e2 * e2 / (x * x));
        env.B_hi.push_back(x32 * y[0]);
        env.B_lo.push_back(x32 * y[1]);
        env.C_hi.push_back(1.0 + y[2]);
        env.C_lo.push_back(1.0 - y[2]);
        env.B_crude.push_back(x32 * (2.0 + k.kappa_p * e2) * (2.0 + k.kappa_p * e2));
        env.C_crude_dev.push_back(k.kappa_pp * e2);
    }, "envelope_BC");
    return env;
}

}  // namespace critdiff
