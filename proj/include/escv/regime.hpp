#pragma once
#include <escv/distributions.hpp>
#include <escv/loss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace escv {
namespace regime {

/*
 * Asymptotic norm of an M-estimator when p/n -> kappa in (0, 1), identity
 * design covariance and beta = 0. With z = e + r Z (Z standard normal,
 * independent of the error e), the limiting norm r and a constant c >= 0
 * solve
 *
 *      E[ prox_c'(z) ]           = 1 - kappa
 *      E[ (z - prox_c(z))^2 ]    = kappa r^2
 *
 * The prox derivative is evaluated at z.
 */

struct Quad
{
    double value = 0.0;
    double error = 0.0;
};

inline constexpr double quad_tol = 1e-10;

namespace detail {

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Phi(b) - Phi(a) for a <= b, accurate in both tails.
inline double normal_mass(double a, double b)
{
    if (a >= 0.0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
    if (b <= 0.0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
    return 1.0 - 0.5 * (std::erfc(-a / std::numbers::sqrt2) + std::erfc(b / std::numbers::sqrt2));
}

// exp(u^2) erfc(u) for u >= 0.
inline double erfcx(double u)
{
    if (u < 25.0) return std::exp(u * u) * std::erfc(u);
    const double inv = 1.0 / (u * u);
    // asymptotic series, terms (2k-1)!! / (-2u^2)^k
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 6; ++k) {
        term *= -(2.0 * k - 1.0) * 0.5 * inv;
        sum += term;
    }
    return sum / (u * std::sqrt(std::numbers::pi));
}

template <class F>
Quad integrate(F&& f, double a, double b)
{
    using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
    double err = 0.0;
    const double v = gk::integrate(f, a, b, 10, 1e-13, &err);
    return {v, err};
}

// Sum of integrals over consecutive pieces of the real line split at `cuts`.
template <class F>
Quad integrate_split(F&& f, std::vector<double> cuts, double lo = -std::numeric_limits<double>::infinity(),
                     double hi = std::numeric_limits<double>::infinity())
{
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<double> pts{lo};
    for (double c : cuts) {
        if (c > lo && c < hi) pts.push_back(c);
    }
    pts.push_back(hi);
    Quad q;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Quad piece = integrate(f, pts[k], pts[k + 1]);
        q.value += piece.value;
        q.error += piece.error;
    }
    return q;
}

} // namespace detail

/*
 * Distribution of z = e + r Z.
 */
class Zhat
{
public:
    Zhat(ErrorDist dist, double r) : dist_(dist), r_(r)
    {
        if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument("r must be finite and >= 0");
    }

    const ErrorDist& dist() const { return dist_; }
    double r() const { return r_; }

    double second_moment() const { return dist_.variance() + r_ * r_; }

    // P(|z| <= t)
    Quad prob_within(double t) const
    {
        if (t <= 0.0) return {};
        if (gaussian_like()) {
            const double s = total_sd();
            if (s == 0.0) return {1.0, 0.0};
            return {1.0 - std::erfc(t / (s * std::numbers::sqrt2)), 0.0};
        }
        const double b = dist_.scale();
        if (r_ == 0.0) return {-std::expm1(-t / b), 0.0};
        // symmetric in e: twice the integral over e >= 0
        auto f = [&](double e) {
            return dist_.pdf(e) * detail::normal_mass((-t - e) / r_, (t - e) / r_);
        };
        Quad q = detail::integrate_split(f, {t}, 0.0);
        q.value *= 2.0;
        q.error *= 2.0;
        return q;
    }

    // E[z^2 1{|z| <= t}]
    Quad truncated_second_moment(double t) const
    {
        if (t <= 0.0) return {};
        if (gaussian_like()) {
            const double s = total_sd();
            if (s == 0.0) return {};
            const double u = t / s;
            const double mass = 1.0 - std::erfc(u / std::numbers::sqrt2);
            return {s * s * (mass - 2.0 * u * detail::phi(u)), 0.0};
        }
        const double b = dist_.scale();
        if (r_ == 0.0) {
            const double u = t / b;
            return {b * b * (2.0 - std::exp(-u) * (u * u + 2.0 * u + 2.0)), 0.0};
        }
        auto f = [&](double e) {
            const double lo = (-t - e) / r_;
            const double hi = (t - e) / r_;
            const double mass = detail::normal_mass(lo, hi);
            const double plo = detail::phi(lo), phi_hi = detail::phi(hi);
            const double m = e * e * mass + 2.0 * e * r_ * (plo - phi_hi)
                           + r_ * r_ * (mass + lo * plo - hi * phi_hi);
            return dist_.pdf(e) * m;
        };
        Quad q = detail::integrate_split(f, {t}, 0.0);
        q.value *= 2.0;
        q.error *= 2.0;
        return q;
    }

    /*
     * Density of z. For double-exponential errors the convolution has the
     * closed form
     *   (1/4b) sum_{s=+-1} exp(r^2/2b^2 - s x/b) erfc((r/b - s x/r)/sqrt2),
     * evaluated through erfcx to avoid overflow.
     */
    double density(double x) const
    {
        if (gaussian_like()) {
            const double s = total_sd();
            if (s == 0.0) throw InvalidArgument("z is a point mass at 0; no density");
            return detail::phi(x / s) / s;
        }
        if (r_ == 0.0) return dist_.pdf(x);
        const double b = dist_.scale();
        auto term = [&](double xs) {
            const double u = (r_ / b - xs / r_) / std::numbers::sqrt2;
            if (u >= 0.0) return std::exp(-0.5 * xs * xs / (r_ * r_)) * detail::erfcx(u);
            return std::exp(0.5 * r_ * r_ / (b * b) - xs / b) * std::erfc(u);
        };
        return (term(x) + term(-x)) / (4.0 * b);
    }

private:
    bool gaussian_like() const { return dist_.family() == ErrorDist::Family::gaussian; }
    double total_sd() const { return std::sqrt(second_moment()); }

    ErrorDist dist_;
    double r_;
};

/*
 * E[g(e + r Z)] by adaptive Gauss-Kronrod quadrature against the density of
 * z, split at g's breakpoints and at 0. Throws NumericalError if the error
 * estimate exceeds quad_tol * max(1, |value|).
 */
inline Quad zhat_expectation(const std::function<double(double)>& g, double r, const ErrorDist& dist,
                             std::vector<double> breakpoints = {})
{
    const Zhat z(dist, r);
    if (dist.degenerate() && r == 0.0) return {g(0.0), 0.0};
    breakpoints.push_back(0.0);
    auto f = [&](double x) {
        const double dens = z.density(x);
        return dens == 0.0 ? 0.0 : g(x) * dens;
    };
    Quad q = detail::integrate_split(f, breakpoints);
    if (!(q.error <= quad_tol * std::max(1.0, std::abs(q.value)))) {
        throw NumericalError("quadrature did not converge: value " + std::to_string(q.value)
                             + ", error estimate " + std::to_string(q.error));
    }
    return q;
}

/*
 * Left-hand sides of the two equations at (r, c), with their accumulated
 * quadrature error estimate.
 */
struct SystemValues
{
    double derivative_mean = 0.0;  // E[prox_c'(z)]
    double risk = 0.0;             // E[(z - prox_c(z))^2]
    double quad_error = 0.0;
};

// Expected prox derivative only; used by the inner solve for c.
inline Quad derivative_mean(const LossSpec& loss, const Zhat& z, double c)
{
    const double t = loss.scale * c;
    switch (loss.family) {
        case LossSpec::Family::squared:
            return {1.0 / (1.0 + 2.0 * t), 0.0};
        case LossSpec::Family::absolute: {
            const Quad inside = z.prob_within(t);
            return {1.0 - inside.value, inside.error};
        }
        case LossSpec::Family::huber: {
            const double d = loss.huber_delta;
            const Quad inside = z.prob_within(d + t);
            return {d / (d + t) * inside.value + 1.0 - inside.value, inside.error};
        }
    }
    return {};
}

inline SystemValues evaluate_system(const LossSpec& loss, const ErrorDist& dist, double r, double c)
{
    const Zhat z(dist, r);
    const double t = loss.scale * c;
    SystemValues sv;
    const Quad dm = derivative_mean(loss, z, c);
    sv.derivative_mean = dm.value;
    sv.quad_error = dm.error;
    switch (loss.family) {
        case LossSpec::Family::squared: {
            const double shrink = 2.0 * t / (1.0 + 2.0 * t);
            sv.risk = shrink * shrink * z.second_moment();
            break;
        }
        case LossSpec::Family::absolute: {
            const Quad inside = z.prob_within(t);
            const Quad m2 = z.truncated_second_moment(t);
            sv.risk = m2.value + t * t * (1.0 - inside.value);
            sv.quad_error += m2.error + t * t * inside.error;
            break;
        }
        case LossSpec::Family::huber: {
            const double d = loss.huber_delta;
            const Quad inside = z.prob_within(d + t);
            const Quad m2 = z.truncated_second_moment(d + t);
            const double shrink = t / (d + t);
            sv.risk = shrink * shrink * m2.value + t * t * (1.0 - inside.value);
            sv.quad_error += shrink * shrink * m2.error + t * t * inside.error;
            break;
        }
    }
    return sv;
}

struct RegimeSolution
{
    double kappa = 0.0;
    LossSpec loss;
    ErrorDist error_dist = ErrorDist::gaussian(1.0);
    double r = 0.0;
    double c = 0.0;
    double residual_derivative = 0.0;  // E[prox'] - (1 - kappa)
    double residual_risk = 0.0;        // E[(z - prox)^2] - kappa r^2
    double quadrature_error_estimate = 0.0;
    int outer_evaluations = 0;
};

inline constexpr double residual_tol = 1e-8;

// r for squared loss: r^2 = kappa sigma^2 / (1 - kappa).
inline double squared_loss_r(const ErrorDist& dist, double kappa)
{
    return std::sqrt(kappa * dist.variance() / (1.0 - kappa));
}

namespace detail {

inline void check_kappa(double kappa)
{
    if (!(kappa > 0.0 && kappa < 1.0)) {
        throw InvalidArgument("kappa must lie in (0, 1), got " + std::to_string(kappa));
    }
}

/*
 * Inner solve: c with E[prox_c'(z)] = 1 - kappa. The left side decreases
 * from 1 at c = 0 towards 0 (squared loss: closed form).
 */
inline double solve_c(const LossSpec& loss, const Zhat& z, double kappa)
{
    if (loss.family == LossSpec::Family::squared) return kappa / (2.0 * (1.0 - kappa)) / loss.scale;
    auto h = [&](double c) { return derivative_mean(loss, z, c).value - (1.0 - kappa); };
    double hi = std::max(1.0, std::sqrt(z.second_moment())) / loss.scale;
    int expand = 0;
    while (h(hi) > 0.0) {
        hi *= 2.0;
        if (++expand > 200) throw NumericalError("could not bracket c");
    }
    std::uintmax_t iters = 200;
    boost::math::tools::eps_tolerance<double> tol(52);
    const auto [a, b] = boost::math::tools::toms748_solve(h, 0.0, hi, kappa, h(hi), tol, iters);
    return 0.5 * (a + b);
}

} // namespace detail

/*
 * Solve for (r, c). Inner: c from the derivative equation given r. Outer:
 * bracketed TOMS-748 root find in r on F(r) = E[(z - prox)^2] - kappa r^2,
 * starting from [r_LS/4, 4 r_LS] (or [guess/2, 2 guess]) and expanding
 * geometrically.
 */
inline RegimeSolution solve_system(const LossSpec& loss, const ErrorDist& dist, double kappa,
                                   std::optional<double> r_guess = {})
{
    detail::check_kappa(kappa);
    if (dist.degenerate()) throw InvalidArgument("noiseless errors give r = 0; nothing to solve");

    RegimeSolution sol;
    sol.kappa = kappa;
    sol.loss = loss;
    sol.error_dist = dist;

    int evals = 0;
    auto F = [&](double r) {
        ++evals;
        const Zhat z(dist, r);
        const double c = detail::solve_c(loss, z, kappa);
        return evaluate_system(loss, dist, r, c).risk - kappa * r * r;
    };

    const double r_ls = squared_loss_r(dist, kappa);
    double lo = r_guess && *r_guess > 0.0 ? 0.5 * *r_guess : 0.25 * r_ls;
    double hi = r_guess && *r_guess > 0.0 ? 2.0 * *r_guess : 4.0 * r_ls;
    const double lo0 = lo, hi0 = hi;
    double flo = F(lo), fhi = F(hi);
    for (int k = 0; k < 60 && flo <= 0.0; ++k) {
        lo *= 0.5;
        flo = F(lo);
    }
    for (int k = 0; k < 60 && fhi >= 0.0; ++k) {
        hi *= 2.0;
        fhi = F(hi);
    }
    if (!(flo > 0.0 && fhi < 0.0)) {
        throw NumericalError("no sign change of the risk equation for r in ["
                             + std::to_string(std::min(lo, lo0)) + ", "
                             + std::to_string(std::max(hi, hi0)) + "] at kappa="
                             + std::to_string(kappa));
    }
    if (loss.family == LossSpec::Family::squared) {
        sol.r = r_ls;
    } else {
        std::uintmax_t iters = 200;
        boost::math::tools::eps_tolerance<double> tol(50);
        const auto [a, b] = boost::math::tools::toms748_solve(F, lo, hi, flo, fhi, tol, iters);
        sol.r = 0.5 * (a + b);
    }
    const Zhat z(dist, sol.r);
    sol.c = detail::solve_c(loss, z, kappa);
    const SystemValues sv = evaluate_system(loss, dist, sol.r, sol.c);
    sol.residual_derivative = sv.derivative_mean - (1.0 - kappa);
    sol.residual_risk = sv.risk - kappa * sol.r * sol.r;
    sol.quadrature_error_estimate = sv.quad_error;
    sol.outer_evaluations = evals;
    if (std::abs(sol.residual_derivative) > residual_tol || std::abs(sol.residual_risk) > residual_tol) {
        throw NumericalError("regime system residuals above tolerance at kappa="
                             + std::to_string(kappa) + ": " + std::to_string(sol.residual_derivative)
                             + ", " + std::to_string(sol.residual_risk));
    }
    return sol;
}

/*
 * Sweep over an increasing kappa grid, seeding each solve with the previous
 * r rescaled by the squared-loss ratio. nonmonotone_points counts grid
 * points where r decreased.
 */
struct Curve
{
    std::vector<RegimeSolution> points;
    int nonmonotone_points = 0;
};

inline Curve r_curve(const LossSpec& loss, const ErrorDist& dist, const std::vector<double>& kappas)
{
    Curve curve;
    std::optional<double> guess;
    for (std::size_t k = 0; k < kappas.size(); ++k) {
        if (k > 0 && !(kappas[k] > kappas[k - 1])) {
            throw InvalidArgument("kappa grid must be strictly increasing");
        }
        try {
            auto sol = solve_system(loss, dist, kappas[k], guess);
            if (!curve.points.empty() && sol.r < curve.points.back().r) ++curve.nonmonotone_points;
            if (k + 1 < kappas.size()) {
                guess = sol.r * squared_loss_r(dist, kappas[k + 1]) / squared_loss_r(dist, kappas[k]);
            }
            curve.points.push_back(std::move(sol));
        } catch (const Error& e) {
            throw NumericalError("kappa=" + std::to_string(kappas[k]) + ": " + e.what());
        }
    }
    return curve;
}

struct Crossover
{
    bool found = false;
    double kappa = std::nan("");  // midpoint of the final bracket
    double lo = 0.0;
    double hi = 0.0;
    double gap_lo = 0.0;          // r_a - r_b at lo
    double gap_hi = 0.0;          // r_a - r_b at hi
    int bisections = 0;
};

/*
 * Bisection on g(kappa) = r_a(kappa) - r_b(kappa) (default: LAD minus least
 * squares) until the bracket is at most `width`. When g does not change sign
 * on [kappa_lo, kappa_hi], found = false and the endpoint gaps are reported.
 */
inline Crossover find_crossover(const ErrorDist& dist, double kappa_lo, double kappa_hi,
                                double width = 1e-3, const LossSpec& a = LossSpec::absolute(),
                                const LossSpec& b = LossSpec::squared())
{
    if (!(kappa_lo < kappa_hi)) throw InvalidArgument("crossover bracket needs kappa_lo < kappa_hi");
    detail::check_kappa(kappa_lo);
    detail::check_kappa(kappa_hi);
    auto g = [&](double k) { return solve_system(a, dist, k).r - solve_system(b, dist, k).r; };
    Crossover out;
    out.lo = kappa_lo;
    out.hi = kappa_hi;
    out.gap_lo = g(kappa_lo);
    out.gap_hi = g(kappa_hi);
    if ((out.gap_lo > 0.0) == (out.gap_hi > 0.0)) return out;
    while (out.hi - out.lo > width) {
        const double mid = 0.5 * (out.lo + out.hi);
        const double gm = g(mid);
        if ((gm > 0.0) == (out.gap_lo > 0.0)) {
            out.lo = mid;
            out.gap_lo = gm;
        } else {
            out.hi = mid;
            out.gap_hi = gm;
        }
        ++out.bisections;
    }
    out.found = true;
    out.kappa = 0.5 * (out.lo + out.hi);
    return out;
}

} // namespace regime
} // namespace escv
