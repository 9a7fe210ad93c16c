#pragma once
#include <escv/common.hpp>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace escv {

/*
 * Convex, even loss rho minimized at 0, optionally multiplied by `scale`.
 *
 *  squared:  rho(y) = y^2
 *  absolute: rho(y) = |y|
 *  huber:    rho(y) = y^2 / (2 delta)   for |y| <= delta
 *                     |y| - delta / 2   otherwise
 *
 * The huber form interpolates the other two: as delta -> infinity its
 * minimizer is the least-squares one, as delta -> 0 it tends to |y|.
 */
struct LossSpec
{
    enum class Family { squared, absolute, huber };

    Family family = Family::squared;
    double huber_delta = 1.0;
    double scale = 1.0;

    static LossSpec squared() { return {Family::squared, 1.0, 1.0}; }
    static LossSpec absolute() { return {Family::absolute, 1.0, 1.0}; }
    static LossSpec huber(double delta)
    {
        if (!(delta > 0.0) || !std::isfinite(delta)) {
            throw InvalidArgument("huber delta must be finite and > 0");
        }
        return {Family::huber, delta, 1.0};
    }

    // Accepts l2/ols/squared, l1/lad/absolute and huber.
    static LossSpec parse(const std::string& name, double delta = 1.0)
    {
        if (name == "l2" || name == "ols" || name == "ls" || name == "squared") return squared();
        if (name == "l1" || name == "lad" || name == "absolute") return absolute();
        if (name == "huber") return huber(delta);
        throw InvalidArgument("unknown loss '" + name + "'");
    }

    LossSpec scaled(double a) const
    {
        if (!(a > 0.0)) throw InvalidArgument("loss scale must be > 0");
        LossSpec s = *this;
        s.scale *= a;
        return s;
    }

    std::string name() const
    {
        switch (family) {
            case Family::squared: return "l2";
            case Family::absolute: return "lad";
            case Family::huber: return "huber";
        }
        return "";
    }

    double rho(double y) const
    {
        const double a = std::abs(y);
        switch (family) {
            case Family::squared: return scale * y * y;
            case Family::absolute: return scale * a;
            case Family::huber:
                return scale * (a <= huber_delta ? 0.5 * y * y / huber_delta : a - 0.5 * huber_delta);
        }
        return 0.0;
    }

    /*
     * prox_c(rho)(x) = argmin_y rho(y) + (x - y)^2 / (2c).
     * With scale a, prox_c(a rho) = prox_{ac}(rho).
     */
    double prox(double c, double x) const
    {
        check_c(c);
        const double t = scale * c;
        switch (family) {
            case Family::squared: return x / (1.0 + 2.0 * t);
            case Family::absolute: return soft_threshold(x, t);
            case Family::huber:
                if (std::abs(x) <= huber_delta + t) return x * huber_delta / (huber_delta + t);
                return x - (x > 0 ? t : -t);
        }
        return 0.0;
    }

    // d/dx prox_c(rho)(x); takes the right-continuous value at breakpoints.
    double prox_derivative(double c, double x) const
    {
        check_c(c);
        const double t = scale * c;
        switch (family) {
            case Family::squared: return 1.0 / (1.0 + 2.0 * t);
            case Family::absolute: return std::abs(x) > t ? 1.0 : 0.0;
            case Family::huber:
                return std::abs(x) > huber_delta + t ? 1.0 : huber_delta / (huber_delta + t);
        }
        return 0.0;
    }

    // Points where the prox (or its derivative) changes regime: +-threshold.
    std::vector<double> prox_breakpoints(double c) const
    {
        const double t = prox_threshold(c);
        if (t <= 0.0) return {};
        return {-t, t};
    }

    double prox_threshold(double c) const
    {
        const double t = scale * c;
        switch (family) {
            case Family::squared: return 0.0;
            case Family::absolute: return t;
            case Family::huber: return huber_delta + t;
        }
        return 0.0;
    }

    // Subgradient interval of rho at y.
    std::pair<double, double> subgradient(double y) const
    {
        switch (family) {
            case Family::squared: return {2.0 * scale * y, 2.0 * scale * y};
            case Family::absolute:
                if (y > 0) return {scale, scale};
                if (y < 0) return {-scale, -scale};
                return {-scale, scale};
            case Family::huber: {
                const double g = std::abs(y) <= huber_delta ? y / huber_delta : (y > 0 ? 1.0 : -1.0);
                return {scale * g, scale * g};
            }
        }
        return {0.0, 0.0};
    }

    bool same_family(const LossSpec& o) const
    {
        return family == o.family && (family != Family::huber || huber_delta == o.huber_delta);
    }

private:
    static void check_c(double c)
    {
        if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("prox parameter c must be > 0");
    }
};

} // namespace escv
