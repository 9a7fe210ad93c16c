#pragma once
#include <escv/common.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace escv {

/*
 * Error distribution for the regression noise. Two families:
 *  - gaussian(sigma): N(0, sigma^2). sigma = 0 is allowed (noiseless).
 *  - double exponential (Laplace) with scale b: density exp(-|x|/b) / (2b),
 *    variance 2 b^2.
 */
class ErrorDist
{
public:
    enum class Family { gaussian, laplace };

    static ErrorDist gaussian(double sigma)
    {
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
            throw InvalidArgument("gaussian sigma must be finite and >= 0");
        }
        return ErrorDist(Family::gaussian, sigma);
    }

    static ErrorDist laplace(double b = 1.0)
    {
        if (!(b > 0.0) || !std::isfinite(b)) {
            throw InvalidArgument("double-exponential scale b must be finite and > 0");
        }
        return ErrorDist(Family::laplace, b);
    }

    // Accepts "gaussian"/"normal" and "laplace"/"double_exponential"/"dexp".
    static ErrorDist parse(const std::string& name, double scale)
    {
        if (name == "gaussian" || name == "normal") return gaussian(scale);
        if (name == "laplace" || name == "double_exponential" || name == "dexp") {
            return laplace(scale);
        }
        throw InvalidArgument("unknown error distribution '" + name + "'");
    }

    Family family() const { return family_; }
    double scale() const { return scale_; }

    std::string name() const
    {
        return family_ == Family::gaussian ? "gaussian" : "laplace";
    }

    double variance() const
    {
        return family_ == Family::gaussian ? scale_ * scale_ : 2.0 * scale_ * scale_;
    }

    double pdf(double x) const
    {
        if (family_ == Family::gaussian) {
            return std::exp(-0.5 * x * x / (scale_ * scale_))
                 / (scale_ * std::sqrt(2.0 * std::numbers::pi));
        }
        return std::exp(-std::abs(x) / scale_) / (2.0 * scale_);
    }

    double cdf(double x) const
    {
        if (family_ == Family::gaussian) {
            if (scale_ == 0.0) return x >= 0.0 ? 1.0 : 0.0;
            return 0.5 * std::erfc(-x / (scale_ * std::numbers::sqrt2));
        }
        return x < 0.0 ? 0.5 * std::exp(x / scale_)
                       : 1.0 - 0.5 * std::exp(-x / scale_);
    }

    // Points where the density is not smooth; quadrature splits there.
    std::vector<double> kinks() const
    {
        if (family_ == Family::laplace) return {0.0};
        return {};
    }

    bool degenerate() const { return family_ == Family::gaussian && scale_ == 0.0; }

    template <class RNG>
    double sample(RNG& rng) const
    {
        if (family_ == Family::gaussian) {
            if (scale_ == 0.0) return 0.0;
            std::normal_distribution<double> nd(0.0, scale_);
            return nd(rng);
        }
        // inverse cdf on u in (-1/2, 1/2)
        std::uniform_real_distribution<double> ud(-0.5, 0.5);
        double u = ud(rng);
        while (u == -0.5) u = ud(rng);
        const double s = u < 0.0 ? -1.0 : 1.0;
        return -scale_ * s * std::log1p(-2.0 * std::abs(u));
    }

    bool operator==(const ErrorDist&) const = default;

private:
    ErrorDist(Family f, double s) : family_(f), scale_(s) {}

    Family family_;
    double scale_;
};

} // namespace escv
