#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace escv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/*
 * Base exception for everything thrown by this library.
 * Callers that only care about "something went wrong" catch this.
 */
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Precondition or configuration violation.
class InvalidArgument : public Error
{
public:
    using Error::Error;
};

/*
 * Iterative routine stopped without meeting its tolerance.
 * Carries the last iterate and the achieved residual so callers can
 * inspect or retry.
 */
class ConvergenceError : public Error
{
public:
    ConvergenceError(const std::string& msg, Vector last_iterate, double residual)
        : Error(msg + " (residual " + std::to_string(residual) + ")"),
          message_(msg),
          last_iterate_(std::move(last_iterate)),
          residual_(residual)
    {}

    // The message without the residual suffix, for re-wrapping with context.
    const std::string& message() const { return message_; }
    const Vector& last_iterate() const { return last_iterate_; }
    double residual() const { return residual_; }

private:
    std::string message_;
    Vector last_iterate_;
    double residual_;
};

// Scalar solver failure (no bracket, quadrature did not reach tolerance, ...).
class NumericalError : public Error
{
public:
    using Error::Error;
};

inline double soft_threshold(double x, double t)
{
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m)
{
    return m.allFinite();
}

} // namespace escv
