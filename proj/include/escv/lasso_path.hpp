#pragma once
#include <escv/csv.hpp>
#include <escv/dataset.hpp>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

namespace escv {
namespace lasso {

/*
 * All routines minimize
 *
 *      || y_c - X_c b ||_2^2 + lambda * || b ||_1
 *
 * where X_c, y_c are the column-centered design and response. There is no
 * 1/2 or 1/n factor, so every coordinate threshold is lambda / 2 and the
 * KKT condition reads |2 X_j'(y - X b)| <= lambda on zero coordinates.
 * The intercept is recovered as y_mean - x_means' b.
 */

struct Options
{
    double tol = 1e-9;        // max-abs coefficient change per sweep
    int max_sweeps = 10000;
    double kkt_tol = 1e-7;    // certificate target; public contract is 1e-6
};

/*
 * Column-centered copy of a dataset with cached column norms.
 */
struct Problem
{
    Matrix x;
    Vector y;
    Vector x_means;
    double y_mean = 0.0;
    Vector col_sq_norms;
    std::vector<bool> active_columns;  // false for constant (excluded) columns

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }
};

inline Problem make_problem(const Dataset& ds)
{
    validate(ds);
    Problem pr;
    pr.x_means = ds.x.colwise().mean().transpose();
    pr.x = ds.x.rowwise() - pr.x_means.transpose();
    pr.y_mean = ds.y.mean();
    pr.y = ds.y.array() - pr.y_mean;
    pr.col_sq_norms = pr.x.colwise().squaredNorm().transpose();
    pr.active_columns.assign(static_cast<std::size_t>(ds.p()), true);
    for (Index j = 0; j < ds.p(); ++j) {
        const double scale = std::max(1.0, ds.x.col(j).cwiseAbs().maxCoeff());
        if (!ds.penalized(j) || pr.col_sq_norms(j) <= 1e-24 * scale * scale * ds.n()) {
            pr.active_columns[static_cast<std::size_t>(j)] = false;
        }
    }
    return pr;
}

inline double objective(const Problem& pr, const Vector& beta, double lambda)
{
    return (pr.y - pr.x * beta).squaredNorm() + lambda * beta.lpNorm<1>();
}

inline double objective(const Dataset& ds, const Vector& beta, double lambda)
{
    return objective(make_problem(ds), beta, lambda);
}

// Largest violation of the subgradient optimality conditions.
inline double kkt_residual(const Problem& pr, const Vector& beta, double lambda)
{
    const Vector grad = 2.0 * pr.x.transpose() * (pr.y - pr.x * beta);
    double worst = 0.0;
    for (Index j = 0; j < pr.p(); ++j) {
        if (!pr.active_columns[static_cast<std::size_t>(j)]) continue;
        const double viol = beta(j) == 0.0
                                ? std::max(0.0, std::abs(grad(j)) - lambda)
                                : std::abs(grad(j) - lambda * (beta(j) > 0 ? 1.0 : -1.0));
        worst = std::max(worst, viol);
    }
    return worst;
}

inline double lambda_max(const Problem& pr)
{
    double m = 0.0;
    for (Index j = 0; j < pr.p(); ++j) {
        if (!pr.active_columns[static_cast<std::size_t>(j)]) continue;
        m = std::max(m, std::abs(pr.x.col(j).dot(pr.y)));
    }
    return 2.0 * m;
}

inline double lambda_max(const Dataset& ds) { return lambda_max(make_problem(ds)); }

namespace detail {

// One cyclic pass over `coords`; returns the max-abs coefficient change.
inline double sweep(const Problem& pr, double lambda, Vector& beta, Vector& resid,
                    const std::vector<Index>& coords)
{
    const double half = 0.5 * lambda;
    double max_change = 0.0;
    for (Index j : coords) {
        const double nrm = pr.col_sq_norms(j);
        const double old = beta(j);
        const double z = pr.x.col(j).dot(resid) + nrm * old;
        const double fresh = soft_threshold(z, half) / nrm;
        if (fresh != old) {
            resid.noalias() -= (fresh - old) * pr.x.col(j);
            beta(j) = fresh;
            max_change = std::max(max_change, std::abs(fresh - old));
        }
    }
    return max_change;
}

/*
 * Active-set refinement from a nearly converged iterate. Each step solves
 * the problem restricted to the current support A and signs s exactly,
 *
 *      X_A'X_A b_A = X_A'y - (lambda/2) s,
 *
 * and moves towards b_A. If a coordinate would change sign the move stops
 * where it reaches zero and the coordinate leaves A; if the restricted
 * solution is sign-consistent, the worst KKT violator outside A joins A.
 * A rank-deficient support is first thinned along null directions of X_A.
 * Returns true once the KKT residual is within kkt_tol.
 */
inline bool polish(const Problem& pr, double lambda, Vector& beta, double kkt_tol)
{
    const Index p = pr.p();
    Vector cur = beta;
    Vector sign = cur.cwiseSign();
    for (Index iter = 0; iter < 3 * p + 10; ++iter) {
        std::vector<Index> act;
        for (Index j = 0; j < p; ++j) {
            if (sign(j) != 0.0) act.push_back(j);
        }
        if (act.empty()) return false;
        const auto k = static_cast<Index>(act.size());
        Matrix xa(pr.n(), k);
        Vector sa(k);
        for (Index a = 0; a < k; ++a) {
            xa.col(a) = pr.x.col(act[static_cast<std::size_t>(a)]);
            sa(a) = sign(act[static_cast<std::size_t>(a)]);
        }
        Eigen::FullPivLU<Matrix> lu(xa.transpose() * xa);
        lu.setThreshold(1e-10);
        if (lu.rank() < k) {
            // More columns than the design can separate: slide along a null
            // direction of X_A (fit unchanged, L1 norm nonincreasing) until a
            // coordinate reaches zero.
            Vector v = lu.kernel().col(0);
            if (sa.dot(v) > 0.0) v = -v;
            double step = std::numeric_limits<double>::infinity();
            Index leaving = -1;
            for (Index a = 0; a < k; ++a) {
                if (v(a) * sa(a) >= 0.0) continue;
                const double t = std::abs(cur(act[static_cast<std::size_t>(a)]) / v(a));
                if (t < step) {
                    step = t;
                    leaving = act[static_cast<std::size_t>(a)];
                }
            }
            if (leaving < 0) return false;
            for (Index a = 0; a < k; ++a) cur(act[static_cast<std::size_t>(a)]) += step * v(a);
            cur(leaving) = 0.0;
            sign(leaving) = 0.0;
            continue;
        }
        const Vector ba = lu.solve(xa.transpose() * pr.y - 0.5 * lambda * sa);
        if (!ba.allFinite()) return false;

        double step = 1.0;
        Index leaving = -1;
        for (Index a = 0; a < k; ++a) {
            if (ba(a) * sa(a) > 0.0) continue;
            const double from = cur(act[static_cast<std::size_t>(a)]);
            const double t = from * sa(a) > 0.0 ? from / (from - ba(a)) : 0.0;
            if (t < step) {
                step = t;
                leaving = act[static_cast<std::size_t>(a)];
            }
        }
        for (Index a = 0; a < k; ++a) {
            const Index j = act[static_cast<std::size_t>(a)];
            cur(j) += step * (ba(a) - cur(j));
        }
        if (leaving >= 0) {
            cur(leaving) = 0.0;
            sign(leaving) = 0.0;
            continue;
        }

        const Vector grad = 2.0 * pr.x.transpose() * (pr.y - pr.x * cur);
        Index entering = -1;
        double worst = kkt_tol;
        for (Index j = 0; j < p; ++j) {
            if (sign(j) != 0.0 || !pr.active_columns[static_cast<std::size_t>(j)]) continue;
            const double viol = std::abs(grad(j)) - lambda;
            if (viol > worst) {
                worst = viol;
                entering = j;
            }
        }
        if (entering < 0) {
            if (kkt_residual(pr, cur, lambda) > kkt_tol) return false;
            beta = std::move(cur);
            return true;
        }
        sign(entering) = grad(entering) > 0.0 ? 1.0 : -1.0;
    }
    return false;
}

} // namespace detail

/*
 * Cyclic coordinate descent with active-set cycling: a full sweep is followed
 * by sweeps over the nonzero coordinates until they settle, then repeated
 * until a full sweep changes nothing by more than opts.tol and the KKT
 * residual is below opts.kkt_tol. If the sweeps settle without meeting the
 * certificate (slow progress on ill-conditioned supports), an active-set
 * refinement finishes the solve exactly. Throws ConvergenceError carrying
 * the last iterate if opts.max_sweeps is exhausted.
 */
inline Vector fit(const Problem& pr, double lambda, const std::optional<Vector>& warm_start = {},
                  const Options& opts = {})
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument("lambda must be finite and >= 0");
    }
    const Index p = pr.p();
    Vector beta = Vector::Zero(p);
    if (warm_start) {
        if (warm_start->size() != p) throw InvalidArgument("warm start has wrong length");
        beta = *warm_start;
        for (Index j = 0; j < p; ++j) {
            if (!pr.active_columns[static_cast<std::size_t>(j)]) beta(j) = 0.0;
        }
    }
    if (lambda >= lambda_max(pr) && lambda > 0.0) return Vector::Zero(p);

    std::vector<Index> all;
    for (Index j = 0; j < p; ++j) {
        if (pr.active_columns[static_cast<std::size_t>(j)]) all.push_back(j);
    }

    Vector resid = pr.y - pr.x * beta;
    double tol = opts.tol;
    constexpr int polish_every = 100;
    int sweeps = 0;
    std::vector<Index> active;
    while (sweeps < opts.max_sweeps) {
        double change = detail::sweep(pr, lambda, beta, resid, all);
        ++sweeps;
        if (change < tol) {
            resid = pr.y - pr.x * beta;
            if (kkt_residual(pr, beta, lambda) <= opts.kkt_tol) return beta;
            // Coefficient moves are tiny but the certificate is not met yet.
            if (detail::polish(pr, lambda, beta, opts.kkt_tol)) return beta;
            tol = std::max(0.1 * tol, 1e-15);
            resid = pr.y - pr.x * beta;
            continue;
        }
        active.clear();
        for (Index j : all) {
            if (beta(j) != 0.0) active.push_back(j);
        }
        while (sweeps < opts.max_sweeps) {
            change = detail::sweep(pr, lambda, beta, resid, active);
            ++sweeps;
            if (change < tol) break;
            if (sweeps % polish_every == 0 && detail::polish(pr, lambda, beta, opts.kkt_tol)) {
                return beta;
            }
        }
    }
    if (detail::polish(pr, lambda, beta, opts.kkt_tol)) return beta;
    throw ConvergenceError("lasso coordinate descent did not converge at lambda="
                               + std::to_string(lambda),
                           beta, kkt_residual(pr, beta, lambda));
}

inline Vector fit(const Dataset& ds, double lambda, const std::optional<Vector>& warm_start = {},
                  const Options& opts = {})
{
    return fit(make_problem(ds), lambda, warm_start, opts);
}

struct PathOptions
{
    Index grid_size = 100;
    double floor_ratio = 1e-3;  // smallest lambda = floor_ratio * lambda_max
    Options solver;
};

/*
 * Solutions on a descending lambda grid, indexed by tau = ||beta||_1.
 * betas holds one column per grid point.
 */
struct Path
{
    std::vector<double> lambdas;
    Matrix betas;  // (p, L)
    std::vector<double> taus;
    std::vector<double> objective_values;
    std::vector<double> kkt_residuals;
    double y_mean = 0.0;
    Vector x_means;
    int tau_monotonicity_violations = 0;  // tau decreasing by more than 1e-8 as lambda decreases

    Index size() const { return static_cast<Index>(lambdas.size()); }
    double max_tau() const { return taus.empty() ? 0.0 : *std::max_element(taus.begin(), taus.end()); }

    double intercept(const Vector& beta) const { return y_mean - x_means.dot(beta); }
};

inline std::vector<double> lambda_grid(double lmax, Index grid_size, double floor_ratio)
{
    if (grid_size < 2) throw InvalidArgument("grid_size must be >= 2");
    if (!(floor_ratio > 0.0 && floor_ratio < 1.0)) {
        throw InvalidArgument("floor_ratio must lie in (0, 1)");
    }
    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    for (Index k = 0; k < grid_size; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(grid_size - 1);
        grid[static_cast<std::size_t>(k)] = lmax * std::pow(floor_ratio, frac);
    }
    return grid;
}

/*
 * Warm-started fits over an explicit descending grid.
 */
inline Path fit_path(const Problem& pr, const std::vector<double>& lambdas, const Options& opts = {})
{
    Path path;
    path.lambdas = lambdas;
    path.y_mean = pr.y_mean;
    path.x_means = pr.x_means;
    const auto L = static_cast<Index>(lambdas.size());
    path.betas.setZero(pr.p(), L);
    Vector beta = Vector::Zero(pr.p());
    for (Index k = 0; k < L; ++k) {
        const double lam = lambdas[static_cast<std::size_t>(k)];
        if (k > 0 && lam > lambdas[static_cast<std::size_t>(k - 1)]) {
            throw InvalidArgument("lambda grid must be descending");
        }
        try {
            beta = fit(pr, lam, beta, opts);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("path fit failed at lambda=" + std::to_string(lam) + ": "
                                       + e.message(),
                                   e.last_iterate(), e.residual());
        }
        path.betas.col(k) = beta;
        path.taus.push_back(beta.lpNorm<1>());
        path.objective_values.push_back(objective(pr, beta, lam));
        path.kkt_residuals.push_back(kkt_residual(pr, beta, lam));
        if (k > 0 && path.taus[static_cast<std::size_t>(k)]
                         < path.taus[static_cast<std::size_t>(k - 1)] - 1e-8) {
            ++path.tau_monotonicity_violations;
        }
    }
    return path;
}

inline Path fit_path(const Problem& pr, const PathOptions& opts = {})
{
    const double lmax = lambda_max(pr);
    if (lmax == 0.0) {
        // Zero response: every solution is the zero vector.
        return fit_path(pr, std::vector<double>(static_cast<std::size_t>(opts.grid_size), 0.0),
                        opts.solver);
    }
    return fit_path(pr, lambda_grid(lmax, opts.grid_size, opts.floor_ratio), opts.solver);
}

inline Path fit_path(const Dataset& ds, const PathOptions& opts = {})
{
    return fit_path(make_problem(ds), opts);
}

/*
 * Coefficients at L1 norm tau: linear interpolation between the two path
 * points bracketing tau, rescaled so the result has L1 norm exactly tau.
 * Exact knot hits are returned verbatim. No extrapolation.
 */
inline Vector interpolate_at_tau(const Path& path, double tau)
{
    if (path.size() == 0) throw InvalidArgument("empty path");
    const double top = path.max_tau();
    if (!(tau >= 0.0) || tau > top * (1.0 + 1e-12)) {
        throw InvalidArgument("tau=" + std::to_string(tau) + " outside path range [0, "
                              + std::to_string(top) + "]");
    }
    const auto& taus = path.taus;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (taus[k] == tau) return path.betas.col(static_cast<Index>(k));
    }
    if (tau >= top) {
        const auto k = std::max_element(taus.begin(), taus.end()) - taus.begin();
        return path.betas.col(static_cast<Index>(k));
    }
    std::size_t hi = 0;
    while (taus[hi] <= tau) ++hi;
    if (hi == 0) return Vector::Zero(path.betas.rows());  // tau below the first knot (> 0)
    const std::size_t lo = hi - 1;
    const double w = (tau - taus[lo]) / (taus[hi] - taus[lo]);
    Vector beta = (1.0 - w) * path.betas.col(static_cast<Index>(lo))
                + w * path.betas.col(static_cast<Index>(hi));
    const double l1 = beta.lpNorm<1>();
    if (l1 > 0.0) beta *= tau / l1;
    return beta;
}

// One row per lambda: lambda, tau, objective, then the p coefficients.
inline void write_path_csv(std::ostream& os, const Path& path,
                           const std::vector<std::string>& coef_names = {})
{
    csv::Record rec{"lambda", "tau", "objective"};
    for (Index j = 0; j < path.betas.rows(); ++j) {
        rec.push_back(static_cast<std::size_t>(j) < coef_names.size()
                          ? coef_names[static_cast<std::size_t>(j)]
                          : "b" + std::to_string(j + 1));
    }
    csv::write_record(os, rec);
    for (Index k = 0; k < path.size(); ++k) {
        rec.clear();
        rec.push_back(csv::format_double(path.lambdas[static_cast<std::size_t>(k)]));
        rec.push_back(csv::format_double(path.taus[static_cast<std::size_t>(k)]));
        rec.push_back(csv::format_double(path.objective_values[static_cast<std::size_t>(k)]));
        for (Index j = 0; j < path.betas.rows(); ++j) {
            rec.push_back(csv::format_double(path.betas(j, k)));
        }
        csv::write_record(os, rec);
    }
}

} // namespace lasso
} // namespace escv
