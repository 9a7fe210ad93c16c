#pragma once
#include <escv/dataset.hpp>
#include <escv/loss.hpp>
#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

namespace escv {
namespace mest {

/*
 * Unpenalized M-estimation without intercept:
 *
 *      beta_hat = argmin_b sum_i rho(y_i - x_i' b).
 */

struct FitResult
{
    Vector beta_hat;
    double norm = 0.0;     // ||beta_hat||_2
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
};

inline double objective(const LossSpec& loss, const Matrix& x, const Vector& y, const Vector& beta)
{
    const Vector r = y - x * beta;
    double s = 0.0;
    for (Index i = 0; i < r.size(); ++i) s += loss.rho(r(i));
    return s;
}

inline FitResult make_result(const LossSpec& loss, const Matrix& x, const Vector& y, Vector beta,
                             int iterations, bool converged)
{
    FitResult f;
    f.objective = objective(loss, x, y, beta);
    f.norm = beta.norm();
    f.beta_hat = std::move(beta);
    f.iterations = iterations;
    f.converged = converged;
    return f;
}

inline constexpr double rank_tol = 1e-10;

inline void check_shape(const Matrix& x, const Vector& y)
{
    if (x.rows() != y.size()) throw InvalidArgument("design rows do not match response length");
    if (x.rows() <= x.cols()) {
        throw InvalidArgument("M-estimation needs n > p (n=" + std::to_string(x.rows())
                              + ", p=" + std::to_string(x.cols()) + ")");
    }
}

/*
 * Least squares by column-pivoted Householder QR. Rank is judged on the
 * diagonal of R: |R_pp| must exceed rank_tol * |R_11|.
 */
inline FitResult fit_ols(const Matrix& x, const Vector& y)
{
    check_shape(x, y);
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    const auto& r = qr.matrixR();
    const double top = std::abs(r(0, 0));
    const double bottom = std::abs(r(x.cols() - 1, x.cols() - 1));
    if (!(bottom > rank_tol * top)) {
        std::ostringstream msg;
        msg << "design is rank deficient at tolerance " << rank_tol
            << " (|R_pp|/|R_11| = " << (top > 0 ? bottom / top : 0.0) << ")";
        throw NumericalError(msg.str());
    }
    Vector beta = qr.solve(y);
    return make_result(LossSpec::squared(), x, y, std::move(beta), 1, true);
}

inline FitResult fit_ols(const Dataset& ds) { return fit_ols(ds.x, ds.y); }

struct IrlsOptions
{
    double eta_start = 1e-2;
    double eta_end = 1e-8;
    double eta_factor = 0.1;
    double polish_from = 1e-3;    // try the exact basic solution once eta <= polish_from
    int max_iter_per_stage = 500;
    int max_iter_intermediate = 30; // intermediate stages only warm-start the next one
    double stage_tol = 1e-9;      // relative step that ends an intermediate stage
    double step_tol = 1e-13;      // relative step that ends the final stage
    double verify_rel_tol = 1e-6; // final objective vs. a run at eta_end * eta_factor
};

namespace detail {

/*
 * Majorize-minimize iterations for the huber surrogate with threshold eta:
 * weights 1 / max(|r_i|, eta), weighted least squares each step. The
 * surrogate objective is nonincreasing along the iterates.
 */
inline int irls_stage(const Matrix& x, const Vector& y, double eta, Vector& beta,
                      int max_iter, double tol, bool& converged)
{
    const Index n = x.rows();
    const Index p = x.cols();
    Matrix xw(n, p);
    Matrix gram(p, p);
    Vector w(n);
    converged = false;
    int it = 0;
    for (; it < max_iter; ++it) {
        const Vector r = y - x * beta;
        for (Index i = 0; i < n; ++i) w(i) = 1.0 / std::max(std::abs(r(i)), eta);
        xw = x.array().colwise() * w.array().sqrt();
        gram.setZero();
        gram.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
        Eigen::LDLT<Matrix> ldlt(gram.selfadjointView<Eigen::Lower>());
        if (ldlt.info() != Eigen::Success) break;
        Vector next = ldlt.solve(x.transpose() * w.cwiseProduct(y));
        if (!next.allFinite()) break;
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = std::move(next);
        if (change <= tol * std::max(1.0, beta.cwiseAbs().maxCoeff())) {
            converged = true;
            ++it;
            break;
        }
    }
    return it;
}

/*
 * Continuation from `start` down to `target` by eta_factor. Intermediate
 * stages stop at stage_tol, the last at step_tol.
 */
inline int irls_continuation(const Matrix& x, const Vector& y, double start, double target,
                             Vector& beta, const IrlsOptions& opts, bool& converged)
{
    int iters = 0;
    double eta = std::max(start, target);
    while (true) {
        const bool last = eta <= target;
        iters += irls_stage(x, y, eta, beta, last ? opts.max_iter_per_stage : opts.max_iter_intermediate,
                            last ? opts.step_tol : opts.stage_tol, converged);
        if (last) break;
        eta = std::max(eta * opts.eta_factor, target);
    }
    return iters;
}

inline double residual_scale(const Matrix& x, const Vector& y, const Vector& beta)
{
    // Floors keep the weights finite on exact fits.
    const double r = (y - x * beta).cwiseAbs().mean();
    return std::max({r, 1e-6 * y.cwiseAbs().mean(), 1e-100});
}

/*
 * Exact LAD vertex near `beta`. The basis starts at the p observations with
 * the smallest absolute residuals; the vertex is optimal when the dual u
 * solving X_B' u = -X_N' sign(r_N) has |u| <= 1. Otherwise the basic row
 * with the largest |u_k| leaves and a weighted median line search picks the
 * entering row (one exact simplex pivot). Returns false if no certified
 * vertex is reached within max_pivots.
 */
inline bool polish_lad(const Matrix& x, const Vector& y, Vector& beta, int max_pivots = -1)
{
    const Index n = x.rows();
    const Index p = x.cols();
    if (max_pivots < 0) max_pivots = static_cast<int>(4 * p + 20);
    const Vector r0 = y - x * beta;
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::partial_sort(order.begin(), order.begin() + p, order.end(),
                      [&](Index a, Index b) { return std::abs(r0(a)) < std::abs(r0(b)); });
    std::vector<Index> basis(order.begin(), order.begin() + p);
    std::vector<Index> slot(static_cast<std::size_t>(n), -1);  // position in basis or -1

    Matrix binv(p, p);
    auto refactor = [&]() {
        Matrix xb(p, p);
        for (Index k = 0; k < p; ++k) {
            xb.row(k) = x.row(basis[static_cast<std::size_t>(k)]);
        }
        Eigen::FullPivLU<Matrix> lu(xb);
        lu.setThreshold(1e-10);
        if (!lu.isInvertible()) return false;
        binv = lu.inverse();
        return binv.allFinite();
    };
    for (Index k = 0; k < p; ++k) slot[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])] = k;
    if (!refactor()) return false;

    const double certificate_tol = 1e-9;
    Vector yb(p), cand(p), r(n), g(p), u(p), col(p), xd(n);
    double last_obj = std::numeric_limits<double>::infinity();
    for (int pivot = 0;; ++pivot) {
        if (pivot > 0 && pivot % 32 == 0 && !refactor()) return false;
        for (Index k = 0; k < p; ++k) yb(k) = y(basis[static_cast<std::size_t>(k)]);
        cand.noalias() = binv * yb;
        r.noalias() = y - x * cand;
        g.setZero();
        for (Index i = 0; i < n; ++i) {
            if (slot[static_cast<std::size_t>(i)] >= 0) continue;
            if (r(i) > 0) g -= x.row(i).transpose();
            else if (r(i) < 0) g += x.row(i).transpose();
        }
        u.noalias() = binv.transpose() * g;
        if (!u.allFinite()) return false;
        Index leave = 0;
        const double worst = u.cwiseAbs().maxCoeff(&leave);
        if (worst <= 1.0 + certificate_tol) {
            beta = cand;
            return true;
        }
        const double obj = r.cwiseAbs().sum();
        if (obj > last_obj * (1.0 + 1e-12) + 1e-300 || pivot >= max_pivots) return false;
        last_obj = obj;

        // Direction d = -sign(u_k) B^{-1} e_k releases row k; slope at 0 is 1 - |u_k|.
        const double sgn = u(leave) > 0 ? -1.0 : 1.0;
        col = sgn * binv.col(leave);
        xd.noalias() = x * col;
        std::vector<std::pair<double, Index>> breaks;
        for (Index i = 0; i < n; ++i) {
            if (slot[static_cast<std::size_t>(i)] >= 0 || xd(i) == 0.0) continue;
            const double a = r(i) / xd(i);
            if (a > 0.0) breaks.emplace_back(a, i);
        }
        std::sort(breaks.begin(), breaks.end());
        double slope = 1.0 - worst;
        Index enter = -1;
        for (const auto& [a, i] : breaks) {
            slope += 2.0 * std::abs(xd(i));
            if (slope >= 0.0) {
                enter = i;
                break;
            }
        }
        if (enter < 0) return false;  // unbounded direction cannot happen for n > p
        const double denom = x.row(enter).dot(binv.col(leave));
        if (std::abs(denom) < 1e-12) return false;
        // Sherman-Morrison update for replacing basis row `leave` by x_enter.
        const Vector bk = binv.col(leave);
        const Eigen::RowVectorXd w = (x.row(enter) - x.row(basis[static_cast<std::size_t>(leave)])) * binv;
        binv.noalias() -= bk * w / denom;
        slot[static_cast<std::size_t>(basis[static_cast<std::size_t>(leave)])] = -1;
        basis[static_cast<std::size_t>(leave)] = enter;
        slot[static_cast<std::size_t>(enter)] = leave;
    }
}

/*
 * Continuation from eta_start * s downwards; once eta <= polish_from * s each
 * stage is followed by an attempt to certify the exact vertex. Returns
 * iterations used; `certified` tells whether a vertex was accepted.
 */
inline int lad_solve(const Matrix& x, const Vector& y, double start, double target, double polish_at,
                     Vector& beta, const IrlsOptions& opts, bool& converged, bool& certified)
{
    int iters = 0;
    certified = false;
    converged = false;
    double eta = std::max(start, target);
    while (true) {
        const bool last = eta <= target;
        iters += irls_stage(x, y, eta, beta, last ? opts.max_iter_per_stage : opts.max_iter_intermediate,
                            last ? opts.step_tol : opts.stage_tol, converged);
        if (eta <= polish_at && polish_lad(x, y, beta)) {
            certified = converged = true;
            break;
        }
        if (last) break;
        eta = std::max(eta * opts.eta_factor, target);
    }
    return iters;
}

} // namespace detail

/*
 * Least absolute deviation by smoothed IRLS with continuation on eta,
 * relative to the mean absolute OLS residual s. From eta = polish_from * s
 * on, each stage tries to certify the exact vertex (basic solution) and
 * stops early if it can. A verification run from the result at
 * eta_end * eta_factor must agree on the LAD objective to verify_rel_tol;
 * otherwise ConvergenceError with the best iterate.
 */
inline FitResult fit_lad(const Matrix& x, const Vector& y, const IrlsOptions& opts = {})
{
    check_shape(x, y);
    const LossSpec lad = LossSpec::absolute();
    Vector beta = fit_ols(x, y).beta_hat;
    const double s = detail::residual_scale(x, y, beta);
    bool ok = false, certified = false;
    int iters = detail::lad_solve(x, y, opts.eta_start * s, opts.eta_end * s, opts.polish_from * s,
                                  beta, opts, ok, certified);
    const double obj = objective(lad, x, y, beta);

    Vector check = beta;
    const double eta_verify = opts.eta_end * s * opts.eta_factor;
    bool ok2 = false, certified2 = false;
    iters += detail::lad_solve(x, y, eta_verify, eta_verify, eta_verify, check, opts, ok2, certified2);
    const double obj2 = objective(lad, x, y, check);
    const double scale = y.lpNorm<1>() + 1.0;
    if (std::abs(obj - obj2) > opts.verify_rel_tol * std::max(obj, obj2) + 1e-12 * scale) {
        throw ConvergenceError("LAD IRLS verification run disagrees (objective "
                                   + std::to_string(obj) + " vs " + std::to_string(obj2) + ")",
                               obj2 < obj ? check : beta, std::abs(obj - obj2));
    }
    if (obj2 < obj) beta = std::move(check);
    return make_result(lad, x, y, std::move(beta), iters, ok || ok2);
}

inline FitResult fit_lad(const Dataset& ds, const IrlsOptions& opts = {}) { return fit_lad(ds.x, ds.y, opts); }

/*
 * Generic M-estimator. Squared and absolute losses dispatch to fit_ols and
 * fit_lad; huber runs IRLS with weights rho'(r)/r, continuing from a
 * threshold at the OLS residual scale down to delta.
 */
inline FitResult fit_m(const Matrix& x, const Vector& y, const LossSpec& loss, const IrlsOptions& opts = {})
{
    switch (loss.family) {
        case LossSpec::Family::squared: {
            auto f = fit_ols(x, y);
            f.objective = objective(loss, x, y, f.beta_hat);
            return f;
        }
        case LossSpec::Family::absolute: {
            auto f = fit_lad(x, y, opts);
            f.objective = objective(loss, x, y, f.beta_hat);
            return f;
        }
        case LossSpec::Family::huber: break;
    }
    check_shape(x, y);
    Vector beta = fit_ols(x, y).beta_hat;
    const double s = detail::residual_scale(x, y, beta);
    bool ok = false;
    const double start = std::max(loss.huber_delta, opts.eta_start * s);
    const int iters = detail::irls_continuation(x, y, start, loss.huber_delta, beta, opts, ok);
    if (!ok) {
        throw ConvergenceError("huber IRLS did not converge", beta,
                               objective(loss, x, y, beta));
    }
    return make_result(loss, x, y, std::move(beta), iters, true);
}

inline FitResult fit_m(const Dataset& ds, const LossSpec& loss, const IrlsOptions& opts = {})
{
    return fit_m(ds.x, ds.y, loss, opts);
}

} // namespace mest
} // namespace escv
