#pragma once
#include <escv/dataset.hpp>
#include <escv/lasso_path.hpp>
#include <escv/parallel.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace escv {
namespace stability {

// Grid points with ||m_hat||^2 below this are excluded from the ES curve.
inline constexpr double mhat_floor = 1e-12;
// Grid values within this of the minimum count as ties.
inline constexpr double tie_tol = 1e-10;
// Coefficients above this in magnitude count towards model size.
inline constexpr double support_tol = 1e-8;

/*
 * Lasso paths of the V pseudo datasets (block v removed) together with their
 * coefficients aligned on a common tau grid.
 */
struct FoldEstimates
{
    std::vector<lasso::Path> paths;
    std::vector<double> tau_grid;
    std::vector<Matrix> betas;  // per fold, (p, G)
};

inline std::vector<lasso::Path> fit_fold_paths(const Dataset& ds, const FoldPlan& plan,
                                               const lasso::PathOptions& opts = {},
                                               unsigned jobs = 1)
{
    if (plan.n() != ds.n()) throw InvalidArgument("fold plan size does not match dataset");
    const auto V = static_cast<std::size_t>(plan.v_blocks);
    std::vector<lasso::Path> paths(V);
    parallel_for(V, jobs, [&](std::size_t v) {
        const auto rows = plan.training(static_cast<Index>(v));
        if (rows.size() < 2) {
            throw InvalidArgument("pseudo dataset " + std::to_string(v + 1) + " has fewer than 2 rows");
        }
        try {
            paths[v] = lasso::fit_path(lasso::make_problem(subset_rows(ds, rows)), opts);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("fold " + std::to_string(v + 1) + ": " + e.message(),
                                   e.last_iterate(), e.residual());
        }
    });
    return paths;
}

// Evenly spaced grid on [0, min over folds of the largest path tau].
inline std::vector<double> make_tau_grid(const std::vector<lasso::Path>& paths, Index grid_size)
{
    if (grid_size < 2) throw InvalidArgument("tau grid needs at least 2 points");
    if (paths.empty()) throw InvalidArgument("no fold paths");
    double top = std::numeric_limits<double>::infinity();
    for (const auto& p : paths) top = std::min(top, p.max_tau());
    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    for (Index k = 0; k < grid_size; ++k) {
        grid[static_cast<std::size_t>(k)] = top * static_cast<double>(k) / static_cast<double>(grid_size - 1);
    }
    return grid;
}

inline std::vector<Matrix> align_on_grid(const std::vector<lasso::Path>& paths,
                                         const std::vector<double>& tau_grid)
{
    std::vector<Matrix> betas;
    betas.reserve(paths.size());
    for (std::size_t v = 0; v < paths.size(); ++v) {
        const auto& path = paths[v];
        Matrix b(path.betas.rows(), static_cast<Index>(tau_grid.size()));
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            try {
                b.col(static_cast<Index>(k)) = lasso::interpolate_at_tau(path, tau_grid[k]);
            } catch (const InvalidArgument& e) {
                throw InvalidArgument("fold " + std::to_string(v + 1) + ": " + e.what());
            }
        }
        betas.push_back(std::move(b));
    }
    return betas;
}

inline FoldEstimates fold_estimates(const Dataset& ds, const FoldPlan& plan,
                                    const std::vector<double>& tau_grid,
                                    const lasso::PathOptions& opts = {}, unsigned jobs = 1)
{
    FoldEstimates fe;
    fe.paths = fit_fold_paths(ds, plan, opts, jobs);
    fe.tau_grid = tau_grid;
    fe.betas = align_on_grid(fe.paths, tau_grid);
    return fe;
}

// Same, with the grid built from the fold paths themselves.
inline FoldEstimates fold_estimates(const Dataset& ds, const FoldPlan& plan, Index grid_size,
                                    const lasso::PathOptions& opts = {}, unsigned jobs = 1)
{
    FoldEstimates fe;
    fe.paths = fit_fold_paths(ds, plan, opts, jobs);
    fe.tau_grid = make_tau_grid(fe.paths, grid_size);
    fe.betas = align_on_grid(fe.paths, fe.tau_grid);
    return fe;
}

namespace detail {

inline void check_shapes(const std::vector<Matrix>& fold_betas, const Matrix& x)
{
    if (fold_betas.empty()) throw InvalidArgument("no fold estimates");
    for (const auto& b : fold_betas) {
        if (b.rows() != x.cols() || b.cols() != fold_betas.front().cols()) {
            throw InvalidArgument("fold estimates have inconsistent shapes");
        }
    }
}

// (1/V) sum_v || X b_v(tau) - m_hat(tau) ||^2 per grid point.
inline Vector mean_spread(const std::vector<Matrix>& fold_betas, const Matrix& x, const Matrix& mhat)
{
    Vector s = Vector::Zero(mhat.cols());
    for (const auto& b : fold_betas) {
        s += (x * b - mhat).colwise().squaredNorm().transpose();
    }
    return s / static_cast<double>(fold_betas.size());
}

} // namespace detail

/*
 * m_hat(tau) = (1/V) sum_v X b_v(tau), one column per grid point. x is the
 * full design matrix.
 */
inline Matrix compute_mhat(const std::vector<Matrix>& fold_betas, const Matrix& x)
{
    detail::check_shapes(fold_betas, x);
    Matrix m = Matrix::Zero(x.rows(), fold_betas.front().cols());
    for (const auto& b : fold_betas) m += x * b;
    return m / static_cast<double>(fold_betas.size());
}

// Delete-d jackknife style variance: ((n-d)/d) (1/V) sum_v ||X b_v - m_hat||^2.
inline Vector compute_that(const std::vector<Matrix>& fold_betas, const Matrix& x, const FoldPlan& plan)
{
    const Matrix mhat = compute_mhat(fold_betas, x);
    const double n = static_cast<double>(plan.n());
    const double d = static_cast<double>(plan.d);
    return (n - d) / d * detail::mean_spread(fold_betas, x, mhat);
}

/*
 * Estimation stability and cross-validation curves on a common tau grid.
 * es(k) and z2(k) are NaN where ||m_hat||^2 < mhat_floor (undefined).
 */
struct StabilityCurve
{
    std::vector<double> tau_grid;
    Matrix mhat;                 // (n, G)
    Vector that;
    Vector mhat_sq_norm;
    Vector es;
    Vector z2;                   // ||m_hat||^2 / T_hat, +inf where T_hat = 0
    Vector cv_error;
    Index v = 0;
    Index d = 0;
    Index n = 0;

    bool defined(Index k) const { return !std::isnan(es(k)); }
    bool all_undefined() const
    {
        for (Index k = 0; k < es.size(); ++k) {
            if (defined(k)) return false;
        }
        return true;
    }
};

/*
 * ES(tau) = [(1/V) sum_v ||X b_v - m_hat||^2] / ||m_hat||^2, the squared
 * Euclidean norm standing in for "m_hat squared". Also fills m_hat, T_hat and
 * Z^2 = ||m_hat||^2 / T_hat, so ES = (d/(n-d)) / Z^2.
 */
inline StabilityCurve es_curve(const std::vector<Matrix>& fold_betas, const Matrix& x,
                               const FoldPlan& plan, std::vector<double> tau_grid = {})
{
    StabilityCurve c;
    c.v = plan.v_blocks;
    c.d = plan.d;
    c.n = plan.n();
    if (x.rows() != c.n) throw InvalidArgument("design rows do not match fold plan");
    c.mhat = compute_mhat(fold_betas, x);
    if (tau_grid.empty()) tau_grid.assign(static_cast<std::size_t>(c.mhat.cols()), std::nan(""));
    c.tau_grid = std::move(tau_grid);
    const Vector spread = detail::mean_spread(fold_betas, x, c.mhat);
    const double n = static_cast<double>(c.n);
    const double d = static_cast<double>(c.d);
    c.that = (n - d) / d * spread;
    c.mhat_sq_norm = c.mhat.colwise().squaredNorm().transpose();
    const Index G = c.mhat.cols();
    c.es.resize(G);
    c.z2.resize(G);
    for (Index k = 0; k < G; ++k) {
        if (c.mhat_sq_norm(k) < mhat_floor) {
            c.es(k) = std::nan("");
            c.z2(k) = std::nan("");
            continue;
        }
        c.es(k) = spread(k) / c.mhat_sq_norm(k);
        c.z2(k) = c.that(k) > 0.0 ? c.mhat_sq_norm(k) / c.that(k)
                                  : std::numeric_limits<double>::infinity();
    }
    return c;
}

/*
 * Held-out squared prediction error per grid point:
 * (1/n) sum_v sum_{i in block v} (y_i - y_hat_v,i)^2, where y_hat uses the
 * fold's own intercept (training means of y and x).
 */
inline Vector cv_curve(const Dataset& ds, const FoldPlan& plan, const FoldEstimates& fe)
{
    if (fe.betas.size() != static_cast<std::size_t>(plan.v_blocks)) {
        throw InvalidArgument("fold estimates do not match fold plan");
    }
    const Index G = static_cast<Index>(fe.tau_grid.size());
    Vector err = Vector::Zero(G);
    for (Index v = 0; v < plan.v_blocks; ++v) {
        const auto& path = fe.paths[static_cast<std::size_t>(v)];
        const auto& b = fe.betas[static_cast<std::size_t>(v)];
        for (Index i : plan.held_out(v)) {
            const Vector xc = ds.x.row(i).transpose() - path.x_means;
            const Vector pred = (b.transpose() * xc).array() + path.y_mean;
            err += (pred.array() - ds.y(i)).square().matrix();
        }
    }
    return err / static_cast<double>(ds.n());
}

// Replace each interior value by the median of itself and its neighbours.
inline Vector median3(const Vector& v)
{
    Vector out = v;
    for (Index k = 1; k + 1 < v.size(); ++k) {
        double a = v(k - 1), b = v(k), c = v(k + 1);
        if (std::isnan(a) || std::isnan(b) || std::isnan(c)) continue;
        out(k) = std::max(std::min(a, b), std::min(std::max(a, b), c));
    }
    return out;
}

struct SelectionResult
{
    double tau_cv = 0.0;
    double tau_escv = 0.0;
    Index index_cv = 0;
    Index index_escv = 0;
    Vector beta_cv;    // standardized units, from the full-data path
    Vector beta_escv;
    Index model_size_cv = 0;
    Index model_size_escv = 0;
    bool fallback_to_cv = false;  // ES undefined on every eligible grid point
    std::vector<std::string> warnings;
    StabilityCurve curves;
};

inline Index model_size(const Vector& beta)
{
    return (beta.array().abs() > support_tol).count();
}

namespace detail {

// Largest index among entries within tie_tol of the minimum over [0, last].
// Entries that are NaN are skipped. Returns -1 if none qualify.
inline Index largest_argmin(const Vector& values, Index last)
{
    double best = std::numeric_limits<double>::infinity();
    for (Index k = 0; k <= last; ++k) {
        if (!std::isnan(values(k))) best = std::min(best, values(k));
    }
    if (!std::isfinite(best)) return -1;
    Index arg = -1;
    for (Index k = 0; k <= last; ++k) {
        if (!std::isnan(values(k)) && values(k) <= best + tie_tol) arg = k;
    }
    return arg;
}

} // namespace detail

/*
 * The ES-CV rule on a grid: tau_cv minimizes the CV error (largest tau on
 * ties); tau_escv is the largest tau minimizing ES among grid points with
 * tau <= tau_cv. Coefficients are not filled in; see select_escv below.
 */
inline SelectionResult select_on_grid(const StabilityCurve& curves, bool smooth_es = false)
{
    const Index G = static_cast<Index>(curves.tau_grid.size());
    if (G == 0 || curves.cv_error.size() != G || curves.es.size() != G) {
        throw InvalidArgument("ES and CV curves must share a non-empty grid");
    }
    SelectionResult res;
    res.curves = curves;
    res.index_cv = detail::largest_argmin(curves.cv_error, G - 1);
    if (res.index_cv < 0) throw NumericalError("CV curve has no finite value");
    res.tau_cv = curves.tau_grid[static_cast<std::size_t>(res.index_cv)];

    const Vector es = smooth_es ? median3(curves.es) : curves.es;
    Index last = res.index_cv;
    while (last + 1 < G && curves.tau_grid[static_cast<std::size_t>(last + 1)] <= res.tau_cv) ++last;
    res.index_escv = detail::largest_argmin(es, last);
    if (res.index_escv < 0) {
        res.fallback_to_cv = true;
        res.index_escv = res.index_cv;
        res.warnings.push_back("ES undefined for every tau <= tau_cv; using the CV selection");
    }
    res.tau_escv = curves.tau_grid[static_cast<std::size_t>(res.index_escv)];
    return res;
}

/*
 * Apply the rule and read the selected models off the full-data path. If a
 * selected tau lies beyond the path, the largest path solution is used and a
 * warning recorded.
 */
inline SelectionResult select_escv(const StabilityCurve& curves, const lasso::Path& full_path,
                                   bool smooth_es = false)
{
    SelectionResult res = select_on_grid(curves, smooth_es);
    auto at = [&](double tau) {
        if (tau > full_path.max_tau()) {
            res.warnings.push_back("tau=" + std::to_string(tau)
                                   + " beyond full-data path; using its largest solution");
            tau = full_path.max_tau();
        }
        return lasso::interpolate_at_tau(full_path, tau);
    };
    res.beta_cv = at(res.tau_cv);
    res.beta_escv = at(res.tau_escv);
    res.model_size_cv = model_size(res.beta_cv);
    res.model_size_escv = model_size(res.beta_escv);
    return res;
}

struct Options
{
    Index v_blocks = 10;
    Index tau_grid_size = 100;
    bool standardize = true;
    bool smooth_es = false;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    lasso::PathOptions path;
};

/*
 * Everything from raw data to a selection: standardize, partition, fold
 * paths, curves, full-data path and the ES-CV rule.
 */
struct Report
{
    Dataset data;          // as fitted (standardized unless disabled)
    FoldPlan plan;
    FoldEstimates folds;
    lasso::Path full_path;
    SelectionResult selection;

    LinearModel model_cv() const
    {
        return to_original_units(data, selection.beta_cv, full_path.intercept(selection.beta_cv) );
    }
    LinearModel model_escv() const
    {
        return to_original_units(data, selection.beta_escv, full_path.intercept(selection.beta_escv));
    }
};

inline Report run_escv(const Dataset& raw, const Options& opts = {})
{
    Report rep;
    rep.data = opts.standardize ? standardize(raw) : raw;
    rep.plan = make_folds(rep.data.n(), opts.v_blocks, opts.seed);
    rep.folds = fold_estimates(rep.data, rep.plan, opts.tau_grid_size, opts.path, opts.jobs);

    const auto full = lasso::make_problem(rep.data);
    StabilityCurve curves = es_curve(rep.folds.betas, full.x, rep.plan, rep.folds.tau_grid);
    curves.cv_error = cv_curve(rep.data, rep.plan, rep.folds);

    // The full-data path must reach every grid tau; lower the lambda floor if not.
    auto popts = opts.path;
    rep.full_path = lasso::fit_path(full, popts);
    const double need = rep.folds.tau_grid.back();
    for (int tries = 0; tries < 3 && rep.full_path.max_tau() < need; ++tries) {
        popts.floor_ratio *= 0.1;
        rep.full_path = lasso::fit_path(full, popts);
    }
    rep.selection = select_escv(curves, rep.full_path, opts.smooth_es);
    return rep;
}

} // namespace stability
} // namespace escv
