#pragma once
#include <escv/common.hpp>
#include <escv/distributions.hpp>
#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace escv {

/*
 * Regression data: response y (n) and design x (n, p).
 *
 * When standardized, every non-constant column of x has mean 0 and sample
 * standard deviation 1 (n - 1 denominator); column_means / column_scales hold
 * the original-unit statistics so coefficients can be mapped back.
 * Constant columns are centered to zero, keep scale 1 and are flagged in
 * constant_columns; penalized fits leave their coefficient at 0.
 */
struct Dataset
{
    Vector y;
    Matrix x;
    bool standardized = false;
    Vector column_means;
    Vector column_scales;
    std::vector<bool> constant_columns;
    std::vector<std::string> names;  // response name first, then p predictors

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }

    bool penalized(Index j) const
    {
        return constant_columns.empty() || !constant_columns[static_cast<std::size_t>(j)];
    }
};

inline std::vector<std::string> default_names(Index p)
{
    std::vector<std::string> names{"y"};
    for (Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

// Throws InvalidArgument if the dataset violates its shape/finiteness invariants.
inline void validate(const Dataset& ds)
{
    if (ds.n() < 2) throw InvalidArgument("dataset needs n >= 2 rows");
    if (ds.p() < 1) throw InvalidArgument("dataset needs p >= 1 columns");
    if (ds.y.size() != ds.n()) {
        throw InvalidArgument("response length " + std::to_string(ds.y.size())
                              + " does not match design rows " + std::to_string(ds.n()));
    }
    if (!ds.x.allFinite() || !ds.y.allFinite()) {
        throw InvalidArgument("dataset contains non-finite entries");
    }
}

inline Dataset make_dataset(Vector y, Matrix x)
{
    Dataset ds;
    ds.y = std::move(y);
    ds.x = std::move(x);
    ds.column_means = Vector::Zero(ds.p());
    ds.column_scales = Vector::Ones(ds.p());
    ds.constant_columns.assign(static_cast<std::size_t>(ds.p()), false);
    ds.names = default_names(ds.p());
    validate(ds);
    return ds;
}

/*
 * Design covariance for synthetic data.
 */
struct Covariance
{
    enum class Kind { identity, equicorrelated, user };
    Kind kind = Kind::identity;
    double rho = 0.0;  // equicorrelated only
    Matrix matrix;     // user only

    static Covariance identity() { return {}; }
    static Covariance equicorrelated(double rho) { return {Kind::equicorrelated, rho, {}}; }
    static Covariance user(Matrix m) { return {Kind::user, 0.0, std::move(m)}; }

    Matrix materialize(Index p) const
    {
        switch (kind) {
            case Kind::identity:
                return Matrix::Identity(p, p);
            case Kind::equicorrelated: {
                Matrix s = Matrix::Constant(p, p, rho);
                s.diagonal().setOnes();
                return s;
            }
            case Kind::user:
                if (matrix.rows() != p || matrix.cols() != p) {
                    throw InvalidArgument("user covariance must be p x p");
                }
                return matrix;
        }
        return {};
    }
};

struct SimConfig
{
    Index n = 0;
    Index p = 0;
    Vector beta_true;
    Covariance design_covariance;
    ErrorDist error_dist = ErrorDist::gaussian(1.0);
    std::uint64_t seed = 0;
};

namespace detail {

// Lower Cholesky factor of the design covariance, nullopt for identity.
inline std::optional<Matrix> covariance_factor(const Covariance& cov, Index p)
{
    if (cov.kind == Covariance::Kind::identity) return std::nullopt;
    const Matrix s = cov.materialize(p);
    if (!s.isApprox(s.transpose(), 1e-12)) {
        throw InvalidArgument("design covariance is not symmetric");
    }
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
        throw InvalidArgument("design covariance is not positive definite");
    }
    // LLT succeeds on some numerically singular inputs; require a usable pivot.
    const Vector diag = Matrix(llt.matrixL()).diagonal();
    if (diag.minCoeff() <= 1e-12 * diag.maxCoeff()) {
        throw InvalidArgument("design covariance is not positive definite (min pivot "
                              + std::to_string(diag.minCoeff()) + ")");
    }
    return Matrix(llt.matrixL());
}

} // namespace detail

/*
 * Draw n rows x_i ~ N(0, Sigma) and errors e_i from cfg.error_dist, and
 * return y = x beta_true + e. All draws come from one mt19937_64 seeded with
 * cfg.seed: the design is drawn row-major first, then the n errors.
 */
inline Dataset generate_linear(const SimConfig& cfg)
{
    if (cfg.n < 2) throw InvalidArgument("n must be >= 2");
    if (cfg.p < 1) throw InvalidArgument("p must be >= 1");
    if (cfg.beta_true.size() != cfg.p) {
        throw InvalidArgument("beta_true length must equal p");
    }
    const auto factor = detail::covariance_factor(cfg.design_covariance, cfg.p);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, 1.0);

    Matrix x(cfg.n, cfg.p);
    for (Index i = 0; i < cfg.n; ++i) {
        for (Index j = 0; j < cfg.p; ++j) x(i, j) = nd(rng);
    }
    if (factor) x = x * factor->transpose();

    Vector eps(cfg.n);
    for (Index i = 0; i < cfg.n; ++i) eps(i) = cfg.error_dist.sample(rng);

    Vector y = x * cfg.beta_true + eps;
    return make_dataset(std::move(y), std::move(x));
}

inline constexpr double constant_column_tol = 1e-12;

/*
 * Center every column and scale it to unit sample standard deviation.
 * Already-standardized input is returned unchanged. Constant columns are
 * centered (to all zeros), keep scale 1 and are flagged.
 */
inline Dataset standardize(const Dataset& ds)
{
    validate(ds);
    if (ds.standardized) return ds;

    Dataset out = ds;
    const double n = static_cast<double>(ds.n());
    out.column_means.resize(ds.p());
    out.column_scales.resize(ds.p());
    out.constant_columns.assign(static_cast<std::size_t>(ds.p()), false);

    for (Index j = 0; j < ds.p(); ++j) {
        const double mean = ds.x.col(j).mean();
        auto col = out.x.col(j);
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / (n - 1.0));
        out.column_means(j) = mean;
        if (sd <= constant_column_tol * std::max(1.0, std::abs(mean))) {
            col.setZero();
            out.column_scales(j) = 1.0;
            out.constant_columns[static_cast<std::size_t>(j)] = true;
        } else {
            col /= sd;
            out.column_scales(j) = sd;
        }
    }
    out.standardized = true;
    return out;
}

/*
 * Linear model in original data units: prediction = intercept + x' beta.
 */
struct LinearModel
{
    double intercept = 0.0;
    Vector beta;

    Vector predict(const Eigen::Ref<const Matrix>& x) const
    {
        return (x * beta).array() + intercept;
    }
};

/*
 * Map coefficients fitted on the standardized design (with the response
 * centered at y_mean) back to original units.
 */
inline LinearModel to_original_units(const Dataset& ds, const Vector& beta_std, double y_mean)
{
    LinearModel m;
    m.beta = beta_std.array() / ds.column_scales.array();
    for (Index j = 0; j < ds.p(); ++j) {
        if (!ds.penalized(j)) m.beta(j) = 0.0;
    }
    m.intercept = y_mean - ds.column_means.dot(m.beta);
    return m;
}

/*
 * Random partition of n rows into V blocks. Rows are shuffled with
 * mt19937_64(seed); the k-th shuffled row goes to block k mod V, so block
 * sizes are floor(n/V) or ceil(n/V). Block ids run from 1 to V.
 */
struct FoldPlan
{
    Index v_blocks = 0;
    std::vector<Index> block_assignments;  // block ids 1..V
    Index d = 0;  // floor(n / V): the delete size used by the ES scale factor

    Index n() const { return static_cast<Index>(block_assignments.size()); }

    // v is a zero-based fold index: fold v is the block with id v + 1.
    std::vector<Index> held_out(Index v) const
    {
        std::vector<Index> rows;
        for (Index i = 0; i < n(); ++i) {
            if (block_assignments[static_cast<std::size_t>(i)] == v + 1) rows.push_back(i);
        }
        return rows;
    }

    // Rows of the v-th pseudo dataset (all rows not in block v).
    std::vector<Index> training(Index v) const
    {
        std::vector<Index> rows;
        for (Index i = 0; i < n(); ++i) {
            if (block_assignments[static_cast<std::size_t>(i)] != v + 1) rows.push_back(i);
        }
        return rows;
    }
};

inline FoldPlan make_folds(Index n, Index v, std::uint64_t seed)
{
    if (v < 2) throw InvalidArgument("number of blocks V must be >= 2");
    if (v > n) {
        throw InvalidArgument("number of blocks V=" + std::to_string(v)
                              + " exceeds n=" + std::to_string(n));
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    // Fisher-Yates by hand: std::shuffle's draw sequence is implementation defined.
    for (Index i = n - 1; i > 0; --i) {
        const Index k = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(k)]);
    }

    FoldPlan plan;
    plan.v_blocks = v;
    plan.d = n / v;
    plan.block_assignments.assign(static_cast<std::size_t>(n), 0);
    for (Index k = 0; k < n; ++k) {
        plan.block_assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k % v + 1;
    }
    return plan;
}

inline Dataset subset_rows(const Dataset& ds, const std::vector<Index>& rows)
{
    Dataset out = ds;
    out.y.resize(static_cast<Index>(rows.size()));
    out.x.resize(static_cast<Index>(rows.size()), ds.p());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.y(static_cast<Index>(k)) = ds.y(rows[k]);
        out.x.row(static_cast<Index>(k)) = ds.x.row(rows[k]);
    }
    return out;
}

} // namespace escv
