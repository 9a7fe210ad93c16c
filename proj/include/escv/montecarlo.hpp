#pragma once
#include <escv/distributions.hpp>
#include <escv/loss.hpp>
#include <escv/m_estimators.hpp>
#include <escv/parallel.hpp>
#include <escv/regime.hpp>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace escv {
namespace mc {

/*
 * Replicate seeding: replicate i draws from mt19937_64(splitmix64(seed + i)).
 * Each replicate draws its n x p standard normal design row-major, then n
 * errors; the response is the error vector (beta = 0, identity covariance).
 */
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate)
{
    return splitmix64(seed + replicate);
}

struct Config
{
    Index n = 500;
    Index p = 250;
    LossSpec loss = LossSpec::squared();
    ErrorDist error_dist = ErrorDist::laplace(1.0);
    Index replicates = 200;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

struct Summary
{
    Index n = 0;
    Index p = 0;
    double kappa = 0.0;   // p / n
    LossSpec loss;
    ErrorDist error_dist = ErrorDist::gaussian(1.0);
    Index replicates = 0;
    std::uint64_t seed = 0;

    std::vector<double> norms;      // NaN for failed replicates
    std::vector<bool> converged;
    Matrix directions;              // (p, R), beta_hat / ||beta_hat||; zero column if beta_hat = 0
    Index failures = 0;

    double norm_mean = 0.0;
    double norm_sd = 0.0;
    double norm_se = 0.0;
};

// One replicate's design and response.
inline void draw_replicate(const Config& cfg, Index replicate, Matrix& x, Vector& y)
{
    std::mt19937_64 rng(replicate_seed(cfg.seed, static_cast<std::uint64_t>(replicate)));
    std::normal_distribution<double> nd(0.0, 1.0);
    x.resize(cfg.n, cfg.p);
    for (Index i = 0; i < cfg.n; ++i) {
        for (Index j = 0; j < cfg.p; ++j) x(i, j) = nd(rng);
    }
    y.resize(cfg.n);
    for (Index i = 0; i < cfg.n; ++i) y(i) = cfg.error_dist.sample(rng);
}

inline Summary summarize(Summary s)
{
    double sum = 0.0;
    Index ok = 0;
    for (double v : s.norms) {
        if (!std::isnan(v)) {
            sum += v;
            ++ok;
        }
    }
    s.failures = s.replicates - ok;
    if (ok == 0) {
        s.norm_mean = s.norm_sd = s.norm_se = std::nan("");
        return s;
    }
    s.norm_mean = sum / static_cast<double>(ok);
    double ss = 0.0;
    for (double v : s.norms) {
        if (!std::isnan(v)) ss += (v - s.norm_mean) * (v - s.norm_mean);
    }
    s.norm_sd = ok > 1 ? std::sqrt(ss / static_cast<double>(ok - 1)) : 0.0;
    s.norm_se = s.norm_sd / std::sqrt(static_cast<double>(ok));
    return s;
}

/*
 * R independent replicates of ||beta_hat|| for the given loss. A failed
 * fit is recorded (norm NaN, converged false) and counted in `failures`.
 */
inline Summary run_norm_mc(const Config& cfg)
{
    if (!(cfg.n > cfg.p && cfg.p >= 1)) throw InvalidArgument("need n > p >= 1");
    if (cfg.replicates < 2) throw InvalidArgument("need at least 2 replicates");

    Summary s;
    s.n = cfg.n;
    s.p = cfg.p;
    s.kappa = static_cast<double>(cfg.p) / static_cast<double>(cfg.n);
    s.loss = cfg.loss;
    s.error_dist = cfg.error_dist;
    s.replicates = cfg.replicates;
    s.seed = cfg.seed;
    const auto R = static_cast<std::size_t>(cfg.replicates);
    s.norms.assign(R, std::nan(""));
    s.converged.assign(R, false);
    s.directions = Matrix::Zero(cfg.p, cfg.replicates);

    std::vector<char> conv(R, 0);  // vector<bool> is not safe for concurrent writes
    parallel_for(R, cfg.jobs, [&](std::size_t k) {
        Matrix x;
        Vector y;
        draw_replicate(cfg, static_cast<Index>(k), x, y);
        try {
            const auto fit = mest::fit_m(x, y, cfg.loss);
            s.norms[k] = fit.norm;
            conv[k] = fit.converged ? 1 : 0;
            if (fit.norm > 0.0) s.directions.col(static_cast<Index>(k)) = fit.beta_hat / fit.norm;
        } catch (const Error&) {
            conv[k] = 0;
        }
    });
    for (std::size_t k = 0; k < R; ++k) s.converged[k] = conv[k] != 0;
    return summarize(std::move(s));
}

struct Agreement
{
    double r_theory = 0.0;
    double norm_mean = 0.0;
    double norm_se = 0.0;
    double z = 0.0;
    bool kappa_matches = true;
    bool pass = false;
};

inline constexpr double agreement_z = 3.0;

/*
 * z = (norm_mean - r) / norm_se, pass when |z| <= 3 and the aspect ratio
 * p/n equals the solution's kappa. Loss or error distribution mismatches are
 * rejected; a kappa mismatch is reported as a failing comparison.
 */
inline Agreement compare_theory_mc(const Summary& s, const regime::RegimeSolution& sol)
{
    if (!s.loss.same_family(sol.loss)) throw InvalidArgument("loss differs between simulation and theory");
    if (!(s.error_dist == sol.error_dist)) {
        throw InvalidArgument("error distribution differs between simulation and theory");
    }
    Agreement a;
    a.r_theory = sol.r;
    a.norm_mean = s.norm_mean;
    a.norm_se = s.norm_se;
    a.z = (s.norm_mean - sol.r) / s.norm_se;
    a.kappa_matches = std::abs(s.kappa - sol.kappa) <= 1e-12;
    a.pass = a.kappa_matches && std::abs(a.z) <= agreement_z;
    return a;
}

/*
 * Moments of beta_hat / ||beta_hat|| against the uniform distribution on the
 * sphere: coordinate means within 4/sqrt(R p) of 0, mean of u_1^2 within
 * 4 sd of 1/p, and for p = 1 the fraction of positive signs within
 * 4 sqrt(0.25/R) of 1/2.
 */
struct DirectionDiagnostic
{
    double max_abs_coordinate_mean = 0.0;
    double coordinate_mean_bound = 0.0;
    bool coordinate_means_ok = false;
    double mean_u1_sq = 0.0;
    double u1_sq_bound = 0.0;
    bool u1_sq_ok = false;
    double positive_fraction = std::nan("");  // p = 1 only
    bool sign_ok = true;

    bool ok() const { return coordinate_means_ok && u1_sq_ok && sign_ok; }
};

inline DirectionDiagnostic direction_uniformity_check(const Summary& s)
{
    std::vector<Index> cols;
    for (Index k = 0; k < s.replicates; ++k) {
        if (s.directions.col(k).squaredNorm() > 0.5) cols.push_back(k);
    }
    const auto R = static_cast<double>(cols.size());
    if (cols.size() < 100) throw InvalidArgument("direction check needs at least 100 nonzero replicates");
    const double p = static_cast<double>(s.p);

    DirectionDiagnostic d;
    Vector mean = Vector::Zero(s.p);
    double u1sq = 0.0;
    double positive = 0.0;
    for (Index k : cols) {
        mean += s.directions.col(k);
        u1sq += s.directions(0, k) * s.directions(0, k);
        if (s.directions(0, k) > 0.0) positive += 1.0;
    }
    mean /= R;
    d.max_abs_coordinate_mean = mean.cwiseAbs().maxCoeff();
    d.coordinate_mean_bound = 4.0 / std::sqrt(R * p);
    d.coordinate_means_ok = d.max_abs_coordinate_mean <= d.coordinate_mean_bound;

    d.mean_u1_sq = u1sq / R;
    // uniform on the sphere: E[u1^4] = 3 / (p (p + 2))
    const double var = 3.0 / (p * (p + 2.0)) - 1.0 / (p * p);
    d.u1_sq_bound = 4.0 * std::sqrt(std::max(var, 0.0) / R);
    d.u1_sq_ok = std::abs(d.mean_u1_sq - 1.0 / p) <= d.u1_sq_bound + 1e-12;

    if (s.p == 1) {
        d.positive_fraction = positive / R;
        d.sign_ok = std::abs(d.positive_fraction - 0.5) <= 4.0 * std::sqrt(0.25 / R);
    }
    return d;
}

} // namespace mc
} // namespace escv
