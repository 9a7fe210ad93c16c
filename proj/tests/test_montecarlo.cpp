#include <escv/montecarlo.hpp>
#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <set>

using namespace escv;
using namespace escv::mc;

TEST(MonteCarlo, OneDimensionalOlsWindow)
{
    Config cfg;
    cfg.n = 100;
    cfg.p = 1;
    cfg.error_dist = ErrorDist::gaussian(1.0);
    cfg.replicates = 200;
    cfg.seed = 1;
    const Summary s = run_norm_mc(cfg);
    EXPECT_GT(s.norm_mean, 0.05);
    EXPECT_LT(s.norm_mean, 0.2);
    // E|N(0, 1/n)| = sqrt(2 / (pi n)) to first order.
    EXPECT_NEAR(s.norm_mean, std::sqrt(2.0 / (std::numbers::pi * 100.0)), 4.0 * s.norm_se);
    EXPECT_EQ(s.failures, 0);
    EXPECT_DOUBLE_EQ(s.kappa, 0.01);
}

TEST(MonteCarlo, NoiselessGivesZeroNorms)
{
    for (const auto& loss : {LossSpec::squared(), LossSpec::absolute()}) {
        Config cfg;
        cfg.n = 40;
        cfg.p = 5;
        cfg.loss = loss;
        cfg.error_dist = ErrorDist::gaussian(0.0);
        cfg.replicates = 5;
        const Summary s = run_norm_mc(cfg);
        for (double v : s.norms) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(s.norm_mean, 0.0);
    }
}

TEST(MonteCarlo, SquaredLossMatchesClosedForm)
{
    Config cfg;
    cfg.n = 500;
    cfg.p = 250;
    cfg.replicates = 200;
    cfg.seed = 3;
    cfg.jobs = default_jobs();
    const Summary s = run_norm_mc(cfg);
    EXPECT_LE(std::abs(s.norm_mean - std::sqrt(2.0)), 3.0 * s.norm_se);
    const auto a = compare_theory_mc(s, regime::solve_system(LossSpec::squared(), cfg.error_dist, 0.5));
    EXPECT_TRUE(a.pass) << "z = " << a.z;
}

TEST(MonteCarlo, DeterministicGivenSeedAndIndependentOfJobs)
{
    Config cfg;
    cfg.n = 60;
    cfg.p = 20;
    cfg.loss = LossSpec::absolute();
    cfg.replicates = 8;
    cfg.seed = 77;
    cfg.jobs = 1;
    const Summary a = run_norm_mc(cfg);
    cfg.jobs = 4;
    const Summary b = run_norm_mc(cfg);
    EXPECT_EQ(a.norms, b.norms);
    EXPECT_EQ(a.directions, b.directions);
    EXPECT_EQ(a.norm_mean, b.norm_mean);
    cfg.seed = 78;
    EXPECT_NE(run_norm_mc(cfg).norms, a.norms);
}

TEST(MonteCarlo, ReplicateSeedsAreDistinct)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i) EXPECT_TRUE(seen.insert(replicate_seed(5, i)).second);
    EXPECT_EQ(replicate_seed(5, 3), splitmix64(8));
}

TEST(MonteCarlo, MismatchedKappaFails)
{
    Config cfg;
    cfg.n = 200;
    cfg.p = 100;
    cfg.replicates = 50;
    const Summary s = run_norm_mc(cfg);
    const auto wrong = compare_theory_mc(s, regime::solve_system(LossSpec::squared(), cfg.error_dist, 0.1));
    EXPECT_FALSE(wrong.pass);
    EXPECT_FALSE(wrong.kappa_matches);
    EXPECT_GT(std::abs(wrong.z), 10.0);
    EXPECT_THROW(compare_theory_mc(s, regime::solve_system(LossSpec::absolute(), cfg.error_dist, 0.5)),
                 InvalidArgument);
    EXPECT_THROW(compare_theory_mc(s, regime::solve_system(LossSpec::squared(), ErrorDist::gaussian(1.0), 0.5)),
                 InvalidArgument);
}

TEST(MonteCarlo, DirectionUniformityTwoDimensions)
{
    Config cfg;
    cfg.n = 50;
    cfg.p = 2;
    cfg.replicates = 1000;
    cfg.seed = 4;
    cfg.jobs = default_jobs();
    const auto d = direction_uniformity_check(run_norm_mc(cfg));
    EXPECT_TRUE(d.coordinate_means_ok) << d.max_abs_coordinate_mean << " > " << d.coordinate_mean_bound;
    EXPECT_TRUE(d.u1_sq_ok) << d.mean_u1_sq;
    EXPECT_TRUE(d.ok());
}

TEST(MonteCarlo, DirectionSignsOneDimension)
{
    Config cfg;
    cfg.n = 30;
    cfg.p = 1;
    cfg.replicates = 400;
    cfg.seed = 5;
    const Summary s = run_norm_mc(cfg);
    for (Index k = 0; k < s.replicates; ++k) EXPECT_EQ(std::abs(s.directions(0, k)), 1.0);
    const auto d = direction_uniformity_check(s);
    EXPECT_TRUE(d.sign_ok) << d.positive_fraction;
}

TEST(MonteCarlo, DirectionCheckNeedsEnoughReplicates)
{
    Config cfg;
    cfg.n = 20;
    cfg.p = 2;
    cfg.replicates = 10;
    EXPECT_THROW(direction_uniformity_check(run_norm_mc(cfg)), InvalidArgument);
}

TEST(MonteCarlo, RotatedDesignsGiveSameNorms)
{
    Config cfg;
    cfg.n = 60;
    cfg.p = 10;
    cfg.replicates = 5;
    cfg.seed = 6;
    std::mt19937_64 rng(99);
    for (const auto& loss : {LossSpec::squared(), LossSpec::absolute()}) {
        cfg.loss = loss;
        for (Index k = 0; k < cfg.replicates; ++k) {
            Matrix x;
            Vector y;
            draw_replicate(cfg, k, x, y);
            const Matrix q = oracle::random_orthogonal(cfg.p, rng);
            const double a = mest::fit_m(x, y, loss).norm;
            const double b = mest::fit_m(x * q, y, loss).norm;
            EXPECT_NEAR(a, b, loss.family == LossSpec::Family::squared ? 1e-10 : 1e-6);
        }
    }
}

TEST(MonteCarlo, RejectsInvalidConfigs)
{
    Config cfg;
    cfg.n = 10;
    cfg.p = 10;
    EXPECT_THROW(run_norm_mc(cfg), InvalidArgument);
    cfg.p = 2;
    cfg.replicates = 1;
    EXPECT_THROW(run_norm_mc(cfg), InvalidArgument);
}
