// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <escv/escv.hpp>

#include "oracles.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace escv;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = true;
    std::string detail;
};

std::string num(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

unsigned threads() { return default_jobs(); }

// ---------------------------------------------------------------- 1

Outcome lasso_oracle()
{
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> un(5, 20), up(1, 6);
    std::uniform_real_distribution<double> frac(0.02, 0.9);
    double worst_gap = 0.0, worst_kkt = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const int n = un(rng), p = up(rng);
        const Matrix x = oracle::random_normal(n, p, rng);
        const Vector y = x.col(0) * 1.5 + oracle::random_normal(n, rng);
        const Dataset ds = make_dataset(y, x);
        const auto pr = lasso::make_problem(ds);
        const double lmax = lasso::lambda_max(pr);
        for (double f : {frac(rng), frac(rng), 0.0}) {
            const double lambda = f * lmax;
            if (lambda == 0.0 && n <= p) continue;  // no unique OLS fit to compare
            const Vector b = lasso::fit(pr, lambda);
            const auto qp = oracle::lasso_qp(pr.x, pr.y, lambda);
            const double gap = std::abs(lasso::objective(pr, b, lambda) - qp.objective);
            worst_gap = std::max(worst_gap, gap / std::max(1.0, qp.objective));
        }
        const auto path = lasso::fit_path(pr, lasso::PathOptions{});
        for (double r : path.kkt_residuals) worst_kkt = std::max(worst_kkt, r);
    }
    const double kkt_tol = lasso::Options{}.kkt_tol;
    return {worst_gap <= 1e-6 && worst_kkt <= kkt_tol,
            "max objective gap " + num(worst_gap) + " (tol 1e-6), max KKT residual " + num(worst_kkt) +
                " (tol " + num(kkt_tol) + ")"};
}

// ---------------------------------------------------------------- 2

Outcome es_identity()
{
    double worst = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SimConfig c;
        c.n = 60 + static_cast<Index>(seed) * 7;
        c.p = 30;
        c.beta_true = Vector::Zero(30);
        c.beta_true.head(4).setConstant(1.0);
        c.error_dist = ErrorDist::gaussian(1.0);
        c.seed = seed;
        stability::Options o;
        o.v_blocks = 5 + static_cast<Index>(seed);
        o.tau_grid_size = 60;
        o.seed = seed;
        const auto rep = stability::run_escv(generate_linear(c), o);
        const auto& cur = rep.selection.curves;
        const double factor = static_cast<double>(cur.d) / static_cast<double>(cur.n - cur.d);
        for (Index k = 0; k < cur.es.size(); ++k) {
            if (!cur.defined(k)) continue;
            const double direct = factor * cur.that(k) / cur.mhat_sq_norm(k);
            worst = std::max(worst, std::abs(cur.es(k) - direct) / std::max(1.0, std::abs(direct)));
        }
    }

    const oracle::EsInstance inst;
    FoldPlan plan;
    plan.v_blocks = 2;
    plan.block_assignments = {1, 2, 1, 2};
    plan.d = 2;
    const auto cur = stability::es_curve(inst.fold_betas, inst.x, plan, {0.0, 1.0, 2.0});
    double script = 0.0;
    for (Index k = 1; k < 3; ++k) {
        script = std::max({script, std::abs(cur.es(k) - inst.es[k]), std::abs(cur.z2(k) - inst.z2[k]),
                           std::abs(cur.that(k) - inst.that[k]), std::abs(cur.mhat_sq_norm(k) - inst.mhat_sq[k])});
    }
    const bool undefined_first = !cur.defined(0);
    return {worst <= 1e-12 && script <= 1e-10 && undefined_first,
            "identity max rel error " + num(worst) + " (tol 1e-12), scripted V=2 instance max error " +
                num(script) + " (tol 1e-10)"};
}

// ---------------------------------------------------------------- 3

Outcome selection_invariant()
{
    int tau_violations = 0, size_violations = 0, runs = 0;
    for (Index p : {50, 150}) {
        for (std::uint64_t rep = 0; rep < 50; ++rep) {
            SimConfig c;
            c.n = 100;
            c.p = p;
            c.beta_true = Vector::Zero(p);
            c.beta_true.head(10).setConstant(1.0);
            c.error_dist = ErrorDist::gaussian(std::sqrt(10.0 / 2.0));
            c.seed = 1000 + rep + static_cast<std::uint64_t>(p) * 100;
            stability::Options o;
            o.seed = c.seed;
            o.jobs = threads();
            const auto sel = stability::run_escv(generate_linear(c), o).selection;
            ++runs;
            if (sel.tau_escv > sel.tau_cv) ++tau_violations;
            if (sel.model_size_escv > sel.model_size_cv) {
                ++size_violations;
                std::cout << "  size violation: p=" << p << " seed=" << c.seed << " escv " << sel.model_size_escv
                          << " > cv " << sel.model_size_cv << "\n";
            }
        }
    }
    const double ok_fraction = 1.0 - static_cast<double>(size_violations) / runs;
    return {tau_violations == 0 && ok_fraction >= 0.95,
            std::to_string(runs) + " runs, tau violations " + std::to_string(tau_violations) +
                ", size order holds in " + num(100.0 * ok_fraction) + "% (need >= 95%)"};
}

// ---------------------------------------------------------------- 4

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Outcome sparsity_benefit()
{
    const Index n = 100, p = 150;
    const double rho = 0.5;
    Vector beta = Vector::Zero(p);
    beta.head(10).setConstant(1.0);
    const Matrix sigma = Covariance::equicorrelated(rho).materialize(p);
    const double noise_var = beta.dot(sigma * beta) / 2.0;  // SNR 2

    std::vector<double> size_cv, size_escv;
    double err_cv = 0.0, err_escv = 0.0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        SimConfig c;
        c.n = n;
        c.p = p;
        c.beta_true = beta;
        c.design_covariance = Covariance::equicorrelated(rho);
        c.error_dist = ErrorDist::gaussian(std::sqrt(noise_var));
        c.seed = 5000 + static_cast<std::uint64_t>(rep);
        SimConfig t = c;
        t.n = 1000;
        t.seed = mc::splitmix64(c.seed);
        const Dataset test = generate_linear(t);

        stability::Options o;
        o.seed = c.seed;
        o.jobs = threads();
        const auto r = stability::run_escv(generate_linear(c), o);
        size_cv.push_back(static_cast<double>(r.selection.model_size_cv));
        size_escv.push_back(static_cast<double>(r.selection.model_size_escv));
        err_cv += (test.y - r.model_cv().predict(test.x)).squaredNorm() / static_cast<double>(t.n);
        err_escv += (test.y - r.model_escv().predict(test.x)).squaredNorm() / static_cast<double>(t.n);
    }
    err_cv /= reps;
    err_escv /= reps;
    const double med_cv = median(size_cv), med_escv = median(size_escv);
    const double rel = (err_escv - err_cv) / err_cv;
    return {med_escv < med_cv && std::abs(rel) <= 0.10,
            "median size escv " + num(med_escv) + " vs cv " + num(med_cv) + "; mean test error escv " +
                num(err_escv) + " vs cv " + num(err_cv) + " (relative " + num(100.0 * rel) + "%, limit 10%)"};
}

// ---------------------------------------------------------------- 5

Outcome squared_closed_form()
{
    double worst = 0.0;
    for (const auto& dist : {ErrorDist::gaussian(1.0), ErrorDist::laplace(1.0)}) {
        for (double kappa : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            const auto s = regime::solve_system(LossSpec::squared(), dist, kappa);
            worst = std::max({worst, std::abs(s.r * s.r - kappa * dist.variance() / (1.0 - kappa)),
                              std::abs(s.c - kappa / (2.0 * (1.0 - kappa)))});
        }
    }
    return {worst <= 1e-8, "max error in r^2 and c " + num(worst) + " (tol 1e-8)"};
}

// ---------------------------------------------------------------- 6

Outcome crossover()
{
    const ErrorDist lap = ErrorDist::laplace(1.0);
    const auto cx = regime::find_crossover(lap, 0.05, 0.9);
    auto gap = [&](double k) {
        return regime::solve_system(LossSpec::absolute(), lap, k).r - regime::solve_system(LossSpec::squared(), lap, k).r;
    };
    bool order = gap(0.1) < 0.0;
    for (double k : {0.4, 0.5, 0.7, 0.9}) order = order && gap(k) > 0.0;
    const bool in_range = cx.found && cx.kappa >= 0.25 && cx.kappa <= 0.35;
    return {in_range && order, "kappa* = " + num(cx.kappa) + " (need [0.25, 0.35]); LAD-LS gap at 0.1 " +
                                   num(gap(0.1)) + ", at 0.5 " + num(gap(0.5)) +
                                   (order ? ", orderings hold" : ", ordering violated")};
}

// ---------------------------------------------------------------- 7

Outcome theory_vs_mc()
{
    Outcome out;
    for (const auto& loss : {LossSpec::squared(), LossSpec::absolute()}) {
        for (double kappa : {0.1, 0.5}) {
            mc::Config c;
            c.n = 500;
            c.p = static_cast<Index>(std::lround(kappa * 500));
            c.loss = loss;
            c.error_dist = ErrorDist::laplace(1.0);
            c.replicates = 200;
            c.seed = 7;
            c.jobs = threads();
            const auto s = mc::run_norm_mc(c);
            const auto sol = regime::solve_system(loss, c.error_dist, kappa);
            const double dev = std::abs(s.norm_mean - sol.r);
            const bool ok = dev <= 3.0 * s.norm_se && s.failures == 0;
            out.pass = out.pass && ok;
            out.detail += (out.detail.empty() ? "" : "; ") + loss.name() + " kappa " + num(kappa) + ": |" +
                          num(s.norm_mean) + " - " + num(sol.r) + "| = " + num(dev / s.norm_se) + " se";
        }
    }
    return out;
}

// ---------------------------------------------------------------- 8

Outcome rotation()
{
    std::mt19937_64 rng(808);
    const Matrix x = oracle::random_normal(60, 20, rng);
    const ErrorDist lap = ErrorDist::laplace(1.0);
    Vector y(60);
    for (Index i = 0; i < 60; ++i) y(i) = lap.sample(rng);
    const double ols = mest::fit_ols(x, y).norm, lad = mest::fit_lad(x, y).norm;
    double worst_ols = 0.0, worst_lad = 0.0;
    for (int k = 0; k < 10; ++k) {
        const Matrix q = oracle::random_orthogonal(20, rng);
        worst_ols = std::max(worst_ols, std::abs(mest::fit_ols(x * q, y).norm - ols));
        worst_lad = std::max(worst_lad, std::abs(mest::fit_lad(x * q, y).norm - lad));
    }
    return {worst_ols <= 1e-8 && worst_lad <= 1e-5,
            "max norm change OLS " + num(worst_ols) + " (tol 1e-8), LAD " + num(worst_lad) + " (tol 1e-5)"};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::vector<std::string>& args, const fs::path& log)
{
    std::string cmd = "'" + std::string(ESCV_CLI) + "'";
    for (const auto& a : args) cmd += " '" + a + "'";
    cmd += " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism()
{
    const fs::path w = ESCV_TEST_WORKDIR;
    fs::remove_all(w);
    fs::create_directories(w);
    const std::string data = (w / "gen" / "data.csv").string();
    const std::string test = (w / "gen" / "test.csv").string();
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
        {"gen", {"gen", "--n", "100", "--p", "150", "--rho", "0.5", "--snr", "2", "--n-test", "200", "--seed", "7"}},
        {"select", {"select", "--data", data, "--test", test, "--seed", "3", "--jobs", "4"}},
        {"regime", {"regime", "--loss", "lad", "--dist", "laplace", "--kappa", "0.1", "0.5", "0.9"}},
        {"crossover", {"regime", "--crossover", "--dist", "laplace"}},
        {"mc", {"mc", "--loss", "lad", "--n", "200", "--kappa", "0.5", "--replicates", "120", "--check-theory",
                "--jobs", "4"}}};

    Outcome out;
    int files = 0;
    for (const auto& [name, args] : runs) {
        auto first = args;
        first.insert(first.end(), {"--out", (w / name).string()});
        const int rc1 = run_cli(first, w / (name + ".log"));
        const int rc2 = run_cli({args[0], "--config", (w / name / "config.json").string(), "--out",
                                 (w / (name + "_rerun")).string()},
                                w / (name + "_rerun.log"));
        if (rc1 != 0 || rc2 != 0) {
            out.pass = false;
            out.detail += name + " exited " + std::to_string(rc1) + "/" + std::to_string(rc2) + "; ";
            continue;
        }
        for (const auto& e : fs::directory_iterator(w / name)) {
            ++files;
            const fs::path other = w / (name + "_rerun") / e.path().filename();
            if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
                out.pass = false;
                out.detail += name + "/" + e.path().filename().string() + " differs; ";
            }
        }
    }
    out.detail += std::to_string(runs.size()) + " commands, " + std::to_string(files) + " output files compared";
    return out;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"lasso oracle equivalence", lasso_oracle},
        {"ES identity", es_identity},
        {"selection rule invariant", selection_invariant},
        {"ES-CV sparsity benefit", sparsity_benefit},
        {"squared-loss closed form", squared_closed_form},
        {"LAD/LS crossover", crossover},
        {"theory vs Monte Carlo", theory_vs_mc},
        {"rotation equivariance", rotation},
        {"CLI determinism", determinism}};

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << " [" << num(secs) << " s]" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    return failed == 0 ? 0 : 1;
}
