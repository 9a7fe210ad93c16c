// escv: command-line front end for data generation, ES-CV selection,
// regime solving and Monte Carlo checks.

#include "json_config.hpp"

#include <escv/escv.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace escv;

namespace {

enum ExitCode { exit_ok = 0, exit_io = 1, exit_usage = 2, exit_numerical = 3 };

class IoError : public Error
{
public:
    using Error::Error;
};

fs::path prepare_dir(const std::string& out)
{
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string absolute_path(const std::string& p)
{
    return p.empty() ? p : fs::absolute(fs::path(p)).lexically_normal().string();
}

std::string fmt(double v, int digits = 10)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Resolved parameters of each subcommand. Every field except `out`, `jobs`
// and `config` is echoed to config.json, so rerunning from it is a fixed point.

struct GenArgs
{
    Index n = 100;
    Index p = 10;
    Index k = -1;  // number of nonzero coefficients; -1 means min(10, p)
    double beta_value = 1.0;
    double rho = 0.0;
    std::string dist = "gaussian";
    double scale = 1.0;
    double snr = 0.0;  // > 0 overrides scale: Var(e) = beta' Sigma beta / snr
    std::uint64_t seed = 0;
    Index n_test = 0;
    std::string out = "escv-gen";
};

struct SelectArgs
{
    std::string data;
    std::string response;
    std::string test;
    Index v = 10;
    Index grid = 100;
    Index tau_grid = 100;
    double floor = 1e-3;
    bool no_standardize = false;
    bool smooth_es = false;
    std::uint64_t seed = 0;
    unsigned jobs = default_jobs();
    std::string out = "escv-select";
};

struct RegimeArgs
{
    std::string loss = "l2";
    double delta = 1.0;
    std::string dist = "laplace";
    double scale = 1.0;
    std::vector<double> kappa;
    bool crossover = false;
    double kappa_lo = 0.05;
    double kappa_hi = 0.9;
    double width = 1e-3;
    std::string out = "escv-regime";
};

struct McArgs
{
    std::string loss = "l2";
    double delta = 1.0;
    std::string dist = "laplace";
    double scale = 1.0;
    Index n = 500;
    Index p = 0;
    double kappa = 0.0;  // > 0 sets p = round(kappa n) and takes precedence over p
    Index replicates = 200;
    std::uint64_t seed = 0;
    bool check_theory = false;
    unsigned jobs = default_jobs();
    std::string out = "escv-mc";
};

// ---------------------------------------------------------------- gen

int run_gen(GenArgs a)
{
    if (a.n < 2) throw InvalidArgument("--n must be >= 2");
    if (a.p < 1) throw InvalidArgument("--p must be >= 1");
    if (a.k < 0) a.k = std::min<Index>(10, a.p);
    if (a.k > a.p) throw InvalidArgument("--k cannot exceed --p");
    if (a.n_test < 0) throw InvalidArgument("--n-test must be >= 0");
    if (a.snr < 0.0) throw InvalidArgument("--snr must be >= 0");

    SimConfig cfg;
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.beta_true = Vector::Zero(a.p);
    cfg.beta_true.head(a.k).setConstant(a.beta_value);
    cfg.design_covariance = a.rho == 0.0 ? Covariance::identity() : Covariance::equicorrelated(a.rho);
    cfg.seed = a.seed;

    double scale = a.scale;
    if (a.snr > 0.0) {
        const Matrix sigma = cfg.design_covariance.materialize(a.p);
        const double signal = cfg.beta_true.dot(sigma * cfg.beta_true);
        if (!(signal > 0.0)) throw InvalidArgument("--snr needs a nonzero signal");
        const double var = signal / a.snr;
        scale = ErrorDist::parse(a.dist, 1.0).family() == ErrorDist::Family::gaussian
                    ? std::sqrt(var)
                    : std::sqrt(var / 2.0);
    }
    cfg.error_dist = ErrorDist::parse(a.dist, scale);

    const fs::path dir = prepare_dir(a.out);
    const Dataset ds = generate_linear(cfg);
    save_csv(ds, (dir / "data.csv").string());
    if (a.n_test > 0) {
        SimConfig tc = cfg;
        tc.n = a.n_test;
        tc.seed = mc::splitmix64(a.seed);
        save_csv(generate_linear(tc), (dir / "test.csv").string());
    }
    std::ostringstream truth;
    csv::write_record(truth, {"name", "beta_true"});
    for (Index j = 0; j < a.p; ++j) {
        csv::write_record(truth, {ds.names[static_cast<std::size_t>(j + 1)], csv::format_double(cfg.beta_true(j))});
    }
    write_text(dir / "truth.csv", truth.str());

    json c;
    c["n"] = a.n;
    c["p"] = a.p;
    c["k"] = a.k;
    c["beta-value"] = a.beta_value;
    c["rho"] = a.rho;
    c["dist"] = a.dist;
    c["scale"] = a.scale;
    c["snr"] = a.snr;
    c["seed"] = a.seed;
    c["n-test"] = a.n_test;
    write_json(dir / "config.json", c);

    std::cout << "wrote " << (dir / "data.csv").string() << " (n=" << a.n << ", p=" << a.p
              << ", " << cfg.error_dist.name() << " noise scale " << fmt(scale) << ")\n";
    return exit_ok;
}

// ---------------------------------------------------------------- select

ResponseColumn response_column(const std::string& spec, const std::string& data_path)
{
    if (spec.empty()) return {};
    // A header name wins; otherwise a 1-based column number.
    const auto records = csv::parse(csv::read_file(data_path));
    if (!records.empty()) {
        for (const auto& h : records.front()) {
            if (h == spec) return spec;
        }
    }
    std::size_t pos = 0;
    long k = 0;
    try {
        k = std::stol(spec, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != spec.size() || k < 1) {
        throw InvalidArgument("--response '" + spec + "' is neither a column name nor a column number");
    }
    return static_cast<std::size_t>(k - 1);
}

void write_coefficients(const fs::path& path, const Dataset& data, const LinearModel& model,
                        const Vector& beta_std, double intercept_std)
{
    std::ostringstream os;
    csv::write_record(os, {"name", "coefficient", "standardized_coefficient"});
    csv::write_record(os, {"(intercept)", csv::format_double(model.intercept), csv::format_double(intercept_std)});
    for (Index j = 0; j < data.p(); ++j) {
        const std::string name = static_cast<std::size_t>(j + 1) < data.names.size()
                                      ? data.names[static_cast<std::size_t>(j + 1)]
                                      : "x" + std::to_string(j + 1);
        csv::write_record(os, {name, csv::format_double(model.beta(j)), csv::format_double(beta_std(j))});
    }
    write_text(path, os.str());
}

int run_select(const SelectArgs& a)
{
    if (a.data.empty()) throw InvalidArgument("--data is required");
    const std::string data_path = absolute_path(a.data);
    const std::string test_path = absolute_path(a.test);
    const ResponseColumn resp = response_column(a.response, data_path);
    const Dataset raw = load_csv(data_path, resp);

    stability::Options o;
    o.v_blocks = a.v;
    o.tau_grid_size = a.tau_grid;
    o.standardize = !a.no_standardize;
    o.smooth_es = a.smooth_es;
    o.seed = a.seed;
    o.jobs = a.jobs;
    o.path.grid_size = a.grid;
    o.path.floor_ratio = a.floor;
    const auto rep = stability::run_escv(raw, o);
    const auto& sel = rep.selection;
    const auto& cur = sel.curves;

    const fs::path dir = prepare_dir(a.out);

    std::ostringstream curves;
    csv::write_record(curves, {"tau", "es", "z2", "cv_error", "that", "mhat_sq_norm"});
    for (std::size_t k = 0; k < cur.tau_grid.size(); ++k) {
        const auto i = static_cast<Index>(k);
        csv::write_record(curves, {csv::format_double(cur.tau_grid[k]), csv::format_double(cur.es(i)),
                                   csv::format_double(cur.z2(i)), csv::format_double(cur.cv_error(i)),
                                   csv::format_double(cur.that(i)), csv::format_double(cur.mhat_sq_norm(i))});
    }
    write_text(dir / "curves.csv", curves.str());

    const LinearModel m_cv = rep.model_cv();
    const LinearModel m_escv = rep.model_escv();
    write_coefficients(dir / "coef_cv.csv", rep.data, m_cv, sel.beta_cv, rep.full_path.intercept(sel.beta_cv));
    write_coefficients(dir / "coef_escv.csv", rep.data, m_escv, sel.beta_escv,
                       rep.full_path.intercept(sel.beta_escv));

    std::ostringstream path;
    std::vector<std::string> coef_names(rep.data.names.begin() + 1, rep.data.names.end());
    lasso::write_path_csv(path, rep.full_path, coef_names);
    write_text(dir / "path.csv", path.str());

    int violations = rep.full_path.tau_monotonicity_violations;
    for (const auto& fp : rep.folds.paths) violations += fp.tau_monotonicity_violations;
    Index defined = 0;
    for (Index k = 0; k < cur.es.size(); ++k) defined += cur.defined(k) ? 1 : 0;

    json report;
    report["n"] = raw.n();
    report["p"] = raw.p();
    report["v_blocks"] = rep.plan.v_blocks;
    report["d"] = rep.plan.d;
    report["standardized"] = o.standardize;
    report["tau_grid_size"] = static_cast<Index>(cur.tau_grid.size());
    report["tau_max"] = cur.tau_grid.back();
    report["tau_cv"] = sel.tau_cv;
    report["tau_escv"] = sel.tau_escv;
    report["model_size_cv"] = sel.model_size_cv;
    report["model_size_escv"] = sel.model_size_escv;
    report["cv_error_at_cv"] = cur.cv_error(sel.index_cv);
    report["cv_error_at_escv"] = cur.cv_error(sel.index_escv);
    report["es_defined_points"] = defined;
    report["fallback_to_cv"] = sel.fallback_to_cv;
    report["tau_monotonicity_violations"] = violations;
    report["warnings"] = sel.warnings;
    if (!test_path.empty()) {
        const Dataset test = load_csv(test_path, resp);
        if (test.p() != raw.p()) {
            throw InvalidArgument("test file has " + std::to_string(test.p()) + " predictors, expected "
                                  + std::to_string(raw.p()));
        }
        const double mse_cv = (m_cv.predict(test.x) - test.y).squaredNorm() / static_cast<double>(test.n());
        const double mse_escv = (m_escv.predict(test.x) - test.y).squaredNorm() / static_cast<double>(test.n());
        report["test"] = {{"n", test.n()}, {"mse_cv", mse_cv}, {"mse_escv", mse_escv}};
    } else {
        report["test"] = nullptr;
    }
    report["files"] = {{"curves", "curves.csv"},
                       {"coef_cv", "coef_cv.csv"},
                       {"coef_escv", "coef_escv.csv"},
                       {"path", "path.csv"}};
    write_json(dir / "report.json", report);

    json c;
    c["data"] = data_path;
    if (!a.response.empty()) c["response"] = a.response;
    if (!test_path.empty()) c["test"] = test_path;
    c["v"] = a.v;
    c["grid"] = a.grid;
    c["tau-grid"] = a.tau_grid;
    c["floor"] = a.floor;
    c["no-standardize"] = a.no_standardize;
    c["smooth-es"] = a.smooth_es;
    c["seed"] = a.seed;
    write_json(dir / "config.json", c);

    std::cout << "tau_cv   " << fmt(sel.tau_cv) << "  model size " << sel.model_size_cv << "\n"
              << "tau_escv " << fmt(sel.tau_escv) << "  model size " << sel.model_size_escv << "\n";
    if (sel.fallback_to_cv) std::cout << "ES undefined on the eligible grid: fell back to the CV choice\n";
    for (const auto& w : sel.warnings) std::cerr << "warning: " << w << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------- regime

int run_regime(const RegimeArgs& a)
{
    if (a.kappa.empty() && !a.crossover) throw InvalidArgument("give --kappa values and/or --crossover");
    const LossSpec loss = LossSpec::parse(a.loss, a.delta);
    const ErrorDist dist = ErrorDist::parse(a.dist, a.scale);
    const fs::path dir = prepare_dir(a.out);

    if (!a.kappa.empty()) {
        std::ostringstream os;
        csv::write_record(os, {"kappa", "loss", "dist", "scale", "r", "c", "residual_derivative",
                               "residual_risk", "quadrature_error"});
        std::printf("%8s %6s %10s %20s %20s %10s\n", "kappa", "loss", "dist", "r", "c", "residual");
        for (double kappa : a.kappa) {
            regime::RegimeSolution s;
            try {
                s = regime::solve_system(loss, dist, kappa);
            } catch (const NumericalError& e) {
                throw NumericalError("kappa=" + fmt(kappa) + ": " + e.what());
            }
            csv::write_record(os, {csv::format_double(kappa), loss.name(), dist.name(),
                                   csv::format_double(dist.scale()), csv::format_double(s.r),
                                   csv::format_double(s.c), csv::format_double(s.residual_derivative),
                                   csv::format_double(s.residual_risk),
                                   csv::format_double(s.quadrature_error_estimate)});
            std::printf("%8s %6s %10s %20.15g %20.15g %10.2g\n", fmt(kappa).c_str(), loss.name().c_str(),
                        dist.name().c_str(), s.r, s.c,
                        std::max(std::abs(s.residual_derivative), std::abs(s.residual_risk)));
        }
        write_text(dir / "regime.csv", os.str());
    }

    if (a.crossover) {
        const auto x = regime::find_crossover(dist, a.kappa_lo, a.kappa_hi, a.width);
        json j;
        j["dist"] = dist.name();
        j["scale"] = dist.scale();
        j["compared"] = {"lad", "l2"};
        j["kappa_lo"] = a.kappa_lo;
        j["kappa_hi"] = a.kappa_hi;
        j["width"] = a.width;
        j["found"] = x.found;
        j["kappa_star"] = x.found ? json(x.kappa) : json(nullptr);
        j["bracket"] = {x.lo, x.hi};
        j["gap_lo"] = x.gap_lo;
        j["gap_hi"] = x.gap_hi;
        j["bisections"] = x.bisections;
        write_json(dir / "crossover.json", j);
        if (x.found) {
            std::printf("crossover kappa* = %.6f in [%.6f, %.6f]\n", x.kappa, x.lo, x.hi);
        } else {
            std::printf("no crossover on [%g, %g]: r_lad - r_l2 = %.6g at lo, %.6g at hi\n", x.lo, x.hi,
                        x.gap_lo, x.gap_hi);
        }
    }

    json c;
    c["loss"] = a.loss;
    c["delta"] = a.delta;
    c["dist"] = a.dist;
    c["scale"] = a.scale;
    c["kappa"] = a.kappa;
    c["crossover"] = a.crossover;
    c["kappa-lo"] = a.kappa_lo;
    c["kappa-hi"] = a.kappa_hi;
    c["width"] = a.width;
    write_json(dir / "config.json", c);
    return exit_ok;
}

// ---------------------------------------------------------------- mc

int run_mc(McArgs a)
{
    if (a.kappa > 0.0) {
        if (!(a.kappa < 1.0)) throw InvalidArgument("--kappa must lie in (0, 1)");
        a.p = static_cast<Index>(std::llround(a.kappa * static_cast<double>(a.n)));
    }
    if (a.p < 1) throw InvalidArgument("give --p >= 1 or --kappa in (0, 1)");

    mc::Config cfg;
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.loss = LossSpec::parse(a.loss, a.delta);
    cfg.error_dist = ErrorDist::parse(a.dist, a.scale);
    cfg.replicates = a.replicates;
    cfg.seed = a.seed;
    cfg.jobs = a.jobs;
    if (a.check_theory && cfg.error_dist.degenerate()) {
        throw InvalidArgument("--check-theory needs a nondegenerate error distribution");
    }
    const auto s = mc::run_norm_mc(cfg);
    const fs::path dir = prepare_dir(a.out);

    std::ostringstream os;
    csv::write_record(os, {"replicate", "norm", "converged"});
    for (Index k = 0; k < s.replicates; ++k) {
        const auto i = static_cast<std::size_t>(k);
        csv::write_record(os, {std::to_string(k), csv::format_double(s.norms[i]), s.converged[i] ? "1" : "0"});
    }
    write_text(dir / "replicates.csv", os.str());

    json summary;
    summary["n"] = s.n;
    summary["p"] = s.p;
    summary["kappa"] = s.kappa;
    summary["kappa_rational"] = std::to_string(s.p) + "/" + std::to_string(s.n);
    summary["loss"] = cfg.loss.name();
    if (cfg.loss.family == LossSpec::Family::huber) summary["delta"] = cfg.loss.huber_delta;
    summary["dist"] = cfg.error_dist.name();
    summary["scale"] = cfg.error_dist.scale();
    summary["replicates"] = s.replicates;
    summary["seed"] = s.seed;
    summary["failures"] = s.failures;
    summary["norm_mean"] = s.norm_mean;
    summary["norm_sd"] = s.norm_sd;
    summary["norm_se"] = s.norm_se;

    json direction = nullptr;
    try {
        const auto d = mc::direction_uniformity_check(s);
        direction = {{"max_abs_coordinate_mean", d.max_abs_coordinate_mean},
                     {"coordinate_mean_bound", d.coordinate_mean_bound},
                     {"mean_u1_sq", d.mean_u1_sq},
                     {"u1_sq_bound", d.u1_sq_bound},
                     {"pass", d.ok()}};
    } catch (const InvalidArgument&) {
        // fewer than 100 nonzero replicates: no diagnostic
    }
    summary["direction"] = direction;

    std::printf("%6s %6s %8s %6s %14s %12s\n", "n", "p", "kappa", "loss", "norm_mean", "norm_se");
    std::printf("%6lld %6lld %8.4f %6s %14.8f %12.8f\n", static_cast<long long>(s.n),
                static_cast<long long>(s.p), s.kappa, cfg.loss.name().c_str(), s.norm_mean, s.norm_se);
    if (s.failures > 0) std::cerr << "warning: " << s.failures << " replicate fits failed\n";

    if (a.check_theory) {
        const auto sol = regime::solve_system(cfg.loss, cfg.error_dist, s.kappa);
        const auto ag = mc::compare_theory_mc(s, sol);
        summary["theory"] = {{"r", ag.r_theory}, {"c", sol.c}, {"z", ag.z}, {"pass", ag.pass}};
        std::printf("theory r = %.8f   mc = %.8f +- %.8f   z = %+.3f   %s\n", ag.r_theory, ag.norm_mean,
                    ag.norm_se, ag.z, ag.pass ? "PASS" : "FAIL");
    } else {
        summary["theory"] = nullptr;
    }
    write_json(dir / "summary.json", summary);

    json c;
    c["loss"] = a.loss;
    c["delta"] = a.delta;
    c["dist"] = a.dist;
    c["scale"] = a.scale;
    c["n"] = a.n;
    c["p"] = a.p;
    c["replicates"] = a.replicates;
    c["seed"] = a.seed;
    c["check-theory"] = a.check_theory;
    write_json(dir / "config.json", c);
    return exit_ok;
}

// Handled by cli_config::expand before parsing; registered here for --help.
void add_config(CLI::App* sub, std::string& sink)
{
    sub->add_option("--config", sink, "JSON file of option values; command-line flags take precedence");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lasso selection by estimation stability and M-estimator risk in high dimensions", "escv"};
    app.require_subcommand(1);
    std::string config_sink;

    GenArgs g;
    auto* gen = app.add_subcommand("gen", "Generate a linear-model dataset");
    add_config(gen, config_sink);
    gen->add_option("--n", g.n, "Rows")->check(CLI::Range(Index{2}, Index{100000000}));
    gen->add_option("--p", g.p, "Predictors")->check(CLI::PositiveNumber);
    gen->add_option("--k", g.k, "Nonzero coefficients (default min(10, p))");
    gen->add_option("--beta-value", g.beta_value, "Value of each nonzero coefficient");
    gen->add_option("--rho", g.rho, "Pairwise predictor correlation (0 = independent)");
    gen->add_option("--dist", g.dist, "Error distribution: gaussian or laplace");
    gen->add_option("--scale", g.scale, "Gaussian sigma or Laplace scale b");
    gen->add_option("--snr", g.snr, "If > 0, set the noise variance to beta' Sigma beta / snr");
    gen->add_option("--seed", g.seed, "Random seed");
    gen->add_option("--n-test", g.n_test, "Rows of an independent test set (0 = none)");
    gen->add_option("--out", g.out, "Output directory");

    SelectArgs s;
    auto* sel = app.add_subcommand("select", "Choose the Lasso penalty by ES-CV");
    add_config(sel, config_sink);
    sel->add_option("--data", s.data, "CSV with header; response in the first column by default");
    sel->add_option("--response", s.response, "Response column name or 1-based number");
    sel->add_option("--test", s.test, "Held-out CSV for prediction error");
    sel->add_option("--v", s.v, "Number of blocks V")->check(CLI::Range(Index{2}, Index{1000000}));
    sel->add_option("--grid", s.grid, "Lambda grid size")->check(CLI::Range(Index{2}, Index{100000}));
    sel->add_option("--tau-grid", s.tau_grid, "Tau grid size")->check(CLI::Range(Index{2}, Index{100000}));
    sel->add_option("--floor", s.floor, "Smallest lambda as a fraction of lambda_max")
        ->check(CLI::Range(1e-12, 1.0));
    sel->add_flag("--no-standardize", s.no_standardize, "Fit on the raw design");
    sel->add_flag("--smooth-es", s.smooth_es, "Median-of-3 filter on the ES curve before selection");
    sel->add_option("--seed", s.seed, "Seed of the block partition");
    sel->add_option("--jobs", s.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sel->add_option("--out", s.out, "Output directory");

    RegimeArgs r;
    auto* reg = app.add_subcommand("regime", "Solve the limiting-norm system for M-estimators");
    add_config(reg, config_sink);
    reg->add_option("--loss", r.loss, "l2, lad or huber");
    reg->add_option("--delta", r.delta, "Huber threshold")->check(CLI::PositiveNumber);
    reg->add_option("--dist", r.dist, "Error distribution: gaussian or laplace");
    reg->add_option("--scale", r.scale, "Gaussian sigma or Laplace scale b");
    reg->add_option("--kappa", r.kappa, "Aspect ratios p/n in (0, 1)");
    reg->add_flag("--crossover", r.crossover, "Locate where LAD and least squares swap order");
    reg->add_option("--kappa-lo", r.kappa_lo, "Crossover bracket, lower end");
    reg->add_option("--kappa-hi", r.kappa_hi, "Crossover bracket, upper end");
    reg->add_option("--width", r.width, "Crossover bracket width at stop")->check(CLI::PositiveNumber);
    reg->add_option("--out", r.out, "Output directory");

    McArgs m;
    auto* mcc = app.add_subcommand("mc", "Monte Carlo norms of M-estimators under beta = 0");
    add_config(mcc, config_sink);
    mcc->add_option("--loss", m.loss, "l2, lad or huber");
    mcc->add_option("--delta", m.delta, "Huber threshold")->check(CLI::PositiveNumber);
    mcc->add_option("--dist", m.dist, "Error distribution: gaussian or laplace");
    mcc->add_option("--scale", m.scale, "Gaussian sigma or Laplace scale b");
    mcc->add_option("--n", m.n, "Rows")->check(CLI::Range(Index{2}, Index{100000000}));
    mcc->add_option("--p", m.p, "Predictors");
    mcc->add_option("--kappa", m.kappa, "Sets p = round(kappa n); overrides --p");
    mcc->add_option("--replicates", m.replicates, "Replicates R")->check(CLI::Range(Index{2}, Index{100000000}));
    mcc->add_option("--seed", m.seed, "Base seed");
    mcc->add_flag("--check-theory", m.check_theory, "Compare the mean norm with the solver's r");
    mcc->add_option("--jobs", m.jobs, "Worker threads")->check(CLI::PositiveNumber);
    mcc->add_option("--out", m.out, "Output directory");

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = cli_config::expand(std::move(args));
    } catch (const cli_config::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return exit_usage;
    }
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*gen) return run_gen(g);
        if (*sel) return run_select(s);
        if (*reg) return run_regime(r);
        if (*mcc) return run_mc(m);
    } catch (const InvalidArgument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return exit_usage;
    } catch (const escv::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return exit_usage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const ConvergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_io;
    }
    return exit_usage;
}
