// End-to-end checks of the escv executable. ESCV_CLI, ESCV_SCHEMA_DIR and
// ESCV_TEST_WORKDIR are set by the build.

#include <escv/csv.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path workdir(const std::string& name)
{
    const fs::path dir = fs::path(ESCV_TEST_WORKDIR) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with stdout/stderr captured to `log`; returns the exit code.
int run(const std::vector<std::string>& args, const fs::path& log)
{
    std::string cmd = quote(ESCV_CLI);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " > " + quote(log.string()) + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// Every regular file in `a` exists in `b` with identical bytes.
void expect_same_files(const fs::path& a, const fs::path& b)
{
    int count = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++count;
        const fs::path other = b / e.path().filename();
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
    }
    EXPECT_GT(count, 0);
}

/*
 * Checks the subset of JSON Schema used by docs/*.schema.json: type (single
 * or list), required, properties, additionalProperties = false, minimum and
 * items. Returns the list of violations.
 */
bool type_matches(const json& v, const std::string& t)
{
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    return false;
}

void validate(const json& v, const json& schema, const std::string& where, std::vector<std::string>& errs)
{
    if (schema.contains("type")) {
        std::vector<std::string> types;
        if (schema["type"].is_array()) {
            for (const auto& t : schema["type"]) types.push_back(t.get<std::string>());
        } else {
            types.push_back(schema["type"].get<std::string>());
        }
        bool ok = false;
        for (const auto& t : types) ok = ok || type_matches(v, t);
        if (!ok) {
            errs.push_back(where + ": wrong type " + std::string(v.type_name()));
            return;
        }
    }
    if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>()) {
        errs.push_back(where + ": below minimum");
    }
    if (v.is_object()) {
        for (const auto& r : schema.value("required", json::array())) {
            if (!v.contains(r.get<std::string>())) errs.push_back(where + ": missing " + r.get<std::string>());
        }
        const json props = schema.value("properties", json::object());
        for (const auto& [k, sub] : v.items()) {
            if (props.contains(k)) {
                validate(sub, props[k], where + "." + k, errs);
            } else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false) {
                errs.push_back(where + ": unexpected key " + k);
            }
        }
    }
    if (v.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            validate(v[i], schema["items"], where + "[" + std::to_string(i) + "]", errs);
        }
    }
}

std::vector<std::string> validate(const json& v, const json& schema)
{
    std::vector<std::string> errs;
    validate(v, schema, "$", errs);
    return errs;
}

} // namespace

TEST(CliGen, WritesFilesAndIsDeterministic)
{
    const fs::path w = workdir("gen");
    const std::vector<std::string> base{"gen", "--n", "100", "--p", "150", "--dist", "laplace",
                                        "--scale", "1", "--seed", "7"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", (w / "a").string()});
    b.insert(b.end(), {"--out", (w / "b").string()});
    ASSERT_EQ(run(a, w / "a.log"), 0) << slurp(w / "a.log");
    ASSERT_EQ(run(b, w / "b.log"), 0) << slurp(w / "b.log");
    expect_same_files(w / "a", w / "b");

    const auto records = escv::csv::parse(slurp(w / "a" / "data.csv"));
    ASSERT_EQ(records.size(), 101u);
    EXPECT_EQ(records[0].size(), 151u);
    EXPECT_TRUE(fs::exists(w / "a" / "config.json"));
    EXPECT_TRUE(fs::exists(w / "a" / "truth.csv"));

    // Rerun from the echoed config.
    ASSERT_EQ(run({"gen", "--config", (w / "a" / "config.json").string(), "--out", (w / "c").string()}, w / "c.log"), 0)
        << slurp(w / "c.log");
    expect_same_files(w / "a", w / "c");
}

TEST(CliGen, ZeroPredictorsIsUsageError)
{
    const fs::path w = workdir("gen_bad");
    EXPECT_EQ(run({"gen", "--p", "0", "--out", (w / "x").string()}, w / "log"), 2);
    EXPECT_EQ(run({"gen", "--rho", "-0.9", "--p", "5", "--out", (w / "y").string()}, w / "log2"), 2);
}

class CliSelect : public ::testing::Test
{
protected:
    static void SetUpTestSuite()
    {
        w = workdir("select");
        ASSERT_EQ(run({"gen", "--n", "80", "--p", "30", "--k", "4", "--beta-value", "2", "--scale", "0",
                       "--n-test", "40", "--seed", "3", "--out", (w / "data").string()},
                      w / "gen.log"),
                  0)
            << slurp(w / "gen.log");
        ASSERT_EQ(run({"select", "--data", (w / "data" / "data.csv").string(), "--test",
                       (w / "data" / "test.csv").string(), "--v", "5", "--grid", "60", "--tau-grid", "50",
                       "--seed", "11", "--jobs", "2", "--out", (w / "run").string()},
                      w / "select.log"),
                  0)
            << slurp(w / "select.log");
    }

    static fs::path w;
};

fs::path CliSelect::w;

TEST_F(CliSelect, ReportRespectsRuleAndSchema)
{
    const json report = load_json(w / "run" / "report.json");
    EXPECT_LE(report["tau_escv"].get<double>(), report["tau_cv"].get<double>());
    EXPECT_LE(report["model_size_escv"].get<int>(), 30);
    EXPECT_FALSE(report["test"].is_null());
    const json schema = load_json(fs::path(ESCV_SCHEMA_DIR) / "report.schema.json");
    const auto errs = validate(report, schema);
    for (const auto& e : errs) ADD_FAILURE() << e;

    // The validator itself rejects a broken report.
    json broken = report;
    broken.erase("tau_cv");
    broken["extra"] = 1;
    broken["model_size_cv"] = -1;
    EXPECT_EQ(validate(broken, schema).size(), 3u);
}

TEST_F(CliSelect, CurvesAndCoefficientFiles)
{
    const auto curves = escv::csv::parse(slurp(w / "run" / "curves.csv"));
    ASSERT_EQ(curves.size(), 51u);
    EXPECT_EQ(curves[0], (escv::csv::Record{"tau", "es", "z2", "cv_error", "that", "mhat_sq_norm"}));
    EXPECT_EQ(curves[1][1], "nan");  // ES undefined at tau = 0
    const auto coef = escv::csv::parse(slurp(w / "run" / "coef_escv.csv"));
    ASSERT_EQ(coef.size(), 32u);  // header, intercept, 30 predictors
    EXPECT_EQ(coef[1][0], "(intercept)");
}

TEST_F(CliSelect, RerunFromEchoedConfigIsByteIdentical)
{
    ASSERT_EQ(run({"select", "--config", (w / "run" / "config.json").string(), "--out", (w / "rerun").string()},
                  w / "rerun.log"),
              0)
        << slurp(w / "rerun.log");
    expect_same_files(w / "run", w / "rerun");
}

TEST_F(CliSelect, FlagsOverrideConfigFile)
{
    ASSERT_EQ(run({"select", "--config", (w / "run" / "config.json").string(), "--seed", "12", "--out",
                   (w / "override").string()},
                  w / "override.log"),
              0)
        << slurp(w / "override.log");
    EXPECT_EQ(load_json(w / "override" / "config.json")["seed"].get<int>(), 12);
    EXPECT_EQ(load_json(w / "override" / "config.json")["v"].get<int>(), 5);
}

TEST_F(CliSelect, BadInputsAreUsageErrors)
{
    EXPECT_EQ(run({"select", "--data", (w / "missing.csv").string(), "--out", (w / "m").string()}, w / "m.log"), 1);
    std::ofstream(w / "ragged.csv") << "y,a\n1,2\n3\n";
    EXPECT_EQ(run({"select", "--data", (w / "ragged.csv").string(), "--out", (w / "r").string()}, w / "r.log"), 2);
    EXPECT_NE(slurp(w / "r.log").find("row 3"), std::string::npos) << slurp(w / "r.log");
    EXPECT_EQ(run({"select", "--out", (w / "n").string()}, w / "n.log"), 2);
}

TEST(CliRegime, SquaredLossIsSqrtTwo)
{
    const fs::path w = workdir("regime");
    ASSERT_EQ(run({"regime", "--loss", "l2", "--dist", "laplace", "--kappa", "0.5", "--out", (w / "o").string()},
                  w / "log"),
              0)
        << slurp(w / "log");
    const auto rows = escv::csv::parse(slurp(w / "o" / "regime.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][4], "r");
    EXPECT_NEAR(std::stod(rows[1][4]), std::sqrt(2.0), 1e-8);
}

TEST(CliRegime, CrossoverNearPointThree)
{
    const fs::path w = workdir("crossover");
    ASSERT_EQ(run({"regime", "--crossover", "--dist", "laplace", "--out", (w / "o").string()}, w / "log"), 0)
        << slurp(w / "log");
    const json j = load_json(w / "o" / "crossover.json");
    ASSERT_TRUE(j["found"].get<bool>());
    EXPECT_GE(j["kappa_star"].get<double>(), 0.25);
    EXPECT_LE(j["kappa_star"].get<double>(), 0.35);

    ASSERT_EQ(run({"regime", "--config", (w / "o" / "config.json").string(), "--out", (w / "again").string()},
                  w / "log2"),
              0);
    expect_same_files(w / "o", w / "again");
}

TEST(CliRegime, InvalidKappaIsUsageError)
{
    const fs::path w = workdir("regime_bad");
    EXPECT_EQ(run({"regime", "--kappa", "1.5", "--out", (w / "o").string()}, w / "log"), 2);
    EXPECT_EQ(run({"regime", "--out", (w / "o").string()}, w / "log"), 2);
    EXPECT_EQ(run({"regime", "--crossover", "--kappa-lo", "0.3", "--kappa-hi", "0.3", "--out", (w / "o").string()},
                  w / "log"),
              2);
}

TEST(CliMc, LadCheckTheoryPasses)
{
    const fs::path w = workdir("mc");
    ASSERT_EQ(run({"mc", "--loss", "lad", "--kappa", "0.5", "--check-theory", "--seed", "1", "--jobs", "4", "--out",
                   (w / "o").string()},
                  w / "log"),
              0)
        << slurp(w / "log");
    EXPECT_NE(slurp(w / "log").find("PASS"), std::string::npos) << slurp(w / "log");
    const json s = load_json(w / "o" / "summary.json");
    EXPECT_TRUE(s["theory"]["pass"].get<bool>());
    EXPECT_EQ(s["kappa_rational"], "250/500");
    EXPECT_EQ(s["failures"], 0);
    const auto reps = escv::csv::parse(slurp(w / "o" / "replicates.csv"));
    EXPECT_EQ(reps.size(), 201u);
}

TEST(CliMc, RerunFromConfigIsByteIdentical)
{
    const fs::path w = workdir("mc_rerun");
    ASSERT_EQ(run({"mc", "--loss", "l2", "--n", "80", "--p", "20", "--replicates", "120", "--seed", "9",
                   "--check-theory", "--out", (w / "a").string()},
                  w / "log"),
              0)
        << slurp(w / "log");
    ASSERT_EQ(run({"mc", "--config", (w / "a" / "config.json").string(), "--jobs", "1", "--out",
                   (w / "b").string()},
                  w / "log2"),
              0)
        << slurp(w / "log2");
    expect_same_files(w / "a", w / "b");
    EXPECT_FALSE(load_json(w / "a" / "summary.json")["direction"].is_null());
}

TEST(CliExitCodes, UsageErrors)
{
    const fs::path w = workdir("exit");
    EXPECT_EQ(run({}, w / "log"), 2);
    EXPECT_EQ(run({"bogus"}, w / "log"), 2);
    EXPECT_EQ(run({"gen", "--no-such-flag", "1"}, w / "log"), 2);
    EXPECT_EQ(run({"gen", "--config", (w / "none.json").string()}, w / "log"), 2);
    std::ofstream(w / "bad.json") << "{\"unknown-key\": 3}";
    EXPECT_EQ(run({"gen", "--config", (w / "bad.json").string(), "--out", (w / "o").string()}, w / "log"), 2);
    std::ofstream(w / "notjson.json") << "{oops";
    EXPECT_EQ(run({"gen", "--config", (w / "notjson.json").string()}, w / "log"), 2);
    EXPECT_EQ(run({"--help"}, w / "log"), 0);
}
