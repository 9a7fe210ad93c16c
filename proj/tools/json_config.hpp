#pragma once
#include <nlohmann/json.hpp>
#include <escv/common.hpp>
#include <fstream>
#include <string>
#include <vector>

/*
 * `--config FILE` support. The file is one flat JSON object whose keys are
 * long option names ("tau-grid", "seed", ...). Its entries are expanded
 * into ordinary command-line tokens placed right after the subcommand;
 * keys that also appear on the command line are skipped, so flags win.
 * Arrays feed multi-value options, booleans map to --flag / --flag=false,
 * and null entries are ignored.
 */
namespace cli_config {

class ConfigError : public escv::InvalidArgument
{
public:
    using escv::InvalidArgument::InvalidArgument;
};

inline std::string scalar(const std::string& key, const nlohmann::json& v)
{
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw ConfigError("config key '" + key + "' must hold a string, number, boolean or an array of those");
}

inline bool given(const std::vector<std::string>& args, const std::string& flag)
{
    for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
}

// args[0] is the program name and args[1] the subcommand.
inline std::vector<std::string> expand(std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config needs a file name");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
            break;
        }
    }
    if (path.empty() || args.size() < 2) return args;

    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");

    std::vector<std::string> tokens;
    for (const auto& [key, value] : doc.items()) {
        const std::string flag = "--" + key;
        if (value.is_null() || given(args, flag)) continue;
        if (value.is_boolean()) {
            tokens.push_back(value.get<bool>() ? flag : flag + "=false");
        } else if (value.is_array()) {
            if (value.empty()) continue;
            tokens.push_back(flag);
            for (const auto& v : value) tokens.push_back(scalar(key, v));
        } else {
            tokens.push_back(flag);
            tokens.push_back(scalar(key, value));
        }
    }
    args.insert(args.begin() + 2, tokens.begin(), tokens.end());
    return args;
}

} // namespace cli_config
