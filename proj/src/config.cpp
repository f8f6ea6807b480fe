#include "rfqmm/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rfqmm {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw std::invalid_argument("config: " + where + ": " + what);
}

void reject_unknown(const json& o, const std::string& where,
                    const std::set<std::string>& allowed) {
    for (auto it = o.begin(); it != o.end(); ++it)
        if (!allowed.count(it.key())) bad(where, "unknown key '" + it.key() + "'");
}

const json& require(const json& o, const std::string& where, const char* key) {
    auto it = o.find(key);
    if (it == o.end()) bad(where, std::string("missing key '") + key + "'");
    return *it;
}

double num(const json& o, const std::string& where, const char* key) {
    const json& v = require(o, where, key);
    if (!v.is_number()) bad(where, std::string("'") + key + "' must be a number");
    return v.get<double>();
}

int integer(const json& o, const std::string& where, const char* key) {
    const json& v = require(o, where, key);
    if (!v.is_number_integer())
        bad(where, std::string("'") + key + "' must be an integer");
    return v.get<int>();
}

bool boolean(const json& o, const std::string& where, const char* key) {
    const json& v = require(o, where, key);
    if (!v.is_boolean()) bad(where, std::string("'") + key + "' must be a boolean");
    return v.get<bool>();
}

std::vector<double> num_array(const json& o, const std::string& where,
                              const char* key) {
    const json& v = require(o, where, key);
    if (!v.is_array()) bad(where, std::string("'") + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number())
            bad(where, std::string("'") + key + "' must contain numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

WinCurveParams parse_win(const json& o, const std::string& where) {
    reject_unknown(o, where, {"kappa", "delta_bar"});
    WinCurveParams w;
    w.kappa = num_array(o, where, "kappa");
    w.delta_bar = num_array(o, where, "delta_bar");
    return w;
}

}  // namespace

SolverConfig load_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") +
                                    e.what());
    }
    if (!doc.is_object()) bad("root", "document must be an object");
    reject_unknown(doc, "root",
                   {"version", "ladder", "intensities", "win_a", "win_b", "gate",
                    "score", "risk", "grid", "fixed_point"});

    const int version = integer(doc, "root", "version");
    if (version != kConfigVersion)
        bad("version", "unsupported version " + std::to_string(version) +
                           " (expected " + std::to_string(kConfigVersion) + ")");

    SolverConfig c;

    {
        const json& o = require(doc, "root", "ladder");
        reject_unknown(o, "ladder", {"sizes"});
        c.model.ladder.sizes = num_array(o, "ladder", "sizes");
    }
    {
        const json& o = require(doc, "root", "intensities");
        reject_unknown(o, "intensities", {"lambda_a", "lambda_b"});
        c.model.intensities.lambda_a = num_array(o, "intensities", "lambda_a");
        c.model.intensities.lambda_b = num_array(o, "intensities", "lambda_b");
    }
    c.model.win_a = parse_win(require(doc, "root", "win_a"), "win_a");
    c.model.win_b = parse_win(require(doc, "root", "win_b"), "win_b");
    {
        const json& o = require(doc, "root", "gate");
        reject_unknown(o, "gate", {"g_min", "g_max", "r0", "beta"});
        c.model.gate.g_min = num(o, "gate", "g_min");
        c.model.gate.g_max = num(o, "gate", "g_max");
        c.model.gate.r0 = num(o, "gate", "r0");
        c.model.gate.beta = num(o, "gate", "beta");
    }
    {
        const json& o = require(doc, "root", "score");
        reject_unknown(o, "score", {"alpha", "size_weighted"});
        c.model.score.alpha = num(o, "score", "alpha");
        c.model.score.size_weighted = boolean(o, "score", "size_weighted");
    }
    {
        const json& o = require(doc, "root", "risk");
        reject_unknown(o, "risk", {"sigma", "gamma", "eta", "theta", "rho"});
        c.model.risk.sigma = num(o, "risk", "sigma");
        c.model.risk.gamma = num(o, "risk", "gamma");
        c.model.risk.eta = num(o, "risk", "eta");
        c.model.risk.theta = num_array(o, "risk", "theta");
        c.model.risk.rho = num(o, "risk", "rho");
    }
    {
        const json& o = require(doc, "root", "grid");
        reject_unknown(o, "grid", {"q_max", "q_step", "n_r", "t_block", "n_t"});
        c.grid.q_max = num(o, "grid", "q_max");
        c.grid.q_step = num(o, "grid", "q_step");
        c.grid.n_r = integer(o, "grid", "n_r");
        c.grid.t_block = num(o, "grid", "t_block");
        c.grid.n_t = integer(o, "grid", "n_t");
    }
    {
        const json& o = require(doc, "root", "fixed_point");
        reject_unknown(o, "fixed_point",
                       {"tol", "max_iter", "zeta", "anderson_m", "anderson_ridge",
                        "warm_start"});
        c.fixed_point.tol = num(o, "fixed_point", "tol");
        c.fixed_point.max_iter = integer(o, "fixed_point", "max_iter");
        c.fixed_point.zeta = num(o, "fixed_point", "zeta");
        c.fixed_point.anderson_m = integer(o, "fixed_point", "anderson_m");
        c.fixed_point.anderson_ridge = num(o, "fixed_point", "anderson_ridge");
        c.fixed_point.warm_start = boolean(o, "fixed_point", "warm_start");
    }

    c.validate();
    return c;
}

SolverConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("config: cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str());
}

std::string save_config(const SolverConfig& c) {
    json doc;
    doc["version"] = kConfigVersion;
    doc["ladder"] = {{"sizes", c.model.ladder.sizes}};
    doc["intensities"] = {{"lambda_a", c.model.intensities.lambda_a},
                          {"lambda_b", c.model.intensities.lambda_b}};
    doc["win_a"] = {{"kappa", c.model.win_a.kappa},
                    {"delta_bar", c.model.win_a.delta_bar}};
    doc["win_b"] = {{"kappa", c.model.win_b.kappa},
                    {"delta_bar", c.model.win_b.delta_bar}};
    doc["gate"] = {{"g_min", c.model.gate.g_min},
                   {"g_max", c.model.gate.g_max},
                   {"r0", c.model.gate.r0},
                   {"beta", c.model.gate.beta}};
    doc["score"] = {{"alpha", c.model.score.alpha},
                    {"size_weighted", c.model.score.size_weighted}};
    doc["risk"] = {{"sigma", c.model.risk.sigma},
                   {"gamma", c.model.risk.gamma},
                   {"eta", c.model.risk.eta},
                   {"theta", c.model.risk.theta},
                   {"rho", c.model.risk.rho}};
    doc["grid"] = {{"q_max", c.grid.q_max},
                   {"q_step", c.grid.q_step},
                   {"n_r", c.grid.n_r},
                   {"t_block", c.grid.t_block},
                   {"n_t", c.grid.n_t}};
    doc["fixed_point"] = {{"tol", c.fixed_point.tol},
                          {"max_iter", c.fixed_point.max_iter},
                          {"zeta", c.fixed_point.zeta},
                          {"anderson_m", c.fixed_point.anderson_m},
                          {"anderson_ridge", c.fixed_point.anderson_ridge},
                          {"warm_start", c.fixed_point.warm_start}};
    return doc.dump(2) + "\n";
}

std::uint64_t config_hash(const SolverConfig& c) {
    const std::string s = save_config(c);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= static_cast<std::uint64_t>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash_hex(const SolverConfig& c) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(c)));
    return std::string(buf);
}

SolverConfig default_config() {
    SolverConfig c;
    c.model.ladder.sizes = {1.0, 2.0, 5.0, 10.0};
    c.model.intensities.lambda_a = {0.0, 0.0, 0.0, 50.0};
    c.model.intensities.lambda_b = {1000.0, 800.0, 600.0, 400.0};
    c.model.win_a.kappa = {5.0, 4.5, 4.0, 3.5};
    c.model.win_a.delta_bar = {0.3, 0.4, 0.5, 0.6};
    c.model.win_b = c.model.win_a;
    c.model.gate = GateParams{0.2, 1.0, 0.6, 40.0};
    c.model.score.alpha = 0.01;
    c.model.score.size_weighted = false;
    c.model.risk.sigma = 100.0;
    c.model.risk.gamma = 1e-3;
    c.model.risk.eta = 1.0;
    c.model.risk.theta = {0.2, 0.2, 0.2, 0.2};
    c.model.risk.rho = 0.125;
    c.grid = GridSpec{50.0, 1.0, 101, 0.2, 10000};
    c.fixed_point = FixedPointParams{};
    return c;
}

}  // namespace rfqmm
