// Command-line driver: exposes the stationary solver, the slow-score
// analyses, the Monte Carlo simulator and the figure renderer as
// subcommands of one binary.  Every run resolves its configuration first,
// stamps the resolved-config hash into each CSV it writes, and drops a
// manifest.json beside the outputs so artifacts can be traced back to the
// exact parameter set that produced them.  Only the manifest carries a
// timestamp; payload files are byte-identical across reruns.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rfqmm/adiabatic.hpp"
#include "rfqmm/config.hpp"
#include "rfqmm/csv.hpp"
#include "rfqmm/grid.hpp"
#include "rfqmm/hamiltonian.hpp"
#include "rfqmm/hjb.hpp"
#include "rfqmm/params.hpp"
#include "rfqmm/report.hpp"
#include "rfqmm/simulator.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace rfqmm;

namespace {

struct Options {
    // shared
    std::string params_path;
    std::string out_dir = ".";
    int threads = 0;
    bool verbose = false;

    // solve / controls
    std::optional<double> alpha_override;

    // hamiltonian dump
    std::optional<double> x_min;
    std::optional<double> x_max;
    int n_x = 201;

    // phase-portrait / relax / simulate
    std::string controls_path;
    bool allow_hash_mismatch = false;
    int n_points = 201;

    // relax
    std::vector<double> starts;
    double relax_horizon = 2.0;

    // bifurcation / closure-fit
    std::vector<double> betas;
    std::string source = "closure";
    std::string closure_path;

    // simulate
    std::uint64_t seed = 0;
    int n_paths = 64;
    double sim_horizon = 1.0;
    double q0 = 0.0;
    double r0 = 0.5;
    double record_dt = 0.01;
    bool freeze_score = false;
    std::vector<double> ode_starts;

    // report
    std::string figure;
    std::vector<std::string> inputs;
    bool no_svg = false;
    int fig_width = 0;
    int fig_height = 0;
    std::optional<double> fx_min, fx_max, fy_min, fy_max;
    bool log_x = false;
    bool log_y = false;
    std::optional<double> r0_line;
    std::optional<double> r_slice;
};

std::string iso_utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void apply_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

SolverConfig resolve_config(const Options& o) {
    SolverConfig c =
        o.params_path.empty() ? default_config() : load_config_file(o.params_path);
    if (o.alpha_override) {
        c.model.score.alpha = *o.alpha_override;
        c.validate();
    }
    return c;
}

/// Collects output files for one run and writes the closing manifest.
/// Guarantees that every CSV carries the run's config hash.
class RunWriter {
  public:
    RunWriter(const Options& o, std::string subcommand, std::string hash)
        : dir_(o.out_dir),
          subcommand_(std::move(subcommand)),
          hash_(std::move(hash)),
          t0_(std::chrono::steady_clock::now()) {
        fs::create_directories(dir_);
    }

    const std::string& hash() const { return hash_; }
    const fs::path& dir() const { return dir_; }

    void csv_file(const std::string& name, CsvTable table) {
        table.metadata.insert({"config_hash", hash_});
        table.metadata.insert({"tool_version", kToolVersion});
        write_csv((dir_ / name).string(), table);
        files_.push_back(name);
    }

    void text_file(const std::string& name, const std::string& content) {
        write_raw(name, content);
        files_.push_back(name);
    }

    /// For files another component already wrote into the run directory.
    void adopt(const std::string& name) { files_.push_back(name); }

    std::size_t count() const { return files_.size(); }

    void manifest() {
        ordered_json j;
        j["tool"] = "rfqmm";
        j["tool_version"] = kToolVersion;
        j["subcommand"] = subcommand_;
        j["config_hash"] = hash_;
        j["timestamp_utc"] = iso_utc_now();
        j["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
                .count();
        std::vector<std::string> sorted = files_;
        std::sort(sorted.begin(), sorted.end());
        j["outputs"] = sorted;
        write_raw("manifest.json", j.dump(2) + "\n");
    }

  private:
    void write_raw(const std::string& name, const std::string& content) {
        const fs::path p = dir_ / name;
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open '" + p.string() + "'");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
    }

    fs::path dir_;
    std::string subcommand_;
    std::string hash_;
    std::chrono::steady_clock::time_point t0_;
    std::vector<std::string> files_;
};

std::vector<double> uniform_grid(int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = i / double(n - 1);
    return g;
}

// ---------------------------------------------------------------------------
// solver tables

CsvTable controls_table(const SolverConfig& cfg, const ControlField& f) {
    const GridSpec& g = f.grid;
    CsvTable t;
    t.metadata = {{"gate_r0", format_double(cfg.model.gate.r0)},
                  {"q_max", format_double(g.q_max)},
                  {"q_step", format_double(g.q_step)},
                  {"n_r", std::to_string(g.n_r)},
                  {"t_block", format_double(g.t_block)},
                  {"n_t", std::to_string(g.n_t)},
                  {"n_sizes", std::to_string(f.n_sizes)}};
    t.columns = {"size", "tier", "side", "q", "R", "delta", "y"};
    for (std::size_t k = 0; k < f.n_sizes; ++k)
        for (Tier tier : {Tier::A, Tier::B})
            for (Side side : {Side::Bid, Side::Ask})
                for (int qi = 0; qi < g.n_q(); ++qi)
                    for (int ri = 0; ri < g.n_r; ++ri) {
                        if (!f.present(k, tier, side, qi, ri)) continue;
                        t.rows.push_back({cfg.model.ladder.sizes[k],
                                          double(static_cast<int>(tier)),
                                          double(static_cast<int>(side)),
                                          g.q_value(qi), g.r_value(ri),
                                          f.delta_at(k, tier, side, qi, ri),
                                          f.y_at(k, tier, side, qi, ri)});
                    }
    return t;
}

void add_solver_tables(RunWriter& w, const SolverConfig& cfg,
                       const StationaryResult& res, bool full) {
    const GridSpec& g = cfg.grid;
    const std::string r0s = format_double(cfg.model.gate.r0);

    w.csv_file("controls.csv", controls_table(cfg, res.controls));
    if (!full) return;

    {
        CsvTable t;
        t.metadata = {{"gate_r0", r0s}};
        t.columns = {"q", "R", "v"};
        for (int qi = 0; qi < g.n_q(); ++qi)
            for (int ri = 0; ri < g.n_r; ++ri)
                t.rows.push_back(
                    {g.q_value(qi), g.r_value(ri), res.value.at(qi, ri)});
        w.csv_file("value.csv", t);
    }
    {
        CsvTable t;
        t.metadata = {{"gate_r0", r0s}};
        t.columns = {"R", "Phi"};
        for (int ri = 0; ri < g.n_r; ++ri)
            t.rows.push_back({g.r_value(ri), res.value.phi[std::size_t(ri)]});
        w.csv_file("phi.csv", t);
    }
    {
        CsvTable t;
        const FixedPointReport& rep = res.report;
        t.metadata = {{"converged", rep.converged ? "1" : "0"},
                      {"iterations", std::to_string(rep.iterations)},
                      {"anderson_m", std::to_string(rep.anderson_m)},
                      {"zeta", format_double(rep.zeta)},
                      {"anderson_fallbacks", std::to_string(rep.anderson_fallbacks)}};
        t.columns = {"iteration", "residual"};
        for (std::size_t i = 0; i < rep.residuals.size(); ++i)
            t.rows.push_back({double(i + 1), rep.residuals[i]});
        w.csv_file("fixed_point.csv", t);
    }
    {
        CsvTable t;
        t.metadata = {{"gate_r0", r0s}};
        t.columns = {"q", "R", "Pi_A"};
        const std::vector<double> pnl = instant_pnl_A_field(res.controls, cfg.model);
        for (int qi = 0; qi < g.n_q(); ++qi)
            for (int ri = 0; ri < g.n_r; ++ri)
                t.rows.push_back({g.q_value(qi), g.r_value(ri),
                                  pnl[std::size_t(qi) * g.n_r + ri]});
        w.csv_file("pnl.csv", t);
    }
}

// ---------------------------------------------------------------------------
// controls.csv loader (for simulate / phase-portrait / relax reuse)

struct LoadedControls {
    ControlField field;
    std::string hash;
};

LoadedControls load_controls_file(const std::string& path,
                                  const ModelParams& mp) {
    const CsvTable t = read_csv(path);
    auto meta = [&](const std::string& key) -> const std::string& {
        auto it = t.metadata.find(key);
        if (it == t.metadata.end())
            throw std::runtime_error(path + ": missing metadata '" + key + "'");
        return it->second;
    };

    GridSpec g;
    g.q_max = std::stod(meta("q_max"));
    g.q_step = std::stod(meta("q_step"));
    g.n_r = std::stoi(meta("n_r"));
    g.t_block = std::stod(meta("t_block"));
    g.n_t = std::stoi(meta("n_t"));
    const std::size_t n_sizes = std::stoul(meta("n_sizes"));
    if (n_sizes != mp.n_sizes())
        throw std::runtime_error(path + ": holds " + std::to_string(n_sizes) +
                                 " quoted sizes but the model ladder has " +
                                 std::to_string(mp.n_sizes()));

    LoadedControls out;
    out.field.grid = g;
    out.field.n_sizes = n_sizes;
    out.field.allocate();
    out.hash = t.metadata.count("config_hash") ? t.metadata.at("config_hash")
                                               : "unknown";

    const std::size_t cs = t.column_index("size");
    const std::size_t ct = t.column_index("tier");
    const std::size_t cside = t.column_index("side");
    const std::size_t cq = t.column_index("q");
    const std::size_t cr = t.column_index("R");
    const std::size_t cd = t.column_index("delta");
    const std::size_t cy = t.column_index("y");

    for (const auto& row : t.rows) {
        std::size_t k = n_sizes;
        for (std::size_t j = 0; j < n_sizes; ++j)
            if (std::abs(row[cs] - mp.ladder.sizes[j]) <=
                1e-9 * std::max(1.0, mp.ladder.sizes[j]))
                k = j;
        if (k == n_sizes)
            throw std::runtime_error(path + ": size " + format_double(row[cs]) +
                                     " is not in the model ladder");
        const int tier_i = int(row[ct]);
        const int side_i = int(row[cside]);
        if (tier_i != 0 && tier_i != 1)
            throw std::runtime_error(path + ": tier must be 0 or 1");
        if (side_i != 0 && side_i != 1)
            throw std::runtime_error(path + ": side must be 0 or 1");

        const int qi = int(std::lround((row[cq] + g.q_max) / g.q_step));
        if (qi < 0 || qi >= g.n_q() ||
            std::abs(row[cq] - g.q_value(qi)) > 1e-6 * std::max(1.0, g.q_step))
            throw std::runtime_error(path + ": inventory " +
                                     format_double(row[cq]) +
                                     " is off the declared grid");
        const int ri = int(std::lround(row[cr] * (g.n_r - 1)));
        if (ri < 0 || ri >= g.n_r || std::abs(row[cr] - g.r_value(ri)) > 1e-6)
            throw std::runtime_error(path + ": score " + format_double(row[cr]) +
                                     " is off the declared grid");

        const Tier tier = tier_i == 0 ? Tier::A : Tier::B;
        const Side side = side_i == 0 ? Side::Bid : Side::Ask;
        out.field.delta_at(k, tier, side, qi, ri) = row[cd];
        out.field.y_at(k, tier, side, qi, ri) = row[cy];
    }
    return out;
}

struct ProvenanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_provenance(const std::string& controls_hash,
                      const std::string& config_hash, bool allow) {
    if (controls_hash == config_hash || allow) return;
    throw ProvenanceError(
        "controls were produced under config " + controls_hash +
        " but --params resolves to " + config_hash +
        "; re-solve, or pass --allow-hash-mismatch to proceed anyway");
}

/// Controls either loaded from --controls (provenance-checked) or solved
/// fresh from the resolved config.
ControlField obtain_controls(const Options& o, const SolverConfig& cfg,
                             const std::string& hash) {
    if (!o.controls_path.empty()) {
        LoadedControls lc = load_controls_file(o.controls_path, cfg.model);
        check_provenance(lc.hash, hash, o.allow_hash_mismatch);
        return std::move(lc.field);
    }
    if (o.verbose) std::fprintf(stderr, "solving for controls...\n");
    return stationary_solve(cfg, true).controls;
}

// ---------------------------------------------------------------------------
// closure JSON round trip

ordered_json closure_to_json(const ClosureParams& cp, const std::string& hash) {
    ordered_json j;
    j["config_hash"] = hash;
    j["a_coef"] = cp.a_coef;
    j["b_coef"] = cp.b_coef;
    j["ybar_star"] = cp.ybar_star;
    j["xi_a"] = cp.xi_a;
    j["xi_b"] = cp.xi_b;
    j["xi_0"] = cp.xi_0;
    j["rms_alpha0"] = cp.rms_alpha0;
    j["rms_alpha"] = cp.rms_alpha;
    return j;
}

ClosureParams closure_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    const auto j = nlohmann::json::parse(f);
    ClosureParams cp;
    cp.a_coef = j.at("a_coef").get<double>();
    cp.b_coef = j.at("b_coef").get<double>();
    cp.ybar_star = j.at("ybar_star").get<double>();
    cp.xi_a = j.at("xi_a").get<double>();
    cp.xi_b = j.at("xi_b").get<double>();
    cp.xi_0 = j.at("xi_0").get<double>();
    cp.rms_alpha0 = j.value("rms_alpha0", 0.0);
    cp.rms_alpha = j.value("rms_alpha", 0.0);
    return cp;
}

/// Two solves (target alpha and alpha = 0) reduced to the fitted closure.
ClosureParams fit_closure_from_config(const SolverConfig& cfg, bool verbose) {
    if (verbose) std::fprintf(stderr, "closure fit: solving at target alpha...\n");
    const StationaryResult res1 = stationary_solve(cfg, true);
    SolverConfig c0 = cfg;
    c0.model.score.alpha = 0.0;
    if (verbose) std::fprintf(stderr, "closure fit: solving at alpha = 0...\n");
    const StationaryResult res0 = stationary_solve(c0, true);
    const std::vector<double> rg = uniform_grid(101);
    const DriftField d1 = score_drift_from_hjb(res1.controls, cfg.model, rg);
    const DriftField d0 = score_drift_from_hjb(res0.controls, cfg.model, rg);
    return fit_closure(rg, d0.ybar, d1.ybar, cfg.model);
}

// ---------------------------------------------------------------------------
// subcommands

int run_solve(const Options& o, bool controls_only) {
    apply_threads(o.threads);
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, controls_only ? "controls" : "solve", config_hash_hex(cfg));
    if (o.verbose)
        std::fprintf(stderr, "solving: alpha=%g grid %dx%d, %d time steps\n",
                     cfg.model.score.alpha, cfg.grid.n_q(), cfg.grid.n_r,
                     cfg.grid.n_t);
    const StationaryResult res = stationary_solve(cfg, true);
    add_solver_tables(w, cfg, res, !controls_only);
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("%s: converged in %d iterations (final residual %.3g); wrote %zu files to %s\n",
                controls_only ? "controls" : "solve", res.report.iterations,
                res.report.final_residual, w.count() + 1, w.dir().c_str());
    return 0;
}

int run_hamiltonian_dump(const Options& o) {
    apply_threads(o.threads);
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "hamiltonian dump", config_hash_hex(cfg));
    const double bound = suggested_x_bound(cfg.model, cfg.grid.q_max);
    const double lo = o.x_min.value_or(-bound);
    const double hi = o.x_max.value_or(bound);
    if (!(lo < hi))
        throw std::invalid_argument("hamiltonian dump: --x-min must be < --x-max");

    CsvTable t;
    t.columns = {"size", "tier", "x", "H", "delta_hat", "H_prime", "H_second"};
    for (std::size_t k = 0; k < cfg.model.n_sizes(); ++k)
        for (Tier tier : {Tier::A, Tier::B})
            for (int i = 0; i < o.n_x; ++i) {
                const double x = lo + (hi - lo) * i / double(o.n_x - 1);
                const HamiltonianSolution s =
                    solve_hamiltonian(cfg.model, tier, k, x);
                t.rows.push_back({cfg.model.ladder.sizes[k],
                                  double(static_cast<int>(tier)), x, s.value,
                                  s.maximizer, s.deriv, s.second_deriv});
            }
    w.csv_file("hamiltonian.csv", t);
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("hamiltonian dump: %zu rows over x in [%g, %g]; wrote %zu files to %s\n",
                t.rows.size(), lo, hi, w.count() + 1, w.dir().c_str());
    return 0;
}

int run_phase_portrait(const Options& o) {
    apply_threads(o.threads);
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "phase-portrait", config_hash_hex(cfg));
    const ControlField controls = obtain_controls(o, cfg, w.hash());
    const DriftField df =
        score_drift_from_hjb(controls, cfg.model, uniform_grid(o.n_points));

    const std::string r0s = format_double(cfg.model.gate.r0);
    {
        CsvTable t;
        t.metadata = {{"gate_r0", r0s}};
        t.columns = {"R", "ybar", "drift", "drift_per_trade"};
        for (std::size_t i = 0; i < df.r_grid.size(); ++i)
            t.rows.push_back(
                {df.r_grid[i], df.ybar[i], df.drift[i], df.drift_per_trade[i]});
        w.csv_file("drift.csv", t);
    }
    {
        CsvTable t;
        t.metadata = {{"gate_r0", r0s}};
        t.columns = {"R_star", "stability"};
        for (const ScoreFixedPoint& fp : df.fixed_points)
            t.rows.push_back(
                {fp.r, fp.stability == Stability::Stable ? 1.0 : 0.0});
        w.csv_file("fixed_points.csv", t);
    }
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("phase-portrait: %zu fixed point(s); wrote %zu files to %s\n",
                df.fixed_points.size(), w.count() + 1, w.dir().c_str());
    return 0;
}

int run_relax(const Options& o) {
    apply_threads(o.threads);
    for (double s : o.starts)
        if (!(s >= 0.0 && s <= 1.0))
            throw std::invalid_argument("relax: --starts entries must lie in [0, 1]");
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "relax", config_hash_hex(cfg));
    const ControlField controls = obtain_controls(o, cfg, w.hash());

    // Sample the drift once on a fine grid; the integrator then works on the
    // piecewise-linear interpolant, which is how the controls enter anyway.
    const DriftField df =
        score_drift_from_hjb(controls, cfg.model, uniform_grid(1001));
    auto drift = [&df](double r) {
        const double x = std::clamp(r, 0.0, 1.0) * double(df.r_grid.size() - 1);
        const std::size_t i =
            std::min(std::size_t(x), df.r_grid.size() - 2);
        const double u = x - double(i);
        return (1.0 - u) * df.drift[i] + u * df.drift[i + 1];
    };

    CsvTable t;
    t.metadata = {{"gate_r0", format_double(cfg.model.gate.r0)},
                  {"horizon", format_double(o.relax_horizon)}};
    t.columns = {"start", "t", "R"};
    std::string converged;
    for (double s : o.starts) {
        const Trajectory traj =
            relax_trajectory(drift, cfg.model, s, o.relax_horizon);
        for (std::size_t i = 0; i < traj.t.size(); ++i)
            t.rows.push_back({s, traj.t[i], traj.r[i]});
        if (!converged.empty()) converged += ",";
        converged += traj.converged ? "1" : "0";
    }
    t.metadata.insert({"converged", converged});
    w.csv_file("trajectories.csv", t);
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("relax: %zu trajectories (settled: %s); wrote %zu files to %s\n",
                o.starts.size(), converged.c_str(), w.count() + 1,
                w.dir().c_str());
    return 0;
}

int run_bifurcation(const Options& o) {
    apply_threads(o.threads);
    for (double b : o.betas)
        if (!(b > 0.0))
            throw std::invalid_argument("bifurcation: --betas entries must be > 0");
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "bifurcation", config_hash_hex(cfg));

    const DriftSource source =
        o.source == "hjb" ? DriftSource::Hjb : DriftSource::Closure;
    ClosureParams cp;
    const ClosureParams* cpp = nullptr;
    if (source == DriftSource::Closure) {
        if (!o.closure_path.empty()) {
            cp = closure_from_json_file(o.closure_path);
        } else {
            cp = fit_closure_from_config(cfg, o.verbose);
            w.text_file("closure.json", closure_to_json(cp, w.hash()).dump(2) + "\n");
        }
        cpp = &cp;
    }

    const BifurcationDiagram bd =
        bifurcation_scan(cfg, o.betas, source, cpp, true);

    CsvTable t;
    t.columns = {"beta", "R_star", "stability"};
    std::string folds;
    for (const auto& f : bd.folds) {
        if (!folds.empty()) folds += " ";
        folds += format_double(f.first) + "-" + format_double(f.second);
    }
    if (!folds.empty()) t.metadata.insert({"folds", folds});
    std::string failed;
    for (const BifurcationPoint& pt : bd.points) {
        if (pt.failed) {
            if (!failed.empty()) failed += ",";
            failed += format_double(pt.beta);
            continue;
        }
        for (const ScoreFixedPoint& fp : pt.fixed_points)
            t.rows.push_back({pt.beta, fp.r,
                              fp.stability == Stability::Stable ? 1.0 : 0.0});
    }
    if (!failed.empty()) t.metadata.insert({"failed_betas", failed});
    w.csv_file("bifurcation.csv", t);
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("bifurcation: %zu scan points, %zu fold bracket(s)%s%s; wrote %zu files to %s\n",
                bd.points.size(), bd.folds.size(),
                folds.empty() ? "" : " at ", folds.c_str(), w.count() + 1,
                w.dir().c_str());
    return 0;
}

int run_closure_fit(const Options& o) {
    apply_threads(o.threads);
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "closure-fit", config_hash_hex(cfg));
    const ClosureParams cp = fit_closure_from_config(cfg, o.verbose);
    w.text_file("closure.json", closure_to_json(cp, w.hash()).dump(2) + "\n");
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("closure-fit: a=%.4g b=%.4g ybar*=%.4g (rms %.3g / %.3g); wrote %zu files to %s\n",
                cp.a_coef, cp.b_coef, cp.ybar_star, cp.rms_alpha0, cp.rms_alpha,
                w.count() + 1, w.dir().c_str());
    return 0;
}

int run_simulate(const Options& o) {
    apply_threads(o.threads);
    const SolverConfig cfg = resolve_config(o);
    RunWriter w(o, "simulate", config_hash_hex(cfg));
    LoadedControls lc = load_controls_file(o.controls_path, cfg.model);
    check_provenance(lc.hash, w.hash(), o.allow_hash_mismatch);

    SimConfig sc;
    sc.horizon = o.sim_horizon;
    sc.seed = o.seed;
    sc.q0 = o.q0;
    sc.r0 = o.r0;
    sc.freeze_score = o.freeze_score;
    sc.record_dt = o.record_dt;
    sc.validate(lc.field.grid);

    if (o.verbose)
        std::fprintf(stderr, "simulating %d paths over %g day(s)...\n",
                     o.n_paths, sc.horizon);
    const SimResult res = simulate(sc, lc.field, cfg.model, o.n_paths, true);

    {
        CsvTable t;
        t.metadata = {{"n_paths", std::to_string(res.n_paths)},
                      {"seed", std::to_string(sc.seed)}};
        t.columns = {"path", "t", "q", "R", "cash", "penalty", "a_wins",
                     "a_requests"};
        for (int p = 0; p < res.n_paths; ++p)
            for (const PathPoint& pt : res.paths[std::size_t(p)])
                t.rows.push_back({double(p), pt.t, pt.q, pt.r, pt.cash,
                                  pt.penalty, double(pt.a_wins),
                                  double(pt.a_requests)});
        w.csv_file("paths.csv", t);
    }

    ordered_json j;
    j["config_hash"] = w.hash();
    j["controls_hash"] = lc.hash;
    j["seed"] = sc.seed;
    j["horizon_days"] = sc.horizon;
    j["n_paths"] = res.n_paths;
    j["q0"] = sc.q0;
    j["r0"] = sc.r0;
    j["freeze_score"] = sc.freeze_score;
    j["record_dt"] = sc.record_dt;
    j["winrate_a"] = res.winrate_a;
    j["mean_q"] = res.mean_q;
    j["std_q"] = res.std_q;
    j["pnl_a_rate"] = res.pnl_a_rate;

    double cash = 0, penalty = 0, objective = 0, traded_a = 0, traded_b = 0;
    long long a_req = 0, a_win = 0, b_req = 0, b_win = 0, skips = 0;
    double tr_min = 1.0, tr_max = 0.0, tr_mean = 0.0;
    for (const PathStats& s : res.stats) {
        cash += s.cash;
        penalty += s.penalty;
        objective += s.objective;
        traded_a += s.traded_a;
        traded_b += s.traded_b;
        a_req += s.a_requests;
        a_win += s.a_wins;
        b_req += s.b_requests;
        b_win += s.b_wins;
        skips += s.boundary_skips;
        tr_min = std::min(tr_min, s.terminal_r);
        tr_max = std::max(tr_max, s.terminal_r);
        tr_mean += s.terminal_r;
    }
    const double n = double(res.n_paths);
    j["per_path_mean"] = {{"cash", cash / n},
                          {"penalty", penalty / n},
                          {"objective", objective / n},
                          {"traded_a", traded_a / n},
                          {"traded_b", traded_b / n}};
    j["totals"] = {{"a_requests", a_req},
                   {"a_wins", a_win},
                   {"b_requests", b_req},
                   {"b_wins", b_win},
                   {"boundary_skips", skips}};
    j["terminal_r"] = {{"mean", tr_mean / n}, {"min", tr_min}, {"max", tr_max}};
    if (sc.horizon >= 1.0) {
        const TurnoverReport tr = turnover_report(res);
        j["turnover_per_day"] = {{"total", tr.total_per_day},
                                 {"tier_a", tr.tier_a_per_day},
                                 {"tier_b", tr.tier_b_per_day}};
    }
    if (!o.ode_starts.empty()) {
        if (o.verbose)
            std::fprintf(stderr, "comparing against the slow-score ODE...\n");
        const std::vector<OdeComparison> cmp =
            validate_against_ode(lc.field, cfg.model, o.ode_starts, sc.horizon,
                                 o.n_paths, sc.seed, true);
        ordered_json arr = ordered_json::array();
        for (const OdeComparison& c : cmp) {
            ordered_json e;
            e["r0"] = c.r0;
            e["max_abs_dev"] = c.max_abs_dev;
            e["max_dev_over_stderr"] = c.max_dev_over_stderr;
            ordered_json rows = ordered_json::array();
            for (const OdeCheckRow& r : c.rows)
                rows.push_back({{"t", r.t},
                                {"ode_r", r.ode_r},
                                {"mc_mean", r.mc_mean},
                                {"mc_stderr", r.mc_stderr}});
            e["checkpoints"] = std::move(rows);
            arr.push_back(std::move(e));
        }
        j["ode_comparison"] = std::move(arr);
    }
    w.text_file("summary.json", j.dump(2) + "\n");
    w.text_file("params_resolved.json", save_config(cfg));
    w.manifest();
    std::printf("simulate: %d paths, %g day(s), tier-A win rate %.4g; wrote %zu files to %s\n",
                res.n_paths, sc.horizon, res.winrate_a, w.count() + 1,
                w.dir().c_str());
    return 0;
}

int run_report(const Options& o) {
    FigureSpec spec;
    spec.id = parse_figure_id(o.figure);
    spec.inputs = o.inputs;
    spec.out_dir = o.out_dir;

    FigureStyle st;
    st.svg = !o.no_svg;
    if (o.fig_width > 0) st.width = o.fig_width;
    if (o.fig_height > 0) st.height = o.fig_height;
    if (o.fx_min) st.x_min = *o.fx_min;
    if (o.fx_max) st.x_max = *o.fx_max;
    if (o.fy_min) st.y_min = *o.fy_min;
    if (o.fy_max) st.y_max = *o.fy_max;
    st.log_x = o.log_x;
    st.log_y = o.log_y;
    if (o.r0_line) st.r0_line = *o.r0_line;
    if (o.r_slice) st.r_slice = *o.r_slice;
    spec.style = st;

    const RenderOutput ro = render(spec);

    // trace the figure back to the solver run that fed it
    std::string hash = "unknown";
    try {
        const CsvTable t = read_csv(spec.inputs.at(0));
        if (t.metadata.count("config_hash")) hash = t.metadata.at("config_hash");
    } catch (const std::exception&) {
    }
    RunWriter w(o, "report", hash);
    for (const std::string& f : ro.files)
        w.adopt(fs::path(f).filename().string());
    w.manifest();
    std::printf("report: wrote %s (%zu file(s)) to %s\n",
                figure_id_name(spec.id).c_str(), ro.files.size() + 1,
                w.dir().c_str());
    return 0;
}

int emit_error(const char* type, const std::string& message, int code) {
    ordered_json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Two-tier RFQ dealer: stationary solver, slow-score analyses, "
                 "Monte Carlo simulation and figure rendering"};
    app.set_version_flag("--version", std::string("rfqmm ") + kToolVersion);
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* s) {
        s->add_option("--params", o.params_path,
                      "JSON parameter file (built-in defaults when omitted)")
            ->check(CLI::ExistingFile);
        s->add_option("--out", o.out_dir, "output directory (created if absent)")
            ->capture_default_str();
        s->add_option("--threads", o.threads,
                      "cap worker threads (0 = library default)")
            ->check(CLI::NonNegativeNumber);
        s->add_flag("--verbose", o.verbose, "progress notes on stderr");
    };
    // validated by the model (names the field and its constraint), not here
    auto add_alpha = [&](CLI::App* s) {
        s->add_option("--alpha", o.alpha_override,
                      "override score.alpha (0 freezes the score feedback)");
    };
    auto add_controls_reuse = [&](CLI::App* s) {
        s->add_option("--controls", o.controls_path,
                      "reuse quoting surfaces from a controls.csv instead of solving")
            ->check(CLI::ExistingFile);
        s->add_flag("--allow-hash-mismatch", o.allow_hash_mismatch,
                    "accept controls produced under a different config");
    };

    CLI::App* solve =
        app.add_subcommand("solve", "solve the stationary dealer problem and "
                                    "write the full table set");
    add_common(solve);
    add_alpha(solve);

    CLI::App* controls = app.add_subcommand(
        "controls", "solve and write only the quoting surfaces");
    add_common(controls);
    add_alpha(controls);

    CLI::App* ham = app.add_subcommand(
        "hamiltonian", "per-request optimization diagnostics");
    ham->require_subcommand(1);
    CLI::App* dump = ham->add_subcommand(
        "dump", "tabulate the request Hamiltonian, optimal offset and "
                "derivatives on a marginal-value grid");
    add_common(dump);
    dump->add_option("--x-min", o.x_min, "lower marginal-value bound, bp*M");
    dump->add_option("--x-max", o.x_max, "upper marginal-value bound, bp*M");
    dump->add_option("--n-x", o.n_x, "grid points")
        ->check(CLI::Range(2, 100001))
        ->capture_default_str();

    CLI::App* phase = app.add_subcommand(
        "phase-portrait", "score drift field and its fixed points");
    add_common(phase);
    add_controls_reuse(phase);
    phase->add_option("--n-points", o.n_points, "score grid resolution")
        ->check(CLI::Range(2, 100001))
        ->capture_default_str();

    CLI::App* relax = app.add_subcommand(
        "relax", "integrate the slow-score relaxation from given starts");
    add_common(relax);
    add_controls_reuse(relax);
    relax->add_option("--starts", o.starts, "starting scores, comma separated")
        ->required()
        ->delimiter(',');
    relax->add_option("--horizon", o.relax_horizon, "days")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CLI::App* bif = app.add_subcommand(
        "bifurcation", "fixed-point structure vs gate steepness");
    add_common(bif);
    bif->add_option("--betas", o.betas, "gate steepness values, comma separated")
        ->required()
        ->delimiter(',');
    bif->add_option("--source", o.source,
                    "drift source: closure (fast) or hjb (re-solves per beta)")
        ->check(CLI::IsMember({"closure", "hjb"}))
        ->capture_default_str();
    bif->add_option("--closure", o.closure_path,
                    "closure coefficients JSON (fitted here when omitted)")
        ->check(CLI::ExistingFile);

    CLI::App* clo = app.add_subcommand(
        "closure-fit", "fit the reduced drift closure from a pair of solves");
    add_common(clo);

    CLI::App* sim = app.add_subcommand(
        "simulate", "Monte Carlo of the controlled request flow");
    add_common(sim);
    sim->add_option("--controls", o.controls_path,
                    "quoting surfaces (controls.csv from a solve)")
        ->required()
        ->check(CLI::ExistingFile);
    sim->add_flag("--allow-hash-mismatch", o.allow_hash_mismatch,
                  "accept controls produced under a different config");
    sim->add_option("--seed", o.seed, "RNG seed")->capture_default_str();
    sim->add_option("--paths", o.n_paths, "independent replications")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sim->add_option("--horizon", o.sim_horizon, "days")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sim->add_option("--q0", o.q0, "starting inventory, M (must sit on the grid)")
        ->capture_default_str();
    sim->add_option("--r0", o.r0, "starting score")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sim->add_option("--record-dt", o.record_dt, "path sampling cadence, days")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sim->add_flag("--freeze-score", o.freeze_score,
                  "hold the score at --r0 (frozen-feedback baseline)");
    sim->add_option("--ode-starts", o.ode_starts,
                    "score starts for a mean-path comparison against the "
                    "slow-score ODE, comma separated")
        ->delimiter(',');

    CLI::App* rep = app.add_subcommand(
        "report", "render a figure dataset (CSV, optional SVG)");
    rep->add_option("--figure", o.figure,
                    "value_heatmap, offset_R, offset_q, pnl_R, pnl_drift, "
                    "drift_portrait, relaxation or bifurcation")
        ->required();
    rep->add_option("--in", o.inputs, "input CSV path(s), in the figure's order")
        ->required()
        ->delimiter(',');
    rep->add_option("--out", o.out_dir, "output directory (created if absent)")
        ->capture_default_str();
    rep->add_flag("--verbose", o.verbose, "progress notes on stderr");
    rep->add_flag("--no-svg", o.no_svg, "write only the figure CSV");
    rep->add_option("--width", o.fig_width, "SVG width, px")
        ->check(CLI::PositiveNumber);
    rep->add_option("--height", o.fig_height, "SVG height, px")
        ->check(CLI::PositiveNumber);
    rep->add_option("--x-min", o.fx_min, "x axis lower bound");
    rep->add_option("--x-max", o.fx_max, "x axis upper bound");
    rep->add_option("--y-min", o.fy_min, "y axis lower bound");
    rep->add_option("--y-max", o.fy_max, "y axis upper bound");
    rep->add_flag("--log-x", o.log_x, "logarithmic x axis");
    rep->add_flag("--log-y", o.log_y, "logarithmic y axis");
    rep->add_option("--r0-line", o.r0_line,
                    "override the gate-midpoint guide line");
    rep->add_option("--r-slice", o.r_slice,
                    "score slice for the offset-vs-inventory figure");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("usage", e.what(), 2);
    }

    try {
        if (app.got_subcommand(solve)) return run_solve(o, false);
        if (app.got_subcommand(controls)) return run_solve(o, true);
        if (app.got_subcommand(ham)) return run_hamiltonian_dump(o);
        if (app.got_subcommand(phase)) return run_phase_portrait(o);
        if (app.got_subcommand(relax)) return run_relax(o);
        if (app.got_subcommand(bif)) return run_bifurcation(o);
        if (app.got_subcommand(clo)) return run_closure_fit(o);
        if (app.got_subcommand(sim)) return run_simulate(o);
        if (app.got_subcommand(rep)) return run_report(o);
        return emit_error("usage", "no subcommand selected", 2);
    } catch (const ProvenanceError& e) {
        return emit_error("provenance", e.what(), 1);
    } catch (const NumericError& e) {
        return emit_error("numeric", e.what(), 1);
    } catch (const nlohmann::json::exception& e) {
        return emit_error("config", e.what(), 1);
    } catch (const std::invalid_argument& e) {
        return emit_error("config", e.what(), 1);
    } catch (const std::domain_error& e) {
        return emit_error("config", e.what(), 1);
    } catch (const std::exception& e) {
        return emit_error("runtime", e.what(), 1);
    }
}
