// End-to-end tests of the command-line driver: each case invokes the real
// binary on a small, fast configuration and checks exit codes, written
// artifacts, provenance stamping and payload determinism.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfqmm/csv.hpp"

#ifndef RFQMM_CLI_PATH
#error "RFQMM_CLI_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kScratch = fs::path("test_cli_io");

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Run the binary with `args`, capturing stdout/stderr and the exit code.
RunResult run_cli(const std::string& args) {
    static int counter = 0;
    fs::create_directories(kScratch);
    const fs::path out_f = kScratch / ("stdout_" + std::to_string(counter));
    const fs::path err_f = kScratch / ("stderr_" + std::to_string(counter));
    ++counter;

    const std::string cmd = std::string(RFQMM_CLI_PATH) + " " + args + " > " +
                            out_f.string() + " 2> " + err_f.string();
    const int raw = std::system(cmd.c_str());

    RunResult r;
    r.exit_code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_f);
    r.err = slurp(err_f);
    return r;
}

/// Small model with low request intensities and a fast block contraction so
/// every solve finishes in well under a second.
const char* kFastParams = R"({
  "version": 1,
  "ladder": {"sizes": [1.0, 5.0]},
  "intensities": {"lambda_a": [0.0, 20.0], "lambda_b": [40.0, 30.0]},
  "win_a": {"kappa": [5.0, 4.0], "delta_bar": [0.3, 0.5]},
  "win_b": {"kappa": [5.0, 4.0], "delta_bar": [0.3, 0.5]},
  "gate": {"g_min": 0.2, "g_max": 1.0, "r0": 0.6, "beta": 40.0},
  "score": {"alpha": 0.01, "size_weighted": false},
  "risk": {"sigma": 20.0, "gamma": 0.001, "eta": 1.0, "theta": [0.2, 0.2], "rho": 5.0},
  "grid": {"q_max": 6.0, "q_step": 1.0, "n_r": 21, "t_block": 0.5, "n_t": 500},
  "fixed_point": {"tol": 1e-06, "max_iter": 200, "zeta": 0.5, "anderson_m": 5,
                  "anderson_ridge": 1e-08, "warm_start": true}
})";

fs::path write_fast_params() {
    fs::create_directories(kScratch);
    const fs::path p = kScratch / "fast_params.json";
    std::ofstream f(p);
    f << kFastParams;
    return p;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = kScratch / name;
    fs::remove_all(d);
    return d;
}

json read_manifest(const fs::path& dir) {
    return json::parse(slurp(dir / "manifest.json"));
}

}  // namespace

TEST_CASE("help and version exit cleanly") {
    const RunResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    for (const char* sub :
         {"solve", "controls", "hamiltonian", "phase-portrait", "relax",
          "bifurcation", "closure-fit", "simulate", "report"})
        CHECK(help.out.find(sub) != std::string::npos);

    const RunResult ver = run_cli("--version");
    CHECK(ver.exit_code == 0);
    CHECK(ver.out.find("rfqmm") != std::string::npos);
}

TEST_CASE("solve writes the full table set with a consistent manifest") {
    const fs::path params = write_fast_params();
    const fs::path dir = fresh_dir("solve_run");

    const RunResult r =
        run_cli("solve --params " + params.string() + " --out " + dir.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("converged") != std::string::npos);

    const json m = read_manifest(dir);
    CHECK(m.at("subcommand") == "solve");
    CHECK(m.at("tool") == "rfqmm");
    const std::string hash = m.at("config_hash").get<std::string>();
    CHECK(hash.size() == 16);

    const std::vector<std::string> expected = {
        "controls.csv", "fixed_point.csv", "params_resolved.json", "phi.csv",
        "pnl.csv",      "value.csv"};
    CHECK(m.at("outputs").get<std::vector<std::string>>() == expected);

    // every CSV carries the manifest hash
    for (const char* f :
         {"controls.csv", "fixed_point.csv", "phi.csv", "pnl.csv", "value.csv"}) {
        const rfqmm::CsvTable t = rfqmm::read_csv((dir / f).string());
        REQUIRE(t.metadata.count("config_hash"));
        CHECK(t.metadata.at("config_hash") == hash);
        CHECK_FALSE(t.rows.empty());
    }

    // the resolved config parses and re-hashes to the same value
    const json resolved = json::parse(slurp(dir / "params_resolved.json"));
    CHECK(resolved.at("version") == 1);
    CHECK(resolved.at("score").at("alpha") == 0.01);
}

TEST_CASE("solve reruns are byte-identical apart from the manifest") {
    const fs::path params = write_fast_params();
    const fs::path d1 = fresh_dir("det_a");
    const fs::path d2 = fresh_dir("det_b");
    REQUIRE(run_cli("solve --params " + params.string() + " --out " +
                    d1.string()).exit_code == 0);
    REQUIRE(run_cli("solve --params " + params.string() + " --out " +
                    d2.string()).exit_code == 0);
    for (const char* f : {"controls.csv", "fixed_point.csv", "phi.csv",
                          "pnl.csv", "value.csv", "params_resolved.json"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
}

TEST_CASE("controls subcommand writes only the quoting surfaces") {
    const fs::path params = write_fast_params();
    const fs::path dir = fresh_dir("controls_run");
    REQUIRE(run_cli("controls --params " + params.string() + " --out " +
                    dir.string()).exit_code == 0);
    const json m = read_manifest(dir);
    const std::vector<std::string> expected = {"controls.csv",
                                               "params_resolved.json"};
    CHECK(m.at("outputs").get<std::vector<std::string>>() == expected);
    CHECK_FALSE(fs::exists(dir / "value.csv"));
}

TEST_CASE("alpha override reaches the model and the provenance hash") {
    const fs::path params = write_fast_params();
    const fs::path d1 = fresh_dir("alpha_base");
    const fs::path d2 = fresh_dir("alpha_zero");
    REQUIRE(run_cli("controls --params " + params.string() + " --out " +
                    d1.string()).exit_code == 0);
    REQUIRE(run_cli("controls --params " + params.string() +
                    " --alpha 0 --out " + d2.string()).exit_code == 0);
    CHECK(read_manifest(d1).at("config_hash") !=
          read_manifest(d2).at("config_hash"));
    const json resolved = json::parse(slurp(d2 / "params_resolved.json"));
    CHECK(resolved.at("score").at("alpha") == 0.0);
}

TEST_CASE("invalid configuration values name the offending field") {
    const fs::path params = write_fast_params();
    const fs::path dir = fresh_dir("bad_alpha");
    const RunResult r = run_cli("solve --params " + params.string() +
                                " --alpha 1.5 --out " + dir.string());
    CHECK(r.exit_code == 1);
    const json e = json::parse(r.err);
    CHECK(e.at("error").at("type") == "config");
    const std::string msg = e.at("error").at("message").get<std::string>();
    CHECK(msg.find("score.alpha") != std::string::npos);
    CHECK(msg.find("[0,1)") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "controls.csv"));
}

TEST_CASE("unknown flags produce a usage error as JSON") {
    const RunResult r = run_cli("solve --definitely-not-a-flag");
    CHECK(r.exit_code == 2);
    const json e = json::parse(r.err);
    CHECK(e.at("error").at("type") == "usage");
}

TEST_CASE("unknown config keys are rejected fail-closed") {
    fs::create_directories(kScratch);
    const fs::path p = kScratch / "typo_params.json";
    {
        std::string doc = kFastParams;
        doc.replace(doc.find("\"score\""), 7, "\"scoer\"");
        std::ofstream f(p);
        f << doc;
    }
    const RunResult r = run_cli("solve --params " + p.string() + " --out " +
                                (kScratch / "typo_out").string());
    CHECK(r.exit_code == 1);
    const json e = json::parse(r.err);
    CHECK(e.at("error").at("type") == "config");
    CHECK(e.at("error").at("message").get<std::string>().find("scoer") !=
          std::string::npos);
}

TEST_CASE("hamiltonian dump tabulates every size and tier") {
    const fs::path params = write_fast_params();
    const fs::path dir = fresh_dir("ham_run");
    REQUIRE(run_cli("hamiltonian dump --params " + params.string() +
                    " --n-x 11 --out " + dir.string()).exit_code == 0);
    const rfqmm::CsvTable t = rfqmm::read_csv((dir / "hamiltonian.csv").string());
    CHECK(t.columns == std::vector<std::string>{"size", "tier", "x", "H",
                                                "delta_hat", "H_prime",
                                                "H_second"});
    CHECK(t.rows.size() == 2 * 2 * 11);  // sizes x tiers x grid points
    // a max of affine functions of x is convex with slope = win rate
    // (the rate underflows to 0 at the extreme negative end of the dump)
    const std::size_t c1 = t.column_index("H_prime");
    const std::size_t c2 = t.column_index("H_second");
    int interior = 0;
    for (const auto& row : t.rows) {
        CHECK(row[c1] >= 0.0);
        CHECK(row[c1] < 1.0);
        CHECK(row[c2] >= 0.0);
        if (row[c1] > 0.01 && row[c1] < 0.99) ++interior;
    }
    CHECK(interior > 0);
}

TEST_CASE("phase portrait and relax reuse solved controls") {
    const fs::path params = write_fast_params();
    const fs::path cdir = fresh_dir("pp_controls");
    REQUIRE(run_cli("controls --params " + params.string() + " --out " +
                    cdir.string()).exit_code == 0);
    const std::string controls = (cdir / "controls.csv").string();

    const fs::path pdir = fresh_dir("pp_run");
    const RunResult pp = run_cli("phase-portrait --params " + params.string() +
                                 " --controls " + controls + " --n-points 101" +
                                 " --out " + pdir.string());
    REQUIRE(pp.exit_code == 0);
    const rfqmm::CsvTable drift = rfqmm::read_csv((pdir / "drift.csv").string());
    CHECK(drift.columns == std::vector<std::string>{"R", "ybar", "drift",
                                                    "drift_per_trade"});
    CHECK(drift.rows.size() == 101);
    const rfqmm::CsvTable fps =
        rfqmm::read_csv((pdir / "fixed_points.csv").string());
    CHECK(fps.columns == std::vector<std::string>{"R_star", "stability"});
    CHECK_FALSE(fps.rows.empty());

    const fs::path rdir = fresh_dir("relax_run");
    const RunResult rx = run_cli("relax --params " + params.string() +
                                 " --controls " + controls +
                                 " --starts 0.2,0.9 --horizon 2 --out " +
                                 rdir.string());
    REQUIRE(rx.exit_code == 0);
    const rfqmm::CsvTable tr =
        rfqmm::read_csv((rdir / "trajectories.csv").string());
    CHECK(tr.columns == std::vector<std::string>{"start", "t", "R"});
    const std::size_t cs = tr.column_index("start");
    bool saw_low = false, saw_high = false;
    for (const auto& row : tr.rows) {
        if (row[cs] == 0.2) saw_low = true;
        if (row[cs] == 0.9) saw_high = true;
    }
    CHECK(saw_low);
    CHECK(saw_high);
}

TEST_CASE("closure fit feeds the bifurcation scan") {
    const fs::path params = write_fast_params();
    const fs::path cdir = fresh_dir("cf_run");
    REQUIRE(run_cli("closure-fit --params " + params.string() + " --out " +
                    cdir.string()).exit_code == 0);
    const json cj = json::parse(slurp(cdir / "closure.json"));
    for (const char* k : {"a_coef", "b_coef", "ybar_star", "xi_a", "xi_b",
                          "xi_0", "rms_alpha0", "rms_alpha"})
        CHECK(cj.contains(k));

    const fs::path bdir = fresh_dir("bif_run");
    const RunResult r = run_cli("bifurcation --params " + params.string() +
                                " --betas 5,20,80 --source closure --closure " +
                                (cdir / "closure.json").string() + " --out " +
                                bdir.string());
    REQUIRE(r.exit_code == 0);
    const rfqmm::CsvTable t =
        rfqmm::read_csv((bdir / "bifurcation.csv").string());
    CHECK(t.columns == std::vector<std::string>{"beta", "R_star", "stability"});
    const std::size_t cb = t.column_index("beta");
    std::vector<double> betas_seen;
    for (const auto& row : t.rows) betas_seen.push_back(row[cb]);
    for (double b : {5.0, 20.0, 80.0})
        CHECK(std::count(betas_seen.begin(), betas_seen.end(), b) >= 1);
}

TEST_CASE("bifurcation without a closure file fits one and saves it") {
    const fs::path params = write_fast_params();
    const fs::path dir = fresh_dir("bif_selffit");
    REQUIRE(run_cli("bifurcation --params " + params.string() +
                    " --betas 10,40 --out " + dir.string()).exit_code == 0);
    CHECK(fs::exists(dir / "closure.json"));
    const json m = read_manifest(dir);
    const auto outputs = m.at("outputs").get<std::vector<std::string>>();
    CHECK(std::count(outputs.begin(), outputs.end(), "closure.json") == 1);
    CHECK(std::count(outputs.begin(), outputs.end(), "bifurcation.csv") == 1);
}

TEST_CASE("simulate is seed-deterministic and fails closed on foreign controls") {
    const fs::path params = write_fast_params();
    const fs::path cdir = fresh_dir("sim_controls");
    REQUIRE(run_cli("controls --params " + params.string() + " --out " +
                    cdir.string()).exit_code == 0);
    const std::string controls = (cdir / "controls.csv").string();

    const fs::path s1 = fresh_dir("sim_a");
    const fs::path s2 = fresh_dir("sim_b");
    const std::string base = "simulate --params " + params.string() +
                             " --controls " + controls +
                             " --paths 4 --horizon 0.5 --seed 7 --out ";
    REQUIRE(run_cli(base + s1.string()).exit_code == 0);
    REQUIRE(run_cli(base + s2.string()).exit_code == 0);
    CHECK(slurp(s1 / "paths.csv") == slurp(s2 / "paths.csv"));
    CHECK(slurp(s1 / "summary.json") == slurp(s2 / "summary.json"));

    const json sj = json::parse(slurp(s1 / "summary.json"));
    CHECK(sj.at("n_paths") == 4);
    CHECK(sj.at("config_hash") == sj.at("controls_hash"));
    CHECK(sj.contains("winrate_a"));
    CHECK_FALSE(sj.contains("turnover_per_day"));  // horizon < 1 day

    // a different seed must change the paths
    const fs::path s3 = fresh_dir("sim_c");
    REQUIRE(run_cli("simulate --params " + params.string() + " --controls " +
                    controls + " --paths 4 --horizon 0.5 --seed 8 --out " +
                    s3.string()).exit_code == 0);
    CHECK(slurp(s1 / "paths.csv") != slurp(s3 / "paths.csv"));

    // tampered params: hash mismatch refused, then explicitly overridden
    const fs::path tampered = kScratch / "tampered_params.json";
    {
        std::string doc = kFastParams;
        doc.replace(doc.find("\"sigma\": 20.0"), 13, "\"sigma\": 25.0");
        std::ofstream f(tampered);
        f << doc;
    }
    const fs::path s4 = fresh_dir("sim_d");
    const RunResult refused =
        run_cli("simulate --params " + tampered.string() + " --controls " +
                controls + " --paths 2 --out " + s4.string());
    CHECK(refused.exit_code == 1);
    const json e = json::parse(refused.err);
    CHECK(e.at("error").at("type") == "provenance");
    CHECK_FALSE(fs::exists(s4 / "paths.csv"));
    const RunResult forced =
        run_cli("simulate --params " + tampered.string() + " --controls " +
                controls + " --paths 2 --allow-hash-mismatch --out " +
                s4.string());
    CHECK(forced.exit_code == 0);
}

TEST_CASE("simulate compares the mean path against the reduced ODE") {
    const fs::path params = write_fast_params();
    const fs::path cdir = fresh_dir("ode_controls");
    REQUIRE(run_cli("controls --params " + params.string() + " --out " +
                    cdir.string()).exit_code == 0);
    const fs::path dir = fresh_dir("ode_run");
    REQUIRE(run_cli("simulate --params " + params.string() + " --controls " +
                    (cdir / "controls.csv").string() +
                    " --paths 16 --horizon 1 --seed 3 --ode-starts 0.3,0.8" +
                    " --out " + dir.string()).exit_code == 0);
    const json sj = json::parse(slurp(dir / "summary.json"));
    REQUIRE(sj.contains("ode_comparison"));
    REQUIRE(sj.at("ode_comparison").size() == 2);
    for (const auto& e : sj.at("ode_comparison")) {
        CHECK(e.at("checkpoints").size() == 10);
        CHECK(e.at("max_dev_over_stderr").get<double>() >= 0.0);
    }
    CHECK(sj.contains("turnover_per_day"));
}

TEST_CASE("report renders from solver artifacts and keeps their hash") {
    const fs::path params = write_fast_params();
    const fs::path sdir = fresh_dir("rep_solve");
    REQUIRE(run_cli("solve --params " + params.string() + " --out " +
                    sdir.string()).exit_code == 0);
    const std::string hash =
        read_manifest(sdir).at("config_hash").get<std::string>();

    const fs::path fdir = fresh_dir("rep_fig");
    REQUIRE(run_cli("report --figure value_heatmap --in " +
                    (sdir / "value.csv").string() + " --out " +
                    fdir.string()).exit_code == 0);
    CHECK(fs::exists(fdir / "value_heatmap.csv"));
    CHECK(fs::exists(fdir / "value_heatmap.svg"));
    CHECK(read_manifest(fdir).at("config_hash") == hash);

    const fs::path fdir2 = fresh_dir("rep_fig2");
    REQUIRE(run_cli("report --figure pnl_R --in " +
                    (sdir / "pnl.csv").string() + " --no-svg --out " +
                    fdir2.string()).exit_code == 0);
    CHECK(fs::exists(fdir2 / "pnl_R.csv"));
    CHECK_FALSE(fs::exists(fdir2 / "pnl_R.svg"));

    const RunResult bad = run_cli("report --figure pie_chart --in x.csv --out " +
                                  fresh_dir("rep_bad").string());
    CHECK(bad.exit_code == 1);
    CHECK(json::parse(bad.err).at("error").at("type") == "config");
}
