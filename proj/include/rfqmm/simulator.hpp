#pragma once

// Discrete-event Monte Carlo of the controlled two-tier RFQ flow.
//
// Requests arrive as Poisson streams per (size, tier, side); the gated tier
// is modulated by G(R_t).  Event times come from thinning against the
// constant majorant built at the fully open gate, which is exact because
// the intensity only changes at accepted gated-tier events.  At each
// request the dealer quotes the offset read from a control field (linear
// interpolation along the score axis; inventory always lands on grid), the
// win is drawn from the size's win curve at that offset, and a gated-tier
// outcome updates the score through the same EMA map the solver uses.
// Requests whose fill would leave the inventory grid are not quoted: the
// gated tier then still records a loss (the score decays), the background
// tier is simply skipped, and the occurrence is counted.
//
// The simulator validates the solver and the slow-score reduction; nothing
// here feeds back into them.

#include <cstdint>
#include <vector>

#include "rfqmm/grid.hpp"
#include "rfqmm/params.hpp"

namespace rfqmm {

struct SimConfig {
    double horizon = 1.0;    ///< day
    std::uint64_t seed = 0;
    double q0 = 0.0;         ///< M, must sit on the inventory grid
    double r0 = 0.5;
    bool freeze_score = false;  ///< hold R fixed; arrivals stay gated at r0
    double record_dt = 0.01;    ///< path sampling cadence, day

    void validate(const GridSpec& grid) const;
};

/// One sampled state of one path; ledgers are cumulative since t = 0.
struct PathPoint {
    double t = 0.0;
    double q = 0.0;
    double r = 0.0;
    double cash = 0.0;     ///< accrued edge, bp*M
    double penalty = 0.0;  ///< accrued (gamma/2) sigma^2 q^2 dt, bp*M
    long long a_wins = 0;
    long long a_requests = 0;
};

/// Per-path terminal ledger.
struct PathStats {
    double terminal_q = 0.0;
    double terminal_r = 0.0;
    double cash = 0.0;
    double penalty = 0.0;
    double objective = 0.0;  ///< cash - penalty
    double cash_a = 0.0;     ///< gated-tier share of the edge
    long long a_wins = 0;
    long long a_requests = 0;
    long long b_wins = 0;
    long long b_requests = 0;
    long long boundary_skips = 0;  ///< requests not quoted at the grid edge
    double traded_a = 0.0;  ///< M notional filled, gated tier
    double traded_b = 0.0;
    double int_q = 0.0;   ///< time integral of q over the horizon
    double int_q2 = 0.0;  ///< time integral of q^2
};

struct SimResult {
    SimConfig config;
    int n_paths = 0;
    std::vector<std::vector<PathPoint>> paths;  ///< [path][record]
    std::vector<PathStats> stats;               ///< [path]

    // Aggregates in fixed path order (independent of thread count).
    double winrate_a = 0.0;  ///< pooled tier-A wins / requests (NaN if none)
    double mean_q = 0.0;     ///< time-weighted across paths
    double std_q = 0.0;
    double pnl_a_rate = 0.0;  ///< gated-tier edge per day, bp*M
    std::vector<double> terminal_r;
};

/// Run n_paths independent replications.  Bit-identical for a fixed
/// (config, controls, params, n_paths) regardless of `parallel`.
SimResult simulate(const SimConfig& config, const ControlField& controls,
                   const ModelParams& params, int n_paths,
                   bool parallel = true);

/// One checkpoint of the mean Monte Carlo score path against the ODE.
struct OdeCheckRow {
    double t = 0.0;
    double ode_r = 0.0;
    double mc_mean = 0.0;
    double mc_stderr = 0.0;
};

struct OdeComparison {
    double r0 = 0.0;
    std::vector<OdeCheckRow> rows;  ///< 10 checkpoints over the horizon
    double max_abs_dev = 0.0;
    double max_dev_over_stderr = 0.0;
};

/// Compare the mean simulated score path against the slow-score ODE
/// integrated from the same controls, one comparison per starting score.
std::vector<OdeComparison> validate_against_ode(
    const ControlField& controls, const ModelParams& params,
    const std::vector<double>& r0_list, double horizon, int n_paths,
    std::uint64_t seed = 0, bool parallel = true);

struct TurnoverReport {
    double total_per_day = 0.0;   ///< M notional
    double tier_a_per_day = 0.0;
    double tier_b_per_day = 0.0;
};

/// Daily traded notional split by tier; requires horizon >= 1 day.
TurnoverReport turnover_report(const SimResult& result);

}  // namespace rfqmm
