#include "rfqmm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rfqmm/adiabatic.hpp"
#include "rfqmm/philox.hpp"

namespace rfqmm {

void SimConfig::validate(const GridSpec& grid) const {
    if (!(horizon > 0.0))
        throw std::invalid_argument("sim.horizon: must be > 0");
    if (!(record_dt > 0.0))
        throw std::invalid_argument("sim.record_dt: must be > 0");
    if (!(r0 >= 0.0 && r0 <= 1.0))
        throw std::invalid_argument("sim.r0: must lie in [0,1]");
    if (!(std::abs(q0) <= grid.q_max))
        throw std::invalid_argument("sim.q0: outside the inventory grid");
    const double steps = q0 / grid.q_step;
    if (std::abs(steps - std::lround(steps)) > 1e-9)
        throw std::invalid_argument(
            "sim.q0: must be an integer multiple of the grid step");
}

namespace {

struct Channel {
    std::size_t k;
    Tier tier;
    Side side;
    double base;  ///< per-side intensity before gating
};

// One replication; deterministic function of (config, controls, params, path).
void run_path(const SimConfig& cfg, const ControlField& controls,
              const ModelParams& mp, const std::vector<Channel>& channels,
              double lam_b_tot, double lam_a_tot, double lam_maj,
              std::uint64_t path, std::vector<PathPoint>& points,
              PathStats& st) {
    const GridSpec& grid = controls.grid;
    const double T = cfg.horizon;
    const double pen_coef = 0.5 * mp.risk.gamma * mp.risk.sigma * mp.risk.sigma;
    const int qi_zero = grid.q_index_of_zero();
    const int nr = grid.n_r;

    double t = 0.0, q = cfg.q0, r = cfg.r0;
    double cash = 0.0, pen = 0.0;
    std::uint64_t evt = 0;
    long long j_rec = 0;

    points.clear();
    points.reserve(static_cast<std::size_t>(T / cfg.record_dt) + 2);
    st = PathStats{};

    while (true) {
        const EventDraws d = event_draws(cfg.seed, path, evt++);
        const double t_next = t - std::log(d.u[0]) / lam_maj;
        const double stop = std::min(t_next, T);

        // emit scheduled samples and integrate the ledgers over [t, stop)
        while (true) {
            const double rec_t = static_cast<double>(j_rec) * cfg.record_dt;
            if (!(rec_t < stop) || rec_t > T) break;
            points.push_back({rec_t, q, r, cash,
                              pen + pen_coef * q * q * (rec_t - t), st.a_wins,
                              st.a_requests});
            ++j_rec;
        }
        const double seg = stop - t;
        pen += pen_coef * q * q * seg;
        st.int_q += q * seg;
        st.int_q2 += q * q * seg;

        if (t_next >= T) break;
        t = t_next;

        const double g = gate(mp.gate, r);
        const double lam_tot = lam_b_tot + g * lam_a_tot;
        const double x = d.u[1] * lam_maj;
        if (x >= lam_tot) continue;  // thinned-out candidate

        // locate the channel by its slice of the accepted intensity
        double cum = 0.0;
        const Channel* ch = nullptr;
        for (const Channel& c : channels) {
            cum += c.tier == Tier::A ? g * c.base : c.base;
            if (x < cum) {
                ch = &c;
                break;
            }
        }
        if (ch == nullptr) continue;  // guards the cum == lam_tot edge

        const double z = mp.ladder.sizes[ch->k];
        const int qi = qi_zero + static_cast<int>(std::lround(q / grid.q_step));
        const double pos =
            std::min(1.0, std::max(0.0, r)) * static_cast<double>(nr - 1);
        int ri = static_cast<int>(pos);
        if (ri >= nr - 1) ri = nr - 2;
        const double w = pos - static_cast<double>(ri);

        if (!controls.present(ch->k, ch->tier, ch->side, qi, ri) ||
            !controls.present(ch->k, ch->tier, ch->side, qi, ri + 1)) {
            // not quoted at this inventory: a gated-tier request still
            // counts (and decays the score), background flow just passes
            ++st.boundary_skips;
            if (ch->tier == Tier::A) {
                ++st.a_requests;
                if (!cfg.freeze_score) r = ema_update(mp, r, false, ch->k);
            }
            continue;
        }

        const double d0 = controls.delta_at(ch->k, ch->tier, ch->side, qi, ri);
        const double d1 =
            controls.delta_at(ch->k, ch->tier, ch->side, qi, ri + 1);
        const double delta = d0 + (d1 - d0) * w;
        const double p_win =
            win_prob(mp.win_curve(ch->tier), ch->k, delta);
        const bool win = d.u[2] < p_win;

        if (ch->tier == Tier::A) {
            ++st.a_requests;
            st.a_wins += win ? 1 : 0;
        } else {
            ++st.b_requests;
            st.b_wins += win ? 1 : 0;
        }
        if (win) {
            const double edge = z * (delta - mp.risk.theta[ch->k]);
            cash += edge;
            if (ch->tier == Tier::A) {
                st.cash_a += edge;
                st.traded_a += z;
            } else {
                st.traded_b += z;
            }
            q += ch->side == Side::Bid ? z : -z;
        }
        if (ch->tier == Tier::A && !cfg.freeze_score)
            r = ema_update(mp, r, win, ch->k);
    }

    points.push_back({T, q, r, cash, pen, st.a_wins, st.a_requests});
    st.terminal_q = q;
    st.terminal_r = r;
    st.cash = cash;
    st.penalty = pen;
    st.objective = cash - pen;
}

}  // namespace

SimResult simulate(const SimConfig& config, const ControlField& controls,
                   const ModelParams& params, int n_paths, bool parallel) {
    config.validate(controls.grid);
    if (n_paths < 1)
        throw std::invalid_argument("simulate: n_paths must be >= 1");
    if (controls.n_sizes != params.n_sizes())
        throw std::invalid_argument(
            "simulate: control field does not match the size ladder");

    std::vector<Channel> channels;
    double lam_b_tot = 0.0, lam_a_tot = 0.0, lam_maj = 0.0;
    for (std::size_t k = 0; k < params.n_sizes(); ++k) {
        for (Tier tier : {Tier::A, Tier::B}) {
            const double base = tier == Tier::A ? params.intensities.lambda_a[k]
                                                : params.intensities.lambda_b[k];
            if (base <= 0.0) continue;
            for (Side side : {Side::Bid, Side::Ask}) {
                channels.push_back({k, tier, side, base});
                if (tier == Tier::A) {
                    lam_a_tot += base;
                    lam_maj += params.gate.g_max * base;
                } else {
                    lam_b_tot += base;
                    lam_maj += base;
                }
            }
        }
    }

    SimResult res;
    res.config = config;
    res.n_paths = n_paths;
    res.paths.resize(n_paths);
    res.stats.resize(n_paths);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int p = 0; p < n_paths; ++p)
        run_path(config, controls, params, channels, lam_b_tot, lam_a_tot,
                 lam_maj, static_cast<std::uint64_t>(p), res.paths[p],
                 res.stats[p]);

    // aggregate in path order so the result is independent of scheduling
    long long wins = 0, reqs = 0;
    double int_q = 0.0, int_q2 = 0.0, cash_a = 0.0;
    double c1 = 0.0, c2 = 0.0, c3 = 0.0;  // compensated accumulators
    auto kahan = [](double& sum, double& comp, double x) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    };
    res.terminal_r.reserve(n_paths);
    for (const PathStats& st : res.stats) {
        wins += st.a_wins;
        reqs += st.a_requests;
        kahan(int_q, c1, st.int_q);
        kahan(int_q2, c2, st.int_q2);
        kahan(cash_a, c3, st.cash_a);
        res.terminal_r.push_back(st.terminal_r);
    }
    const double total_time = config.horizon * static_cast<double>(n_paths);
    res.winrate_a = reqs > 0 ? static_cast<double>(wins) /
                                   static_cast<double>(reqs)
                             : std::numeric_limits<double>::quiet_NaN();
    res.mean_q = int_q / total_time;
    const double eq2 = int_q2 / total_time;
    res.std_q = std::sqrt(std::max(0.0, eq2 - res.mean_q * res.mean_q));
    res.pnl_a_rate = cash_a / total_time;
    return res;
}

std::vector<OdeComparison> validate_against_ode(
    const ControlField& controls, const ModelParams& params,
    const std::vector<double>& r0_list, double horizon, int n_paths,
    std::uint64_t seed, bool parallel) {
    if (r0_list.empty())
        throw std::invalid_argument("validate_against_ode: empty start list");
    if (!(horizon > 0.0))
        throw std::invalid_argument("validate_against_ode: horizon must be > 0");
    if (n_paths < 2)
        throw std::invalid_argument(
            "validate_against_ode: need at least 2 paths for an error bar");

    double lam_a_tot = 0.0;
    for (double v : params.intensities.lambda_a) lam_a_tot += v;
    auto drift = [&](double r) {
        return params.score.alpha * 2.0 * gate(params.gate, r) * lam_a_tot *
               (tier_a_winrate(controls, params, r) - r);
    };

    std::vector<OdeComparison> out;
    for (std::size_t idx = 0; idx < r0_list.size(); ++idx) {
        const double r0 = r0_list[idx];
        const Trajectory traj =
            relax_trajectory(drift, params, r0, horizon, false);

        SimConfig sc;
        sc.horizon = horizon;
        sc.seed = seed + 0x9E3779B97F4A7C15ull * (idx + 1);
        sc.q0 = 0.0;
        sc.r0 = r0;
        sc.record_dt = horizon / 10.0;
        const SimResult sim = simulate(sc, controls, params, n_paths, parallel);

        OdeComparison cmp;
        cmp.r0 = r0;
        for (int j = 1; j <= 10; ++j) {
            OdeCheckRow row;
            row.t = sim.paths[0][j].t;

            // ODE value: linear interpolation on the integrator's own grid
            const auto it =
                std::lower_bound(traj.t.begin(), traj.t.end(), row.t);
            if (it == traj.t.begin()) {
                row.ode_r = traj.r.front();
            } else if (it == traj.t.end()) {
                row.ode_r = traj.r.back();
            } else {
                const std::size_t i = static_cast<std::size_t>(
                    std::distance(traj.t.begin(), it));
                const double t0 = traj.t[i - 1], t1 = traj.t[i];
                const double w = t1 > t0 ? (row.t - t0) / (t1 - t0) : 0.0;
                row.ode_r = traj.r[i - 1] + (traj.r[i] - traj.r[i - 1]) * w;
            }

            double m = 0.0;
            for (int p = 0; p < n_paths; ++p) m += sim.paths[p][j].r;
            m /= static_cast<double>(n_paths);
            double ss = 0.0;
            for (int p = 0; p < n_paths; ++p) {
                const double d = sim.paths[p][j].r - m;
                ss += d * d;
            }
            row.mc_mean = m;
            row.mc_stderr = std::sqrt(ss / static_cast<double>(n_paths - 1) /
                                      static_cast<double>(n_paths));

            const double dev = std::abs(row.mc_mean - row.ode_r);
            cmp.max_abs_dev = std::max(cmp.max_abs_dev, dev);
            cmp.max_dev_over_stderr =
                std::max(cmp.max_dev_over_stderr,
                         dev / std::max(row.mc_stderr, 1e-300));
            cmp.rows.push_back(row);
        }
        out.push_back(std::move(cmp));
    }
    return out;
}

TurnoverReport turnover_report(const SimResult& result) {
    if (!(result.config.horizon >= 1.0))
        throw std::invalid_argument(
            "turnover_report: horizon must cover at least one day");
    TurnoverReport rep;
    const double total_time =
        result.config.horizon * static_cast<double>(result.n_paths);
    double a = 0.0, b = 0.0;
    for (const PathStats& st : result.stats) {
        a += st.traded_a;
        b += st.traded_b;
    }
    rep.tier_a_per_day = a / total_time;
    rep.tier_b_per_day = b / total_time;
    rep.total_per_day = rep.tier_a_per_day + rep.tier_b_per_day;
    return rep;
}

}  // namespace rfqmm
