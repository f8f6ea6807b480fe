#pragma once

// State-space discretization shared by the backward solver, control
// extraction and downstream analysis.
//
// Inventory q lives on the symmetric uniform grid {-q_max, ..., q_max} with
// spacing q_step chosen so every ladder size is an integer multiple: a won
// trade then lands exactly on a grid node and no inventory interpolation is
// ever needed.  The win score R lives on a uniform grid over [0,1]; the EMA
// images R+ / R- fall off-grid and are linearly interpolated.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfqmm/params.hpp"

namespace rfqmm {

struct GridSpec {
    double q_max = 50.0;   ///< M
    double q_step = 1.0;   ///< M
    int n_r = 101;         ///< score nodes over [0,1]
    double t_block = 0.05; ///< block horizon, day
    int n_t = 10000;       ///< backward Euler steps per block

    int n_q() const {
        return 2 * static_cast<int>(std::lround(q_max / q_step)) + 1;
    }
    double dt() const { return t_block / static_cast<double>(n_t); }

    double q_value(int qi) const {
        return (static_cast<double>(qi) - static_cast<double>((n_q() - 1) / 2)) * q_step;
    }
    double r_value(int ri) const {
        return static_cast<double>(ri) / static_cast<double>(n_r - 1);
    }
    int q_index_of_zero() const { return (n_q() - 1) / 2; }

    void validate(const ModelParams& mp) const {
        if (!(q_step > 0.0))
            throw std::invalid_argument("grid.q_step: must be > 0");
        const double ratio = q_max / q_step;
        if (!(q_max > 0.0) || std::abs(ratio - std::lround(ratio)) > 1e-9)
            throw std::invalid_argument(
                "grid.q_max: must be a positive integer multiple of q_step");
        for (std::size_t k = 0; k < mp.n_sizes(); ++k) {
            const double m = mp.ladder.sizes[k] / q_step;
            if (std::abs(m - std::lround(m)) > 1e-9)
                throw std::invalid_argument(
                    "grid.q_step: ladder size " + std::to_string(mp.ladder.sizes[k]) +
                    " is not an integer multiple of q_step");
        }
        if (n_r < 2) throw std::invalid_argument("grid.n_r: must be >= 2");
        if (n_t < 1) throw std::invalid_argument("grid.n_t: must be >= 1");
        if (!(t_block > 0.0))
            throw std::invalid_argument("grid.t_block: must be > 0");

        // Explicit Euler monotonicity: the per-step coupling from all
        // request channels must stay well below 1.  Factor 2 covers the
        // worst-case sensitivity of a single quoting operator.
        double total = 0.0;
        for (std::size_t k = 0; k < mp.n_sizes(); ++k)
            total += 2.0 * (mp.intensities.lambda_b[k] +
                            mp.gate.g_max * mp.intensities.lambda_a[k]);
        const double cfl = dt() * 2.0 * total;
        if (!(cfl < 0.5))
            throw std::invalid_argument(
                "grid: explicit step unstable, dt * 2 * total_intensity = " +
                std::to_string(cfl) + " (must be < 0.5); increase n_t");
    }
};

/// Value surface at one time level plus the score-boundary profile it was
/// solved against.  Layout: cell (qi, ri) -> index qi * n_r + ri, so the
/// score direction is contiguous.
struct ValueGrid {
    GridSpec grid;
    std::vector<double> v;    ///< n_q * n_r values, bp*M
    std::vector<double> phi;  ///< n_r boundary profile, bp*M

    double at(int qi, int ri) const {
        return v[static_cast<std::size_t>(qi) * grid.n_r + ri];
    }
};

/// Optimal quotes at t = 0 of a converged block, one surface per
/// (size, tier, side).  Grid cells whose fill would push |q| past q_max hold
/// NaN: the dealer does not quote that slot there.
struct ControlField {
    GridSpec grid;
    std::size_t n_sizes = 0;
    std::vector<double> y;      ///< win rate at the optimum
    std::vector<double> delta;  ///< offset, bp

    static std::size_t surface_index(std::size_t k, Tier tier, Side side) {
        return (k * 2 + static_cast<std::size_t>(tier)) * 2 +
               static_cast<std::size_t>(side);
    }

    std::size_t cell_count() const {
        return static_cast<std::size_t>(grid.n_q()) * grid.n_r;
    }

    double& y_at(std::size_t k, Tier tier, Side side, int qi, int ri) {
        return y[surface_index(k, tier, side) * cell_count() +
                 static_cast<std::size_t>(qi) * grid.n_r + ri];
    }
    double y_at(std::size_t k, Tier tier, Side side, int qi, int ri) const {
        return y[surface_index(k, tier, side) * cell_count() +
                 static_cast<std::size_t>(qi) * grid.n_r + ri];
    }
    double& delta_at(std::size_t k, Tier tier, Side side, int qi, int ri) {
        return delta[surface_index(k, tier, side) * cell_count() +
                     static_cast<std::size_t>(qi) * grid.n_r + ri];
    }
    double delta_at(std::size_t k, Tier tier, Side side, int qi, int ri) const {
        return delta[surface_index(k, tier, side) * cell_count() +
                     static_cast<std::size_t>(qi) * grid.n_r + ri];
    }
    bool present(std::size_t k, Tier tier, Side side, int qi, int ri) const {
        return !std::isnan(y_at(k, tier, side, qi, ri));
    }

    void allocate() {
        y.assign(4 * n_sizes * cell_count(),
                 std::numeric_limits<double>::quiet_NaN());
        delta.assign(4 * n_sizes * cell_count(),
                     std::numeric_limits<double>::quiet_NaN());
    }
};

/// Piecewise-linear read of a per-score-node profile at arbitrary r in [0,1].
inline double interp_r(const GridSpec& g, const std::vector<double>& profile,
                       double r) {
    const double rc = std::min(1.0, std::max(0.0, r));
    const double pos = rc * static_cast<double>(g.n_r - 1);
    int i = static_cast<int>(pos);
    if (i >= g.n_r - 1) i = g.n_r - 2;
    const double t = pos - static_cast<double>(i);
    return profile[i] * (1.0 - t) + profile[i + 1] * t;
}

}  // namespace rfqmm
