#pragma once

// Backward solver for the reduced dealer value v(t, q, R) over one block
// [0, T], and the block-stationary fixed point on the score profile
// Phi(R) = v(0, 0, R).
//
// One explicit Euler step evaluates, per cell, every request channel
// (size k, tier, side):
//
//   tier A:  lose branch  L = v(q, R-) - v(q, R)       (score markdown)
//            win increment D = v(q +/- z, R+) - v(q, R)
//            contribution  L + H_k^A(D - L)
//   tier B:  contribution  H_k^B(v(q +/- z, R) - v(q, R))
//
// weighted by G(R) * lambda_a[k] resp. lambda_b[k], minus the running
// inventory penalty (gamma/2) sigma^2 q^2.  Fills that would push |q| past
// q_max are not quoted: such a tier-A channel degenerates to its lose
// branch, a tier-B channel to zero.
//
// Each cell of the next time level depends only on the immutable previous
// level, so the sweep is a data-parallel map: the OpenMP and serial paths
// produce bitwise identical results.
//
// The block terminal condition is v(T, q, R) = -(eta/2) q^2 +
// exp(-rho T) Phi(R); stationarity in Phi is reached by damped fixed-point
// iteration with optional Anderson acceleration, optionally warm-started
// from the geometric series of the pure-discount map after the first pass.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "rfqmm/config.hpp"
#include "rfqmm/grid.hpp"
#include "rfqmm/hamiltonian.hpp"
#include "rfqmm/params.hpp"

namespace rfqmm {

struct FixedPointReport {
    int iterations = 0;              ///< block solves in the iteration loop
    bool converged = false;
    std::vector<double> residuals;   ///< sup-norm Phi increments per iteration
    double final_residual = 0.0;     ///< sup-norm of g(Phi*) - Phi* at exit
    int anderson_m = 0;
    double zeta = 0.0;
    int anderson_fallbacks = 0;      ///< singular-system plain steps taken
};

struct StationaryResult {
    ValueGrid value;        ///< converged block at t = 0
    ControlField controls;  ///< optimal quotes read off the same level
    FixedPointReport report;
};

class BlockSolver {
public:
    BlockSolver(const ModelParams& mp, const GridSpec& grid);

    const ModelParams& model() const { return model_; }
    const GridSpec& grid() const { return grid_; }
    const HamiltonianTable& table() const { return table_; }

    /// One backward Euler step: v_out may not alias v_in.  `parallel`
    /// selects the OpenMP kernel; the serial path is the reference
    /// implementation and must match it bitwise.
    void step_backward(const std::vector<double>& v_in, std::vector<double>& v_out,
                       bool parallel) const;

    /// Sweep a full block from the terminal condition down to t = 0.
    ValueGrid solve_block(const std::vector<double>& phi, bool parallel = true) const;

    /// Read optimal (y, delta) per channel off a value level via exact
    /// per-cell Hamiltonian solves, using the same score interpolation as
    /// the sweep.
    ControlField extract_controls(const ValueGrid& vg) const;

private:
    void check_finite(const std::vector<double>& v, int step) const;

    ModelParams model_;
    GridSpec grid_;
    HamiltonianTable table_;

    // Precomputed per score node: gate factor and EMA-image interpolation.
    std::vector<double> gate_lambda_a_;  // [k * n_r + ri] = G(R_ri) * lambda_a[k]
    std::vector<int> up_idx_, dn_idx_;   // lower node of R+ / R- images
    std::vector<double> up_w_, dn_w_;    // weight of the upper node
    std::vector<int> q_jump_;            // ladder size in grid steps

    // Cubic coefficients per table interval for fast H evaluation,
    // one slot per (tier, size).
    struct Cubic {
        std::vector<double> c;  // 4 per interval
    };
    std::vector<Cubic> cubics_;
    double tab_x0_ = 0.0, tab_inv_dx_ = 0.0;
    std::size_t tab_intervals_ = 0;
};

/// Damped / Anderson-accelerated stationary solve.  Throws NumericError if
/// max_iter is exhausted before the sup-norm increment drops below tol.
StationaryResult stationary_solve(const SolverConfig& config, bool parallel = true);

/// Expected tier-A edge capture rate (bp*M/day) at one grid cell, from the
/// stored controls: G(R) sum_k lambda_a[k] sum_side y z (delta - theta).
double instant_pnl_A(const ControlField& controls, const ModelParams& mp, int qi,
                     int ri);

/// Full (q, R) field of instant_pnl_A, cell-major like ValueGrid::v.
std::vector<double> instant_pnl_A_field(const ControlField& controls,
                                        const ModelParams& mp);

}  // namespace rfqmm
