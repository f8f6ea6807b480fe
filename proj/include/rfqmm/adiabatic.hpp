#pragma once

// Two-scale analysis of the slow win-score dynamics.
//
// For small EMA weight alpha the score moves much slower than inventory.
// Freezing R, the fast inventory problem has a quasi-stationary quadratic
// value -A(R) q^2 / 2 whose curvature follows the Riccati-type scaling
//
//     A_inf(R) = sqrt(gamma sigma^2 / (2 xi(R))),
//     xi(R)    = sum_{z, tier} lambda_z^tier(R) k_z^tier z^2,
//
// with lambda the per-side channel intensities (tier A gated by G(R)) and
// k_z = H_z'' the quoting curvature.  Averaging the EMA updates over the
// tier-A request stream gives the slow drift
//
//     dR/dt = alpha * lambda_rfq(R) * (ybar(R) - R),
//     lambda_rfq(R) = 2 G(R) sum_z Lambda_z^A,
//
// where ybar is the intensity-weighted tier-A win rate at q = 0.  Fixed
// points of this one-dimensional flow are the long-run score regimes; a
// logistic-gate closure reduces the fixed-point condition to a scalar
// equation F(u) = 0 in the gate coordinate u, whose fold points bound the
// bistable (hysteresis) region in parameter space.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rfqmm/config.hpp"
#include "rfqmm/grid.hpp"
#include "rfqmm/hjb.hpp"
#include "rfqmm/params.hpp"

namespace rfqmm {

/// How the per-size curvatures k_z entering xi are evaluated.
enum class CurvatureMode {
    Frozen,          ///< k_z = H_z''(0): closure independent of the solve
    SelfConsistent,  ///< k_z = H_z''(x_{0,z}) at the q = 0 gaps of a solve
};

/// One score node of the quasi-stationary curvature scaling.
struct CurvatureRow {
    double r = 0.0;
    double xi = 0.0;     ///< intensity-weighted quoting curvature, M^2/(bp*M)/day
    double a_inf = 0.0;  ///< quasi-stationary inventory curvature, bp/M
    std::vector<double> k_a, k_b;  ///< per-size curvatures used, 1/(bp*M)
};

struct CurvatureProfile {
    std::vector<double> r_grid;
    std::vector<double> xi;
    std::vector<double> a_inf;
    std::vector<std::vector<double>> k_a, k_b;  ///< [node][size]
};

/// Evaluate the curvature scaling at one score.  SelfConsistent mode reads
/// the q = 0 continuation gaps off `vg` (required non-null then).
/// Throws std::domain_error when all intensities vanish at this score.
CurvatureRow ergodic_curvature(const ModelParams& mp, double r,
                               CurvatureMode mode = CurvatureMode::Frozen,
                               const ValueGrid* vg = nullptr);

CurvatureProfile curvature_profile(const ModelParams& mp,
                                   const std::vector<double>& r_grid,
                                   CurvatureMode mode = CurvatureMode::Frozen,
                                   const ValueGrid* vg = nullptr);

/// Least-squares quadratic fit -A q^2 / 2 + B of the value over |q| <=
/// q_fit_max at score r (interpolated); returns A.  Diagnostic counterpart
/// of CurvatureRow::a_inf.
double hjb_curvature_fit(const ValueGrid& vg, double r, double q_fit_max);

/// Intensity-weighted tier-A win rate at q = 0 (both sides averaged),
/// linearly interpolated in R.  Channels that cannot quote (size exceeds
/// the grid) are skipped; throws std::domain_error if no tier-A channel is
/// active.
double tier_a_winrate(const ControlField& controls, const ModelParams& mp,
                      double r);

enum class Stability { Stable, Unstable };

struct ScoreFixedPoint {
    double r = 0.0;
    Stability stability = Stability::Stable;
};

/// Slow-score drift sampled on a score grid.  `drift` carries the physical
/// rate alpha * lambda_rfq * (ybar - R) in 1/day; `drift_per_trade` the
/// per-request increment (ybar - R) / (1) before the alpha-rate prefactor,
/// which shares its roots and is often the quantity plotted.
struct DriftField {
    std::vector<double> r_grid;
    std::vector<double> ybar;
    std::vector<double> drift;
    std::vector<double> drift_per_trade;
    std::vector<ScoreFixedPoint> fixed_points;
};

/// Build the drift field from converged controls.  Fixed points are located
/// by a sign-change scan over 2001 nodes refined by bisection to 1e-6.
DriftField score_drift_from_hjb(const ControlField& controls,
                                const ModelParams& mp,
                                const std::vector<double>& r_grid);

/// Locate roots of a continuous scalar drift on [0,1]; shared by the HJB
/// and closure sources.
std::vector<ScoreFixedPoint> locate_fixed_points(
    const std::function<double(double)>& drift);

struct Trajectory {
    std::vector<double> t;  ///< day
    std::vector<double> r;
    bool converged = false; ///< settled within 1e-4 of a stable fixed point
};

/// Integrate dR/dt = drift(R) from r0 with fixed-step RK4
/// (dt = 0.01 / (alpha * lambda_rfq_max), halved on overshoot).  With
/// extend_to_settle, the horizon is extended up to 64x when the trajectory
/// has not settled; a trajectory that still has not settled is returned
/// with converged = false and a warning on stderr.  Without it, exactly
/// [0, horizon] is integrated and converged just reports whether the
/// trajectory happened to settle.
Trajectory relax_trajectory(const std::function<double(double)>& drift,
                            const ModelParams& mp, double r0, double horizon,
                            bool extend_to_settle = true);

/// Reduced-form closure of the tier-A win rate in the gate coordinate
/// u = (G - g_min) / (g_max - g_min):
///
///   ybar(R) ~ ybar_star + A_coef (xi_0^{-1/2} - xi(R)^{-1/2})
///             + alpha B_coef G'(R).
struct ClosureParams {
    double a_coef = 0.0;     ///< curvature-channel coefficient
    double b_coef = 0.0;     ///< promotion-wedge coefficient
    double ybar_star = 0.0;  ///< riskless baseline win rate, sum-weighted H'(0)
    double xi_a = 0.0;       ///< sum_z Lambda_z^A k_z z^2 (ungated, per side)
    double xi_b = 0.0;       ///< sum_z Lambda_z^B k_z z^2 (per side)
    double xi_0 = 0.0;       ///< xi at R = r0
    double rms_alpha0 = 0.0; ///< fit residual with the wedge inactive
    double rms_alpha = 0.0;  ///< fit residual at the target alpha
};

/// Scalar fixed-point function of the closure,
///   F(u) = ybar_star + A_coef (xi_0^{-1/2} - (xi_b + G(u) xi_a)^{-1/2})
///          + alpha B_coef dG beta u (1-u) - (r0 + log(u/(1-u)) / beta),
/// whose roots are the closure's score equilibria via R(u).
/// Throws std::domain_error for u outside (0,1).
double closure_drift(const ClosureParams& cp, const ModelParams& mp, double u);

/// Analytic dF/du of closure_drift; folds (hysteresis boundaries) satisfy
/// F = dF/du = 0.  Same domain as closure_drift.
double closure_drift_deriv(const ClosureParams& cp, const ModelParams& mp,
                           double u);

/// Map a gate coordinate back to a score.
double score_of_gate_coord(const GateParams& gp, double u);

/// Fit (A_coef, B_coef) of the closure by least squares against two ybar
/// sample sets on the same score nodes: one from an alpha = 0 solve (wedge
/// term off, isolates A_coef) and one at the model alpha (isolates B_coef
/// given A_coef).  ybar_star, xi_a, xi_b, xi_0 come from the frozen
/// curvature closure.  Throws std::invalid_argument on size mismatch or a
/// rank-deficient design (flat gate).
ClosureParams fit_closure(const std::vector<double>& r_samples,
                          const std::vector<double>& ybar_alpha0,
                          const std::vector<double>& ybar_alpha,
                          const ModelParams& mp);

enum class DriftSource { Hjb, Closure };

struct BifurcationPoint {
    double beta = 0.0;
    std::vector<ScoreFixedPoint> fixed_points;
    bool failed = false;  ///< solver did not converge at this scan value
};

struct BifurcationDiagram {
    std::vector<BifurcationPoint> points;
    /// (beta_low, beta_high) brackets where the fixed-point count changes.
    std::vector<std::pair<double, double>> folds;
};

/// Scan the gate steepness.  Source Hjb re-solves the stationary problem at
/// every beta (slow, authoritative); source Closure re-evaluates the fitted
/// closure along the score axis (fast).  Failed solves are flagged and
/// skipped in fold detection.
BifurcationDiagram bifurcation_scan(const SolverConfig& config,
                                    const std::vector<double>& betas,
                                    DriftSource source,
                                    const ClosureParams* closure = nullptr,
                                    bool parallel = true);

}  // namespace rfqmm
