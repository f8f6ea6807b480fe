#pragma once

// Reduced quoting Hamiltonian for one ladder size:
//
//     H(x) = sup_delta  p(delta) * ( z * (delta - theta) + x )
//
// where p is the logistic win curve of the (tier, size) slot, z the size,
// theta the latency slippage and x the continuation-value increment the
// dealer captures on a win (bp*M).
//
// For the logistic curve the problem is strictly concave in p-space, the
// maximizer is unique and interior, and the first-order condition
//
//     z * (delta - theta) + x = z / (kappa * (1 - p(delta)))
//
// has a strictly increasing residual in delta, which makes a safeguarded
// Newton iteration globally convergent.  Differentiating along the optimum:
//
//     H'(x)  = p(delta_hat(x))                  in (0,1), nondecreasing
//     H''(x) = kappa * p * (1-p)^2 / z          >= 0
//
// so H is convex and 1-Lipschitz, which the backward HJB sweep relies on.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rfqmm/params.hpp"

namespace rfqmm {

/// Solver failure with diagnostics attached to the message.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct HamiltonianSolution {
    double value = 0.0;        ///< H(x), bp*M
    double maximizer = 0.0;    ///< delta_hat(x), bp
    double deriv = 0.0;        ///< H'(x) = p(delta_hat), dimensionless
    double second_deriv = 0.0; ///< H''(x), 1/(bp*M)
    int iterations = 0;
};

/// Solve the quoting Hamiltonian for one (tier, size) slot at win increment x.
/// Throws NumericError if the bracket cannot be established or Newton stalls.
HamiltonianSolution solve_hamiltonian(const ModelParams& mp, Tier tier,
                                      std::size_t k, double x);

/// Envelope derivative H'(x) alone (same solve, cheaper to call by intent).
double hamiltonian_deriv(const ModelParams& mp, Tier tier, std::size_t k, double x);

/// Curvature H''(x) from implicit differentiation of the optimality condition.
double hamiltonian_curvature(const ModelParams& mp, Tier tier, std::size_t k, double x);

/// Precomputed H / H' / H'' / delta_hat on a uniform x grid for every
/// (tier, size) slot, evaluated with cubic Hermite interpolation.  The
/// Hermite form uses the exact node derivatives (H' at nodes for H, H'' at
/// nodes for H'), so interpolation error decays like dx^4.
///
/// Queries outside [x_min, x_max] are refused: extrapolating a tabulated
/// Hamiltonian silently corrupts a sweep, so it is treated as a caller bug.
class HamiltonianTable {
public:
    HamiltonianTable() = default;

    /// Tabulate both tiers of the given model over [x_min, x_max] with
    /// n_points >= 2 nodes per slot.
    static HamiltonianTable build(const ModelParams& mp, double x_min,
                                  double x_max, std::size_t n_points);

    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    std::size_t points() const { return n_; }

    double value(Tier tier, std::size_t k, double x) const;
    double deriv(Tier tier, std::size_t k, double x) const;
    double maximizer(const ModelParams& mp, Tier tier, std::size_t k, double x) const;

    /// Raw node accessors (test support).
    const std::vector<double>& node_values(Tier tier, std::size_t k) const;
    const std::vector<double>& node_derivs(Tier tier, std::size_t k) const;

private:
    struct Slot {
        std::vector<double> h, hp, hpp, delta;
    };

    const Slot& slot(Tier tier, std::size_t k) const;
    void locate(double x, std::size_t& i, double& t) const;

    double x_min_ = 0.0, x_max_ = 0.0, dx_ = 0.0;
    std::size_t n_ = 0, n_sizes_ = 0;
    std::vector<Slot> slots_;  // index = tier_index * n_sizes + k
};

/// Width of the x range that a backward sweep over the given inventory grid
/// can request, with safety margin.  Driven by the terminal curvature eta,
/// the quasi-stationary curvature scale, and headroom for score-direction
/// value differences.
double suggested_x_bound(const ModelParams& mp, double q_max);

}  // namespace rfqmm
