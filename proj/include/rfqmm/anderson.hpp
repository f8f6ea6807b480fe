#pragma once

// Anderson acceleration for fixed-point iterations x = g(x).
//
// Given the last few (iterate, residual) pairs with residual r = g(x) - x,
// the next iterate is the residual-minimizing affine combination
//
//     x_next = sum_i c_i (x_i + r_i),   sum_i c_i = 1,
//
// where c minimizes || sum_i c_i r_i ||^2 + ridge ||c||^2.  The ridge acts
// relative to the mean squared residual magnitude so that the regularization
// stays proportionate as the residuals shrink; with a single history entry
// the update reduces to the plain step g(x).  The small regularized normal
// system keeps the combination well conditioned when residuals become
// nearly collinear close to convergence.

#include <cstddef>
#include <vector>

namespace rfqmm {

struct AndersonPair {
    std::vector<double> iterate;
    std::vector<double> residual;
};

struct AndersonStep {
    std::vector<double> next;
    std::vector<double> coefficients;  ///< aligned with the trailing window
    bool fallback = false;             ///< singular system, plain step taken
};

/// Compute the accelerated iterate from the trailing min(m, history.size())
/// pairs.  All vectors must share one dimension; m >= 1.
AndersonStep anderson_update(const std::vector<AndersonPair>& history,
                             std::size_t m, double ridge);

}  // namespace rfqmm
