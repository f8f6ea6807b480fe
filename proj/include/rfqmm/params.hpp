#pragma once

// Market model primitives for a two-tier RFQ dealer with a win-score
// promotion gate.
//
// Units used throughout the library:
//   prices/offsets  bp   (basis points relative to the reference mid)
//   sizes           M    (millions of notional)
//   time            day
//   intensities     1/day
//   value           bp*M
//
// Tier A is the aggregator tier: request flow is throttled by the gate
// G(R) and every quoted request updates the dealer's win score R.
// Tier B is background flow: always-on, no score impact.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfqmm {

enum class Tier { A = 0, B = 1 };
enum class Side { Bid = 0, Ask = 1 };

inline const char* to_string(Tier t) { return t == Tier::A ? "A" : "B"; }
inline const char* to_string(Side s) { return s == Side::Bid ? "bid" : "ask"; }

/// Quoted size ladder, ascending, in M.
struct SizeLadder {
    std::vector<double> sizes;

    std::size_t count() const { return sizes.size(); }

    void validate() const {
        if (sizes.empty())
            throw std::invalid_argument("ladder.sizes: must not be empty");
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            if (!(sizes[k] > 0.0))
                throw std::invalid_argument("ladder.sizes[" + std::to_string(k) +
                                            "]: must be > 0");
            if (k > 0 && !(sizes[k] > sizes[k - 1]))
                throw std::invalid_argument("ladder.sizes: must be strictly ascending");
        }
    }
};

/// Per-side request intensities for both tiers, one entry per ladder size.
/// Tier-A entries are the un-gated base rates; the effective tier-A rate is
/// G(R) * lambda_a[k] per side.
struct TierIntensities {
    std::vector<double> lambda_a;
    std::vector<double> lambda_b;

    void validate(std::size_t n_sizes) const {
        if (lambda_a.size() != n_sizes)
            throw std::invalid_argument("intensities.lambda_a: expected " +
                                        std::to_string(n_sizes) + " entries");
        if (lambda_b.size() != n_sizes)
            throw std::invalid_argument("intensities.lambda_b: expected " +
                                        std::to_string(n_sizes) + " entries");
        bool any_a = false;
        for (double v : lambda_a) {
            if (!(v >= 0.0))
                throw std::invalid_argument("intensities.lambda_a: entries must be >= 0");
            any_a = any_a || v > 0.0;
        }
        for (double v : lambda_b)
            if (!(v >= 0.0))
                throw std::invalid_argument("intensities.lambda_b: entries must be >= 0");
        if (!any_a)
            throw std::invalid_argument(
                "intensities.lambda_a: at least one entry must be > 0 "
                "(the win score never updates otherwise)");
    }
};

/// Logistic win curves, one (kappa, delta_bar) pair per ladder size.
/// kappa in 1/bp controls steepness, delta_bar in bp is the 50% offset.
struct WinCurveParams {
    std::vector<double> kappa;
    std::vector<double> delta_bar;

    void validate(std::size_t n_sizes, const std::string& prefix) const {
        if (kappa.size() != n_sizes)
            throw std::invalid_argument(prefix + ".kappa: expected " +
                                        std::to_string(n_sizes) + " entries");
        if (delta_bar.size() != n_sizes)
            throw std::invalid_argument(prefix + ".delta_bar: expected " +
                                        std::to_string(n_sizes) + " entries");
        for (double v : kappa)
            if (!(v > 0.0))
                throw std::invalid_argument(prefix + ".kappa: entries must be > 0");
    }
};

/// Promotion gate G(R) = g_min + (g_max - g_min) / (1 + exp(-beta (R - r0))).
struct GateParams {
    double g_min = 0.2;
    double g_max = 1.0;
    double r0 = 0.6;
    double beta = 40.0;

    void validate() const {
        if (!(g_min > 0.0))
            throw std::invalid_argument("gate.g_min: must be > 0");
        if (!(g_max <= 1.0) || !(g_max >= g_min))
            throw std::invalid_argument("gate.g_max: must satisfy g_min <= g_max <= 1");
        if (!(r0 > 0.0 && r0 < 1.0))
            throw std::invalid_argument("gate.r0: must lie in (0,1)");
        if (!(beta >= 0.0))
            throw std::invalid_argument("gate.beta: must be >= 0");
    }
};

/// Win-score EMA update weight.  With size_weighted the win indicator is
/// scaled by z_k / z_max instead of being 0/1.
struct ScoreParams {
    double alpha = 0.01;
    bool size_weighted = false;

    void validate() const {
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw std::invalid_argument("score.alpha: must lie in [0,1)");
    }
};

/// Risk and cost parameters: mid volatility sigma (bp/sqrt(day)), running
/// inventory penalty gamma (1/(bp*M)), terminal inventory weight eta (bp/M),
/// per-size latency slippage theta (bp), block discount rate rho (1/day).
struct RiskParams {
    double sigma = 100.0;
    double gamma = 1e-3;
    double eta = 1.0;
    std::vector<double> theta;
    double rho = 1.0;

    void validate(std::size_t n_sizes) const {
        if (!(sigma >= 0.0))
            throw std::invalid_argument("risk.sigma: must be >= 0");
        if (!(gamma >= 0.0))
            throw std::invalid_argument("risk.gamma: must be >= 0");
        if (!(eta >= 0.0))
            throw std::invalid_argument("risk.eta: must be >= 0");
        if (theta.size() != n_sizes)
            throw std::invalid_argument("risk.theta: expected " +
                                        std::to_string(n_sizes) + " entries");
        if (!(rho > 0.0))
            throw std::invalid_argument("risk.rho: must be > 0");
    }
};

struct ModelParams {
    SizeLadder ladder;
    TierIntensities intensities;
    WinCurveParams win_a;
    WinCurveParams win_b;
    GateParams gate;
    ScoreParams score;
    RiskParams risk;

    std::size_t n_sizes() const { return ladder.count(); }

    const WinCurveParams& win_curve(Tier t) const {
        return t == Tier::A ? win_a : win_b;
    }

    void validate() const {
        ladder.validate();
        const std::size_t n = ladder.count();
        intensities.validate(n);
        win_a.validate(n, "win_a");
        win_b.validate(n, "win_b");
        gate.validate();
        score.validate();
        risk.validate(n);
    }
};

namespace detail {
/// Overflow-stable logistic 1/(1+e^t).
inline double logistic_of_neg(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}
}  // namespace detail

/// Win probability for size index k at offset delta (bp):
/// p = 1 / (1 + exp(kappa_k (delta - delta_bar_k))).  Strictly decreasing.
inline double win_prob(const WinCurveParams& wc, std::size_t k, double delta) {
    return detail::logistic_of_neg(wc.kappa[k] * (delta - wc.delta_bar[k]));
}

/// Inverse of win_prob on y in (0,1):
/// delta = delta_bar_k + log((1-y)/y) / kappa_k.
inline double win_prob_inverse(const WinCurveParams& wc, std::size_t k, double y) {
    if (!(y > 0.0 && y < 1.0))
        throw std::domain_error("win_prob_inverse: y must lie in (0,1), got " +
                                std::to_string(y));
    return wc.delta_bar[k] + std::log((1.0 - y) / y) / wc.kappa[k];
}

/// Gate throttle G(R) in [g_min, g_max].
inline double gate(const GateParams& gp, double r) {
    const double u = detail::logistic_of_neg(-gp.beta * (r - gp.r0));
    return gp.g_min + (gp.g_max - gp.g_min) * u;
}

/// dG/dR = beta (g_max - g_min) u (1 - u).
inline double gate_deriv(const GateParams& gp, double r) {
    const double u = detail::logistic_of_neg(-gp.beta * (r - gp.r0));
    return gp.beta * (gp.g_max - gp.g_min) * u * (1.0 - u);
}

/// EMA score update after a tier-A request: R <- (1-alpha) R + alpha w.
/// w = 1 on a win (scaled by size_ratio = z_k / z_max when size-weighted),
/// w = 0 on a loss.  Maps [0,1] into itself.
inline double ema_update(const ScoreParams& sp, double r, bool win,
                         double size_ratio = 1.0) {
    const double w = win ? (sp.size_weighted ? size_ratio : 1.0) : 0.0;
    return (1.0 - sp.alpha) * r + sp.alpha * w;
}

/// Convenience overload resolving the size ratio from the ladder.
inline double ema_update(const ModelParams& mp, double r, bool win, std::size_t k) {
    const double ratio = mp.ladder.sizes[k] / mp.ladder.sizes.back();
    return ema_update(mp.score, r, win, ratio);
}

}  // namespace rfqmm
