#include "rfqmm/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rfqmm {

namespace {

struct Curve {
    double kappa, delta_bar, theta, z;
};

inline Curve curve_of(const ModelParams& mp, Tier tier, std::size_t k) {
    const WinCurveParams& wc = mp.win_curve(tier);
    return {wc.kappa[k], wc.delta_bar[k], mp.risk.theta[k], mp.ladder.sizes[k]};
}

inline double logistic_p(const Curve& c, double delta) {
    return detail::logistic_of_neg(c.kappa * (delta - c.delta_bar));
}

/// FOC residual psi(delta) = z (delta - theta) + x - z / (kappa (1 - p));
/// strictly increasing with psi' = z / (1 - p) > 0 and a single root.
inline double foc_residual(const Curve& c, double x, double delta, double p) {
    return c.z * (delta - c.theta) + x - c.z / (c.kappa * (1.0 - p));
}

[[noreturn]] void fail(const Curve& c, double x, const char* what) {
    std::ostringstream os;
    os << "solve_hamiltonian: " << what << " (z=" << c.z << ", kappa=" << c.kappa
       << ", delta_bar=" << c.delta_bar << ", x=" << x << ")";
    throw NumericError(os.str());
}

HamiltonianSolution solve_curve(const Curve& c, double x) {
    if (!std::isfinite(x)) fail(c, x, "non-finite win increment");

    // Establish a sign-changing bracket around delta_bar, widening if the
    // root has been pushed far out by a large |x|.
    double half = 10.0 / c.kappa;
    double lo = c.delta_bar - half, hi = c.delta_bar + half;
    double flo = foc_residual(c, x, lo, logistic_p(c, lo));
    double fhi = foc_residual(c, x, hi, logistic_p(c, hi));
    int widen = 0;
    while (flo > 0.0 || fhi < 0.0) {
        if (++widen > 80) fail(c, x, "bracket widening failed");
        half *= 2.0;
        lo = c.delta_bar - half;
        hi = c.delta_bar + half;
        flo = foc_residual(c, x, lo, logistic_p(c, lo));
        fhi = foc_residual(c, x, hi, logistic_p(c, hi));
    }

    double delta = 0.5 * (lo + hi);
    double p = logistic_p(c, delta);
    int it = 0;
    for (; it < 200; ++it) {
        const double f = foc_residual(c, x, delta, p);
        if (f > 0.0) hi = delta; else lo = delta;
        // Newton step using psi' = z / (1 - p); bisect when it leaves the
        // bracket (safeguard keeps global convergence).
        double step = -f * (1.0 - p) / c.z;
        double next = delta + step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double move = std::abs(next - delta);
        delta = next;
        p = logistic_p(c, delta);
        if (move < 1e-14 * std::max(1.0, std::abs(delta)) ||
            std::abs(foc_residual(c, x, delta, p)) <
                1e-12 * std::max({1.0, std::abs(x), c.z}))
            break;
    }
    if (it >= 200) fail(c, x, "Newton iteration stalled");

    HamiltonianSolution s;
    s.maximizer = delta;
    s.deriv = p;
    s.value = p * (c.z * (delta - c.theta) + x);
    s.second_deriv = c.kappa * p * (1.0 - p) * (1.0 - p) / c.z;
    s.iterations = it + 1;
    return s;
}

}  // namespace

HamiltonianSolution solve_hamiltonian(const ModelParams& mp, Tier tier,
                                      std::size_t k, double x) {
    return solve_curve(curve_of(mp, tier, k), x);
}

double hamiltonian_deriv(const ModelParams& mp, Tier tier, std::size_t k, double x) {
    return solve_hamiltonian(mp, tier, k, x).deriv;
}

double hamiltonian_curvature(const ModelParams& mp, Tier tier, std::size_t k,
                             double x) {
    return solve_hamiltonian(mp, tier, k, x).second_deriv;
}

HamiltonianTable HamiltonianTable::build(const ModelParams& mp, double x_min,
                                         double x_max, std::size_t n_points) {
    if (!(x_max > x_min))
        throw std::invalid_argument("HamiltonianTable: x_max must exceed x_min");
    if (n_points < 2)
        throw std::invalid_argument("HamiltonianTable: need at least 2 points");

    HamiltonianTable t;
    t.x_min_ = x_min;
    t.x_max_ = x_max;
    t.n_ = n_points;
    t.n_sizes_ = mp.n_sizes();
    t.dx_ = (x_max - x_min) / static_cast<double>(n_points - 1);
    t.slots_.resize(2 * t.n_sizes_);

    for (int ti = 0; ti < 2; ++ti) {
        for (std::size_t k = 0; k < t.n_sizes_; ++k) {
            const Curve c = curve_of(mp, ti == 0 ? Tier::A : Tier::B, k);
            Slot& s = t.slots_[static_cast<std::size_t>(ti) * t.n_sizes_ + k];
            s.h.resize(n_points);
            s.hp.resize(n_points);
            s.hpp.resize(n_points);
            s.delta.resize(n_points);
            for (std::size_t i = 0; i < n_points; ++i) {
                const double x = x_min + t.dx_ * static_cast<double>(i);
                const HamiltonianSolution sol = solve_curve(c, x);
                s.h[i] = sol.value;
                s.hp[i] = sol.deriv;
                s.hpp[i] = sol.second_deriv;
                s.delta[i] = sol.maximizer;
            }
        }
    }
    return t;
}

const HamiltonianTable::Slot& HamiltonianTable::slot(Tier tier, std::size_t k) const {
    return slots_[static_cast<std::size_t>(tier) * n_sizes_ + k];
}

void HamiltonianTable::locate(double x, std::size_t& i, double& t) const {
    if (!(x >= x_min_ && x <= x_max_)) {
        std::ostringstream os;
        os << "HamiltonianTable: query x=" << x << " outside tabulated range ["
           << x_min_ << ", " << x_max_ << "]; extrapolation is not supported";
        throw std::domain_error(os.str());
    }
    double pos = (x - x_min_) / dx_;
    std::size_t idx = static_cast<std::size_t>(pos);
    if (idx >= n_ - 1) idx = n_ - 2;
    i = idx;
    t = pos - static_cast<double>(idx);
}

namespace {
/// Cubic Hermite on [0,1] with node values (f0,f1) and node slopes scaled by
/// the step (g0 = dx f'0, g1 = dx f'1).
inline double hermite(double f0, double f1, double g0, double g1, double t) {
    const double t2 = t * t, t3 = t2 * t;
    return f0 * (2.0 * t3 - 3.0 * t2 + 1.0) + f1 * (3.0 * t2 - 2.0 * t3) +
           g0 * (t3 - 2.0 * t2 + t) + g1 * (t3 - t2);
}
}  // namespace

double HamiltonianTable::value(Tier tier, std::size_t k, double x) const {
    std::size_t i;
    double t;
    locate(x, i, t);
    const Slot& s = slot(tier, k);
    return hermite(s.h[i], s.h[i + 1], dx_ * s.hp[i], dx_ * s.hp[i + 1], t);
}

double HamiltonianTable::deriv(Tier tier, std::size_t k, double x) const {
    std::size_t i;
    double t;
    locate(x, i, t);
    const Slot& s = slot(tier, k);
    return hermite(s.hp[i], s.hp[i + 1], dx_ * s.hpp[i], dx_ * s.hpp[i + 1], t);
}

double HamiltonianTable::maximizer(const ModelParams& mp, Tier tier, std::size_t k,
                                   double x) const {
    // delta_hat = p^{-1}(H') keeps the control consistent with the
    // interpolated win rate by construction.
    const double y = deriv(tier, k, x);
    return win_prob_inverse(mp.win_curve(tier), k, y);
}

const std::vector<double>& HamiltonianTable::node_values(Tier tier,
                                                         std::size_t k) const {
    return slot(tier, k).h;
}

const std::vector<double>& HamiltonianTable::node_derivs(Tier tier,
                                                         std::size_t k) const {
    return slot(tier, k).hp;
}

double suggested_x_bound(const ModelParams& mp, double q_max) {
    const double z_max = mp.ladder.sizes.back();
    // Worst-case value difference across one inventory jump under the
    // steeper of the terminal curvature and (a multiple of) the
    // quasi-stationary curvature, plus headroom for score-direction terms.
    double xi = 0.0;
    for (std::size_t k = 0; k < mp.n_sizes(); ++k) {
        const double z = mp.ladder.sizes[k];
        const double ka = hamiltonian_curvature(mp, Tier::A, k, 0.0);
        const double kb = hamiltonian_curvature(mp, Tier::B, k, 0.0);
        xi += mp.gate.g_max * mp.intensities.lambda_a[k] * ka * z * z;
        xi += mp.intensities.lambda_b[k] * kb * z * z;
    }
    double a_stat = 0.0;
    if (xi > 0.0 && mp.risk.gamma > 0.0)
        a_stat = std::sqrt(mp.risk.gamma * mp.risk.sigma * mp.risk.sigma / (2.0 * xi));
    const double curv = std::max(mp.risk.eta, 3.0 * a_stat);
    return 1.25 * curv * z_max * (q_max + z_max) + 100.0;
}

}  // namespace rfqmm
