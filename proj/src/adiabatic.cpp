#include "rfqmm/adiabatic.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

#include "rfqmm/hamiltonian.hpp"

namespace rfqmm {

namespace {

// Linear interpolation of a value row (fixed qi) along the score axis.
double value_at(const ValueGrid& vg, int qi, double r) {
    const int nr = vg.grid.n_r;
    const double rc = std::min(1.0, std::max(0.0, r));
    const double pos = rc * static_cast<double>(nr - 1);
    int i = static_cast<int>(pos);
    if (i >= nr - 1) i = nr - 2;
    const double w = pos - static_cast<double>(i);
    const double* row = vg.v.data() + static_cast<std::size_t>(qi) * nr;
    return row[i] + (row[i + 1] - row[i]) * w;
}

double lambda_a_total(const ModelParams& mp) {
    double s = 0.0;
    for (double v : mp.intensities.lambda_a) s += v;
    return s;
}

}  // namespace

CurvatureRow ergodic_curvature(const ModelParams& mp, double r, CurvatureMode mode,
                               const ValueGrid* vg) {
    if (!(r >= 0.0 && r <= 1.0))
        throw std::invalid_argument("ergodic_curvature: R must lie in [0,1]");
    if (mode == CurvatureMode::SelfConsistent && vg == nullptr)
        throw std::invalid_argument(
            "ergodic_curvature: self-consistent mode needs a value grid");

    const std::size_t K = mp.n_sizes();
    CurvatureRow row;
    row.r = r;
    row.k_a.resize(K);
    row.k_b.resize(K);

    const double g = gate(mp.gate, r);
    const double alpha = mp.score.alpha;

    for (std::size_t k = 0; k < K; ++k) {
        double xa = 0.0, xb = 0.0;
        if (mode == CurvatureMode::SelfConsistent) {
            const GridSpec& gr = vg->grid;
            const int qi0 = gr.q_index_of_zero();
            const int dq = static_cast<int>(std::lround(mp.ladder.sizes[k] / gr.q_step));
            if (qi0 + dq < gr.n_q()) {
                // q = 0 continuation gaps of the solve (bid == ask there).
                xb = value_at(*vg, qi0 + dq, r) - value_at(*vg, qi0, r);
                xa = value_at(*vg, qi0 + dq, (1.0 - alpha) * r + alpha) -
                     value_at(*vg, qi0, (1.0 - alpha) * r);
            }
        }
        row.k_a[k] = hamiltonian_curvature(mp, Tier::A, k, xa);
        row.k_b[k] = hamiltonian_curvature(mp, Tier::B, k, xb);
    }

    double xi = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double z2 = mp.ladder.sizes[k] * mp.ladder.sizes[k];
        xi += g * mp.intensities.lambda_a[k] * row.k_a[k] * z2;
        xi += mp.intensities.lambda_b[k] * row.k_b[k] * z2;
    }
    if (!(xi > 0.0))
        throw std::domain_error("ergodic_curvature: curvature undefined without flow");
    row.xi = xi;
    row.a_inf = std::sqrt(mp.risk.gamma * mp.risk.sigma * mp.risk.sigma / (2.0 * xi));
    return row;
}

CurvatureProfile curvature_profile(const ModelParams& mp,
                                   const std::vector<double>& r_grid,
                                   CurvatureMode mode, const ValueGrid* vg) {
    CurvatureProfile out;
    out.r_grid = r_grid;
    out.xi.reserve(r_grid.size());
    out.a_inf.reserve(r_grid.size());
    for (double r : r_grid) {
        CurvatureRow row = ergodic_curvature(mp, r, mode, vg);
        out.xi.push_back(row.xi);
        out.a_inf.push_back(row.a_inf);
        out.k_a.push_back(std::move(row.k_a));
        out.k_b.push_back(std::move(row.k_b));
    }
    return out;
}

double hjb_curvature_fit(const ValueGrid& vg, double r, double q_fit_max) {
    const GridSpec& g = vg.grid;
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    int used = 0;
    for (int qi = 0; qi < g.n_q(); ++qi) {
        const double q = g.q_value(qi);
        if (std::abs(q) > q_fit_max + 1e-12) continue;
        const double v = value_at(vg, qi, r);
        const Eigen::Vector3d x(1.0, q, q * q);
        ata += x * x.transpose();
        atb += x * v;
        ++used;
    }
    if (used < 3)
        throw std::invalid_argument("hjb_curvature_fit: need at least 3 nodes in range");
    const Eigen::Vector3d c = ata.ldlt().solve(atb);
    return -2.0 * c(2);
}

double tier_a_winrate(const ControlField& controls, const ModelParams& mp,
                      double r) {
    const GridSpec& g = controls.grid;
    const int qi0 = g.q_index_of_zero();
    const int nr = g.n_r;
    const double rc = std::min(1.0, std::max(0.0, r));
    const double pos = rc * static_cast<double>(nr - 1);
    int i = static_cast<int>(pos);
    if (i >= nr - 1) i = nr - 2;
    const double w = pos - static_cast<double>(i);

    double weight = 0.0, acc = 0.0;
    for (std::size_t k = 0; k < controls.n_sizes; ++k) {
        const double lam = mp.intensities.lambda_a[k];
        if (lam <= 0.0) continue;
        double side_sum = 0.0;
        int sides = 0;
        for (Side s : {Side::Bid, Side::Ask}) {
            if (!controls.present(k, Tier::A, s, qi0, i) ||
                !controls.present(k, Tier::A, s, qi0, i + 1))
                continue;
            const double y0 = controls.y_at(k, Tier::A, s, qi0, i);
            const double y1 = controls.y_at(k, Tier::A, s, qi0, i + 1);
            side_sum += y0 + (y1 - y0) * w;
            ++sides;
        }
        if (sides == 0) continue;
        acc += lam * side_sum / static_cast<double>(sides);
        weight += lam;
    }
    if (weight <= 0.0)
        throw std::domain_error(
            "tier_a_winrate: no active tier-A channel quotes at q = 0");
    return acc / weight;
}

namespace {

struct Root {
    double x;
    double slope;
};

// Sign-change scan with bisection refinement on [lo, hi].
std::vector<Root> scan_roots(const std::function<double(double)>& f, double lo,
                             double hi, int n, double xtol) {
    std::vector<Root> roots;
    double xp = lo, fp = f(lo);
    for (int i = 1; i < n; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(n - 1);
        const double fx = f(x);
        if (fp == 0.0) {
            // Exact node hit: report once, judged by the neighboring sign.
            roots.push_back({xp, fx - fp});
        } else if (fp * fx < 0.0) {
            double a = xp, b = x, fa = fp;
            while (b - a > xtol) {
                const double m = 0.5 * (a + b);
                const double fm = f(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if (fa * fm < 0.0) {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push_back({0.5 * (a + b), fx - fp});
        }
        xp = x;
        fp = fx;
    }
    return roots;
}

}  // namespace

std::vector<ScoreFixedPoint> locate_fixed_points(
    const std::function<double(double)>& drift) {
    std::vector<ScoreFixedPoint> out;
    for (const Root& root : scan_roots(drift, 0.0, 1.0, 2001, 1e-6)) {
        ScoreFixedPoint fp;
        fp.r = root.x;
        fp.stability = root.slope < 0.0 ? Stability::Stable : Stability::Unstable;
        out.push_back(fp);
    }
    return out;
}

DriftField score_drift_from_hjb(const ControlField& controls,
                                const ModelParams& mp,
                                const std::vector<double>& r_grid) {
    DriftField out;
    out.r_grid = r_grid;
    const double lam_tot = lambda_a_total(mp);
    auto drift_fn = [&](double r) {
        const double ybar = tier_a_winrate(controls, mp, r);
        return mp.score.alpha * 2.0 * gate(mp.gate, r) * lam_tot * (ybar - r);
    };
    for (double r : r_grid) {
        const double ybar = tier_a_winrate(controls, mp, r);
        out.ybar.push_back(ybar);
        out.drift_per_trade.push_back(ybar - r);
        out.drift.push_back(mp.score.alpha * 2.0 * gate(mp.gate, r) * lam_tot *
                            (ybar - r));
    }
    out.fixed_points = locate_fixed_points(drift_fn);
    return out;
}

Trajectory relax_trajectory(const std::function<double(double)>& drift,
                            const ModelParams& mp, double r0, double horizon,
                            bool extend_to_settle) {
    if (!(r0 >= 0.0 && r0 <= 1.0))
        throw std::invalid_argument("relax_trajectory: R0 must lie in [0,1]");
    if (!(horizon > 0.0))
        throw std::invalid_argument("relax_trajectory: horizon must be > 0");

    const double lam_rfq_max = 2.0 * mp.gate.g_max * lambda_a_total(mp);
    const double rate = mp.score.alpha * lam_rfq_max;
    const double dt0 = rate > 0.0 ? 0.01 / rate : horizon / 1000.0;

    auto clamped = [&](double r) {
        return drift(std::min(1.0, std::max(0.0, r)));
    };

    Trajectory traj;
    double t = 0.0, r = r0, T = horizon;
    traj.t.push_back(t);
    traj.r.push_back(r);

    const double cap = 64.0 * horizon;
    while (true) {
        while (t < T) {
            double dt = std::min(dt0, T - t);
            double next = r;
            for (int halve = 0;; ++halve) {
                const double k1 = clamped(r);
                const double k2 = clamped(r + 0.5 * dt * k1);
                const double k3 = clamped(r + 0.5 * dt * k2);
                const double k4 = clamped(r + dt * k3);
                next = r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                const bool ok = std::isfinite(next) && next >= -1e-9 &&
                                next <= 1.0 + 1e-9 && std::abs(next - r) <= 0.02;
                if (ok) break;
                if (halve >= 40)
                    throw NumericError(
                        "relax_trajectory: step size underflow (drift not "
                        "integrable at R=" +
                        std::to_string(r) + ")");
                dt *= 0.5;
            }
            r = std::min(1.0, std::max(0.0, next));
            t += dt;
            traj.t.push_back(t);
            traj.r.push_back(r);
        }
        // Settled when the trajectory barely moved over its last quarter.
        double lo = r, hi = r;
        for (std::size_t i = traj.t.size(); i-- > 0;) {
            if (traj.t[i] < 0.75 * t) break;
            lo = std::min(lo, traj.r[i]);
            hi = std::max(hi, traj.r[i]);
        }
        if (hi - lo < 1e-4) {
            traj.converged = true;
            break;
        }
        if (!extend_to_settle) break;
        if (T >= cap) {
            std::cerr << "warning: relax_trajectory: not settled after " << T
                      << " days (R=" << r << "); returning partial trajectory\n";
            break;
        }
        T = std::min(cap, 2.0 * T);
    }
    return traj;
}

double score_of_gate_coord(const GateParams& gp, double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("score_of_gate_coord: u must lie in (0,1)");
    if (!(gp.beta > 0.0))
        throw std::domain_error("score_of_gate_coord: gate steepness must be > 0");
    return gp.r0 + std::log(u / (1.0 - u)) / gp.beta;
}

double closure_drift(const ClosureParams& cp, const ModelParams& mp, double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("closure_drift: u must lie in (0,1)");
    const GateParams& gp = mp.gate;
    if (!(gp.beta > 0.0))
        throw std::domain_error("closure_drift: gate steepness must be > 0");
    const double dg = gp.g_max - gp.g_min;
    const double xi_u = cp.xi_b + (gp.g_min + dg * u) * cp.xi_a;
    const double curv_term =
        cp.a_coef * (1.0 / std::sqrt(cp.xi_0) - 1.0 / std::sqrt(xi_u));
    const double wedge = mp.score.alpha * cp.b_coef * dg * gp.beta * u * (1.0 - u);
    const double r_of_u = gp.r0 + std::log(u / (1.0 - u)) / gp.beta;
    return cp.ybar_star + curv_term + wedge - r_of_u;
}

double closure_drift_deriv(const ClosureParams& cp, const ModelParams& mp,
                           double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("closure_drift_deriv: u must lie in (0,1)");
    const GateParams& gp = mp.gate;
    if (!(gp.beta > 0.0))
        throw std::domain_error("closure_drift_deriv: gate steepness must be > 0");
    const double dg = gp.g_max - gp.g_min;
    const double xi_u = cp.xi_b + (gp.g_min + dg * u) * cp.xi_a;
    const double curv = 0.5 * cp.a_coef * dg * cp.xi_a / (xi_u * std::sqrt(xi_u));
    const double wedge = mp.score.alpha * cp.b_coef * dg * gp.beta * (1.0 - 2.0 * u);
    return curv + wedge - 1.0 / (gp.beta * u * (1.0 - u));
}

ClosureParams fit_closure(const std::vector<double>& r_samples,
                          const std::vector<double>& ybar_alpha0,
                          const std::vector<double>& ybar_alpha,
                          const ModelParams& mp) {
    const std::size_t n = r_samples.size();
    if (n < 20)
        throw std::invalid_argument("fit_closure: need at least 20 sample scores");
    if (ybar_alpha0.size() != n || ybar_alpha.size() != n)
        throw std::invalid_argument("fit_closure: sample size mismatch");
    if (!(mp.score.alpha > 0.0))
        throw std::invalid_argument(
            "fit_closure: alpha must be > 0 to identify the promotion term");

    ClosureParams cp;
    const std::size_t K = mp.n_sizes();
    double wsum = 0.0, ysum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double z2 = mp.ladder.sizes[k] * mp.ladder.sizes[k];
        cp.xi_a += mp.intensities.lambda_a[k] *
                   hamiltonian_curvature(mp, Tier::A, k, 0.0) * z2;
        cp.xi_b += mp.intensities.lambda_b[k] *
                   hamiltonian_curvature(mp, Tier::B, k, 0.0) * z2;
        const double lam = mp.intensities.lambda_a[k];
        if (lam > 0.0) {
            wsum += lam;
            ysum += lam * hamiltonian_deriv(mp, Tier::A, k, 0.0);
        }
    }
    if (wsum <= 0.0)
        throw std::invalid_argument("fit_closure: no tier-A flow");
    cp.ybar_star = ysum / wsum;
    cp.xi_0 = cp.xi_b + gate(mp.gate, mp.gate.r0) * cp.xi_a;
    if (!(cp.xi_0 > 0.0))
        throw std::invalid_argument("fit_closure: vanishing curvature scale");

    // Stage 1: alpha = 0 samples carry no promotion wedge, so the curvature
    // channel is identified alone.
    std::vector<double> phi1(n);
    double s11 = 0.0, s1y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi_r = cp.xi_b + gate(mp.gate, r_samples[i]) * cp.xi_a;
        phi1[i] = 1.0 / std::sqrt(cp.xi_0) - 1.0 / std::sqrt(xi_r);
        s11 += phi1[i] * phi1[i];
        s1y += phi1[i] * (ybar_alpha0[i] - cp.ybar_star);
    }
    if (s11 < 1e-24)
        throw std::invalid_argument(
            "fit_closure: rank-deficient design (gate has no effect on xi)");
    cp.a_coef = s1y / s11;

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double res = ybar_alpha0[i] - cp.ybar_star - cp.a_coef * phi1[i];
        ss += res * res;
    }
    cp.rms_alpha0 = std::sqrt(ss / static_cast<double>(n));

    // Stage 2: with A fixed, the target-alpha residual identifies the
    // promotion coefficient against the gate-slope regressor.
    double s22 = 0.0, s2y = 0.0;
    std::vector<double> phi2(n);
    for (std::size_t i = 0; i < n; ++i) {
        phi2[i] = mp.score.alpha * gate_deriv(mp.gate, r_samples[i]);
        const double res = ybar_alpha[i] - cp.ybar_star - cp.a_coef * phi1[i];
        s22 += phi2[i] * phi2[i];
        s2y += phi2[i] * res;
    }
    if (s22 < 1e-30)
        throw std::invalid_argument(
            "fit_closure: rank-deficient design (flat gate slope)");
    cp.b_coef = s2y / s22;

    ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double res = ybar_alpha[i] - cp.ybar_star - cp.a_coef * phi1[i] -
                           cp.b_coef * phi2[i];
        ss += res * res;
    }
    cp.rms_alpha = std::sqrt(ss / static_cast<double>(n));
    return cp;
}

BifurcationDiagram bifurcation_scan(const SolverConfig& config,
                                    const std::vector<double>& betas,
                                    DriftSource source,
                                    const ClosureParams* closure, bool parallel) {
    if (betas.empty())
        throw std::invalid_argument("bifurcation_scan: empty scan list");
    for (std::size_t i = 0; i < betas.size(); ++i) {
        if (!(betas[i] > 0.0))
            throw std::invalid_argument("bifurcation_scan: scan values must be > 0");
        if (i > 0 && !(betas[i] > betas[i - 1]))
            throw std::invalid_argument("bifurcation_scan: scan values must ascend");
    }
    if (source == DriftSource::Closure && closure == nullptr)
        throw std::invalid_argument(
            "bifurcation_scan: closure source needs fitted coefficients");

    BifurcationDiagram diag;
    for (double beta : betas) {
        BifurcationPoint pt;
        pt.beta = beta;
        SolverConfig c = config;
        c.model.gate.beta = beta;
        try {
            if (source == DriftSource::Hjb) {
                const StationaryResult res = stationary_solve(c, parallel);
                const double lam_tot = lambda_a_total(c.model);
                auto drift_fn = [&](double r) {
                    const double ybar = tier_a_winrate(res.controls, c.model, r);
                    return c.model.score.alpha * 2.0 * gate(c.model.gate, r) *
                           lam_tot * (ybar - r);
                };
                pt.fixed_points = locate_fixed_points(drift_fn);
            } else {
                // Evaluate the closure along the score axis: at u = u(R) the
                // log term of F(u) collapses to -R, so the root condition
                // becomes ybar_closure(R) = R.  This keeps the whole score
                // range in view even for very steep gates, where the image
                // of a truncated u interval would miss low/high-score roots.
                const GateParams& gp = c.model.gate;
                const double dg = gp.g_max - gp.g_min;
                auto drift_fn = [&](double r) {
                    const double g = gate(gp, r);
                    const double u = dg > 0.0 ? (g - gp.g_min) / dg : 0.5;
                    const double campaign = c.model.score.alpha *
                                            closure->b_coef * dg * gp.beta * u *
                                            (1.0 - u);
                    const double xi_r = closure->xi_b + g * closure->xi_a;
                    return closure->ybar_star +
                           closure->a_coef * (1.0 / std::sqrt(closure->xi_0) -
                                              1.0 / std::sqrt(xi_r)) +
                           campaign - r;
                };
                pt.fixed_points = locate_fixed_points(drift_fn);
            }
        } catch (const NumericError& e) {
            std::cerr << "warning: bifurcation_scan: beta=" << beta
                      << " failed: " << e.what() << "\n";
            pt.failed = true;
        }
        diag.points.push_back(std::move(pt));
    }

    const BifurcationPoint* prev = nullptr;
    for (const BifurcationPoint& pt : diag.points) {
        if (pt.failed) continue;
        if (prev != nullptr &&
            prev->fixed_points.size() != pt.fixed_points.size())
            diag.folds.emplace_back(prev->beta, pt.beta);
        prev = &pt;
    }
    return diag;
}

}  // namespace rfqmm
