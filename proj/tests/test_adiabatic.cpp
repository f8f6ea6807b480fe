#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "rfqmm/adiabatic.hpp"
#include "rfqmm/config.hpp"
#include "rfqmm/hamiltonian.hpp"

using namespace rfqmm;

namespace {

ModelParams default_model() { return default_config().model; }

// Reference values computed with an independent high-resolution maximizer
// (brute-force grid + derivative-free refinement of p * (z (d - theta) + x))
// and exact closed forms on top of it.
constexpr double kKz1 = 0.730043355450948;    // H''(0), z = 1
constexpr double kKz10 = 0.049460967032204;   // H''(0), z = 10
constexpr double kXiLow = 5563.235052582572;  // xi at gate = 0.2, per side
constexpr double kXiMid = 5662.156986646980;  // xi at gate = 0.6
constexpr double kXiHigh = 5761.078920711389; // xi at gate = 1.0
constexpr double kAInfMid = 0.029716253124527116;
constexpr double kAInfRatio = 0.9826792654863667;  // a_inf(1) / a_inf(0)
constexpr double kYbarStar = 0.41980718712570286;

}  // namespace

TEST_CASE("quasi-stationary curvature matches direct evaluation") {
    const ModelParams mp = default_model();
    const CurvatureRow mid = ergodic_curvature(mp, 0.6);

    CHECK(mid.r == 0.6);
    CHECK(mid.xi == doctest::Approx(kXiMid).epsilon(1e-9));
    CHECK(mid.a_inf == doctest::Approx(kAInfMid).epsilon(1e-9));
    CHECK(mid.k_b[0] == doctest::Approx(kKz1).epsilon(1e-9));
    CHECK(mid.k_a[3] == doctest::Approx(kKz10).epsilon(1e-9));
    // frozen closure: identical win curves for both tiers
    for (std::size_t k = 0; k < 4; ++k) CHECK(mid.k_a[k] == mid.k_b[k]);

    // definition identity a_inf * sqrt(2 xi) = sqrt(gamma sigma^2)
    const double lhs = mid.a_inf * std::sqrt(2.0 * mid.xi);
    CHECK(lhs == doctest::Approx(std::sqrt(mp.risk.gamma) * mp.risk.sigma)
                     .epsilon(1e-12));

    // gate endpoints (gate not exactly at its asymptotes, hence looser)
    const CurvatureRow lo = ergodic_curvature(mp, 0.0);
    const CurvatureRow hi = ergodic_curvature(mp, 1.0);
    CHECK(lo.xi == doctest::Approx(kXiLow).epsilon(1e-7));
    CHECK(hi.xi == doctest::Approx(kXiHigh).epsilon(1e-7));
    CHECK(hi.a_inf / lo.a_inf == doctest::Approx(kAInfRatio).epsilon(1e-8));
}

TEST_CASE("curvature obeys the intensity scaling law") {
    const ModelParams mp = default_model();
    ModelParams doubled = mp;
    for (double& v : doubled.intensities.lambda_a) v *= 2.0;
    for (double& v : doubled.intensities.lambda_b) v *= 2.0;

    const CurvatureRow base = ergodic_curvature(mp, 0.45);
    const CurvatureRow twice = ergodic_curvature(doubled, 0.45);
    CHECK(twice.xi == doctest::Approx(2.0 * base.xi).epsilon(1e-12));
    CHECK(twice.a_inf ==
          doctest::Approx(base.a_inf / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("curvature ignores the gate without gated flow") {
    ModelParams mp = default_model();
    mp.intensities.lambda_a.assign(4, 0.0);
    const CurvatureRow a = ergodic_curvature(mp, 0.0);
    const CurvatureRow b = ergodic_curvature(mp, 0.6);
    const CurvatureRow c = ergodic_curvature(mp, 1.0);
    CHECK(a.xi == doctest::Approx(b.xi).epsilon(1e-14));
    CHECK(b.xi == doctest::Approx(c.xi).epsilon(1e-14));
    CHECK(a.a_inf == doctest::Approx(c.a_inf).epsilon(1e-14));
}

TEST_CASE("curvature grows like inverse square root of the gate alone") {
    ModelParams mp = default_model();
    mp.intensities.lambda_b.assign(4, 0.0);
    const double r1 = 0.55, r2 = 0.85;
    const CurvatureRow a = ergodic_curvature(mp, r1);
    const CurvatureRow b = ergodic_curvature(mp, r2);
    const double expected =
        std::sqrt(gate(mp.gate, r2) / gate(mp.gate, r1));
    CHECK(a.a_inf / b.a_inf == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("curvature rejects empty flow and bad scores") {
    ModelParams mp = default_model();
    mp.intensities.lambda_a.assign(4, 0.0);
    mp.intensities.lambda_b.assign(4, 0.0);
    CHECK_THROWS_WITH_AS(ergodic_curvature(mp, 0.5),
                         doctest::Contains("curvature undefined without flow"),
                         std::domain_error);

    const ModelParams ok = default_model();
    CHECK_THROWS_AS(ergodic_curvature(ok, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(ergodic_curvature(ok, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(
        ergodic_curvature(ok, 0.5, CurvatureMode::SelfConsistent, nullptr),
        std::invalid_argument);
}

TEST_CASE("self-consistent curvature reads the continuation gaps") {
    const ModelParams mp = default_model();
    ValueGrid vg;
    vg.grid.q_max = 20.0;
    vg.grid.q_step = 1.0;
    vg.grid.n_r = 5;
    const double a_q = 0.03;
    vg.v.resize(static_cast<std::size_t>(vg.grid.n_q()) * vg.grid.n_r);
    for (int qi = 0; qi < vg.grid.n_q(); ++qi) {
        const double q = vg.grid.q_value(qi);
        for (int ri = 0; ri < vg.grid.n_r; ++ri)
            vg.v[static_cast<std::size_t>(qi) * vg.grid.n_r + ri] =
                -0.5 * a_q * q * q;
    }
    vg.phi.assign(vg.grid.n_r, 0.0);

    const double r = 0.37;
    const CurvatureRow row =
        ergodic_curvature(mp, r, CurvatureMode::SelfConsistent, &vg);

    double xi = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double z = mp.ladder.sizes[k];
        const double gap = -0.5 * a_q * z * z;  // v(z) - v(0), score-flat
        const double ka = hamiltonian_curvature(mp, Tier::A, k, gap);
        const double kb = hamiltonian_curvature(mp, Tier::B, k, gap);
        CHECK(row.k_a[k] == doctest::Approx(ka).epsilon(1e-12));
        CHECK(row.k_b[k] == doctest::Approx(kb).epsilon(1e-12));
        xi += (gate(mp.gate, r) * mp.intensities.lambda_a[k] * ka +
               mp.intensities.lambda_b[k] * kb) *
              z * z;
    }
    CHECK(row.xi == doctest::Approx(xi).epsilon(1e-12));
}

TEST_CASE("curvature profile is monotone against the gate at defaults") {
    const ModelParams mp = default_model();
    std::vector<double> r_grid;
    for (int i = 0; i <= 20; ++i) r_grid.push_back(i / 20.0);
    const CurvatureProfile prof = curvature_profile(mp, r_grid);
    REQUIRE(prof.xi.size() == r_grid.size());
    REQUIRE(prof.a_inf.size() == r_grid.size());
    REQUIRE(prof.k_a.size() == r_grid.size());
    for (std::size_t i = 1; i < r_grid.size(); ++i) {
        // gate opens with R -> more gated flow -> more curvature-absorbing
        // turnover -> flatter inventory value
        CHECK(prof.xi[i] >= prof.xi[i - 1]);
        CHECK(prof.a_inf[i] <= prof.a_inf[i - 1]);
        CHECK(prof.a_inf[i] > 0.0);
    }
}

TEST_CASE("value curvature fit recovers an exact quadratic") {
    ValueGrid vg;
    vg.grid.q_max = 10.0;
    vg.grid.q_step = 1.0;
    vg.grid.n_r = 3;
    vg.v.resize(static_cast<std::size_t>(vg.grid.n_q()) * vg.grid.n_r);
    for (int qi = 0; qi < vg.grid.n_q(); ++qi) {
        const double q = vg.grid.q_value(qi);
        for (int ri = 0; ri < vg.grid.n_r; ++ri)
            vg.v[static_cast<std::size_t>(qi) * vg.grid.n_r + ri] =
                7.5 - 0.5 * 0.041 * q * q + 0.3 * q;
    }
    vg.phi.assign(vg.grid.n_r, 0.0);
    CHECK(hjb_curvature_fit(vg, 0.5, 5.0) ==
          doctest::Approx(0.041).epsilon(1e-12));
    CHECK_THROWS_AS(hjb_curvature_fit(vg, 0.5, 0.4), std::invalid_argument);
}

TEST_CASE("offset asymmetry under a quadratic value follows the curvature") {
    // With value -A q^2 / 2 the continuation gaps at inventory q are
    // x = -A z^2/2 -/+ A z q (bid/ask), so the win-rate split between the
    // sides is approximately 2 H'' A z q.
    const ModelParams mp = default_model();
    const double a_q = 0.03, q = 2.0, z = 10.0;
    const std::size_t k = 3;
    const double xb = -0.5 * a_q * z * z - a_q * z * q;
    const double xa = -0.5 * a_q * z * z + a_q * z * q;
    const double yb = hamiltonian_deriv(mp, Tier::A, k, xb);
    const double ya = hamiltonian_deriv(mp, Tier::A, k, xa);
    CHECK(ya - yb == doctest::Approx(0.06204913845919319).epsilon(1e-7));
    const double linear = 2.0 * kKz10 * a_q * z * q;
    CHECK(ya - yb == doctest::Approx(linear).epsilon(0.06));
}

namespace {

// Control field with a single synthetic tier-A profile y(r) on the z = 10
// channel, both sides, all inventories.
ControlField linear_controls(double y0, double slope, int n_r) {
    ControlField cf;
    cf.grid.q_max = 10.0;
    cf.grid.q_step = 1.0;
    cf.grid.n_r = n_r;
    cf.n_sizes = 4;
    cf.allocate();
    for (int qi = 0; qi < cf.grid.n_q(); ++qi) {
        for (int ri = 0; ri < n_r; ++ri) {
            const double y = y0 + slope * cf.grid.r_value(ri);
            for (Side s : {Side::Bid, Side::Ask}) {
                cf.y_at(3, Tier::A, s, qi, ri) = y;
                cf.delta_at(3, Tier::A, s, qi, ri) = 1.0;
            }
        }
    }
    return cf;
}

}  // namespace

TEST_CASE("winrate aggregates the active tier-A channels at flat inventory") {
    const ModelParams mp = default_model();
    const ControlField cf = linear_controls(0.3, 0.2, 11);

    // single active size (z = 10): the aggregate equals that channel
    CHECK(tier_a_winrate(cf, mp, 0.0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(tier_a_winrate(cf, mp, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    // off-node: linear interpolation along the score axis
    CHECK(tier_a_winrate(cf, mp, 0.37) ==
          doctest::Approx(0.3 + 0.2 * 0.37).epsilon(1e-14));
    // clamped outside [0,1]
    CHECK(tier_a_winrate(cf, mp, -0.5) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(tier_a_winrate(cf, mp, 1.5) == doctest::Approx(0.5).epsilon(1e-14));

    SUBCASE("sides are averaged") {
        ControlField two = cf;
        const int qi0 = two.grid.q_index_of_zero();
        for (int ri = 0; ri < two.grid.n_r; ++ri)
            two.y_at(3, Tier::A, Side::Ask, qi0, ri) += 0.1;
        CHECK(tier_a_winrate(two, mp, 0.0) ==
              doctest::Approx(0.35).epsilon(1e-14));
    }

    SUBCASE("absent side is skipped") {
        ControlField one = cf;
        const int qi0 = one.grid.q_index_of_zero();
        for (int ri = 0; ri < one.grid.n_r; ++ri)
            one.y_at(3, Tier::A, Side::Ask, qi0, ri) =
                std::numeric_limits<double>::quiet_NaN();
        CHECK(tier_a_winrate(one, mp, 0.4) ==
              doctest::Approx(0.3 + 0.2 * 0.4).epsilon(1e-14));
    }

    SUBCASE("no active channel throws") {
        ControlField none = cf;
        const int qi0 = none.grid.q_index_of_zero();
        for (int ri = 0; ri < none.grid.n_r; ++ri)
            for (Side s : {Side::Bid, Side::Ask})
                none.y_at(3, Tier::A, s, qi0, ri) =
                    std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(tier_a_winrate(none, mp, 0.5), std::domain_error);
    }
}

TEST_CASE("drift field applies the rate map to the sampled winrate") {
    const ModelParams mp = default_model();
    const ControlField cf = linear_controls(0.3, 0.2, 11);
    std::vector<double> r_grid;
    for (int i = 0; i <= 50; ++i) r_grid.push_back(i / 50.0);

    const DriftField df = score_drift_from_hjb(cf, mp, r_grid);
    REQUIRE(df.r_grid.size() == r_grid.size());
    REQUIRE(df.ybar.size() == r_grid.size());
    REQUIRE(df.drift.size() == r_grid.size());
    REQUIRE(df.drift_per_trade.size() == r_grid.size());

    double lam_tot = 0.0;
    for (double v : mp.intensities.lambda_a) lam_tot += v;
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
        const double r = r_grid[i];
        const double ybar = 0.3 + 0.2 * r;
        CHECK(df.ybar[i] == doctest::Approx(ybar).epsilon(1e-13));
        CHECK(df.drift_per_trade[i] == doctest::Approx(ybar - r).epsilon(1e-13));
        const double rate =
            mp.score.alpha * 2.0 * gate(mp.gate, r) * lam_tot * (ybar - r);
        CHECK(df.drift[i] == doctest::Approx(rate).epsilon(1e-13));
    }

    // endpoint signs and the resulting single equilibrium of the linear map
    CHECK(df.drift.front() > 0.0);
    CHECK(df.drift.back() < 0.0);
    REQUIRE(df.fixed_points.size() == 1);
    CHECK(df.fixed_points[0].r == doctest::Approx(0.375).epsilon(2e-6));
    CHECK(df.fixed_points[0].stability == Stability::Stable);
}

TEST_CASE("root finder resolves a cubic drift with stability pattern") {
    auto cubic = [](double r) { return (r - 0.2) * (0.5 - r) * (r - 0.8); };
    const std::vector<ScoreFixedPoint> fps = locate_fixed_points(cubic);
    REQUIRE(fps.size() == 3);
    CHECK(fps[0].r == doctest::Approx(0.2).epsilon(2e-6));
    CHECK(fps[1].r == doctest::Approx(0.5).epsilon(2e-6));
    CHECK(fps[2].r == doctest::Approx(0.8).epsilon(2e-6));
    CHECK(fps[0].stability == Stability::Stable);
    CHECK(fps[1].stability == Stability::Unstable);
    CHECK(fps[2].stability == Stability::Stable);
}

TEST_CASE("relaxation reproduces the exact exponential approach") {
    const ModelParams mp = default_model();
    auto drift = [](double r) { return -2.0 * (r - 0.4); };

    SUBCASE("from above") {
        const Trajectory traj = relax_trajectory(drift, mp, 0.9, 6.0);
        REQUIRE(traj.t.size() == traj.r.size());
        REQUIRE(traj.t.size() > 10);
        CHECK(traj.converged);
        for (std::size_t i = 0; i < traj.t.size(); ++i) {
            const double exact = 0.4 + 0.5 * std::exp(-2.0 * traj.t[i]);
            CHECK(traj.r[i] == doctest::Approx(exact).epsilon(1e-7));
            if (i > 0) CHECK(traj.r[i] <= traj.r[i - 1]);
        }
        CHECK(std::abs(traj.r.back() - 0.4) < 1e-3);
    }

    SUBCASE("from below") {
        const Trajectory traj = relax_trajectory(drift, mp, 0.1, 6.0);
        CHECK(traj.converged);
        for (std::size_t i = 1; i < traj.r.size(); ++i)
            CHECK(traj.r[i] >= traj.r[i - 1]);
        CHECK(std::abs(traj.r.back() - 0.4) < 1e-3);
    }
}

TEST_CASE("relaxation holds an exact equilibrium") {
    const ModelParams mp = default_model();
    auto drift = [](double r) { return 3.0 * (r - 0.5); };  // unstable at 0.5
    const Trajectory traj = relax_trajectory(drift, mp, 0.5, 2.0);
    CHECK(traj.converged);
    for (double r : traj.r) CHECK(r == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("relaxation selects the basin of attraction") {
    const ModelParams mp = default_model();
    auto drift = [](double r) {
        return 5.0 * (r - 0.2) * (0.5 - r) * (r - 0.8);
    };

    const Trajectory low = relax_trajectory(drift, mp, 0.45, 30.0);
    CHECK(low.converged);
    CHECK(std::abs(low.r.back() - 0.2) < 1e-3);
    for (std::size_t i = 1; i < low.r.size(); ++i)
        CHECK(low.r[i] <= low.r[i - 1]);

    const Trajectory high = relax_trajectory(drift, mp, 0.55, 30.0);
    CHECK(high.converged);
    CHECK(std::abs(high.r.back() - 0.8) < 1e-3);
    for (std::size_t i = 1; i < high.r.size(); ++i)
        CHECK(high.r[i] >= high.r[i - 1]);
}

namespace {

ClosureParams frozen_closure(double a_coef, double b_coef) {
    ClosureParams cp;
    cp.a_coef = a_coef;
    cp.b_coef = b_coef;
    cp.ybar_star = kYbarStar;
    cp.xi_a = 247.3048351610209;
    cp.xi_b = 5513.774085550368;
    cp.xi_0 = cp.xi_b + 0.6 * cp.xi_a;
    return cp;
}

}  // namespace

TEST_CASE("closure midpoint collapses to the campaign term") {
    const ModelParams mp = default_model();
    const ClosureParams cp = frozen_closure(0.8, 120.0);
    // At u = 1/2 the log term vanishes and xi(u) equals xi_0, leaving only
    // the baseline, the campaign bump and the gate center.
    const double dg = mp.gate.g_max - mp.gate.g_min;
    const double expect = cp.ybar_star +
                          mp.score.alpha * cp.b_coef * dg * mp.gate.beta / 4.0 -
                          mp.gate.r0;
    CHECK(closure_drift(cp, mp, 0.5) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(closure_drift(cp, mp, 0.5) ==
          doctest::Approx(9.419807187125702).epsilon(1e-9));
}

TEST_CASE("closure degenerates to the baseline without feedback") {
    ModelParams mp = default_model();
    mp.score.alpha = 0.0;
    const ClosureParams cp = frozen_closure(0.0, 120.0);

    // F(u) = ybar_star - R(u): root exactly where the score equals the
    // baseline win rate
    const double u_star = 0.0007403014494610274;
    CHECK(std::abs(closure_drift(cp, mp, u_star)) < 1e-9);
    for (double u : {0.1, 0.3, 0.7, 0.9}) {
        const double expect = kYbarStar - score_of_gate_coord(mp.gate, u);
        CHECK(closure_drift(cp, mp, u) == doctest::Approx(expect).epsilon(1e-12));
    }
    // strictly decreasing in u
    CHECK(closure_drift(cp, mp, 0.2) > closure_drift(cp, mp, 0.4));
    CHECK(closure_drift(cp, mp, 0.4) > closure_drift(cp, mp, 0.6));
}

TEST_CASE("closure rejects gate coordinates at the boundary") {
    const ModelParams mp = default_model();
    const ClosureParams cp = frozen_closure(0.8, 8.0);
    CHECK_THROWS_AS(closure_drift(cp, mp, 0.0), std::domain_error);
    CHECK_THROWS_AS(closure_drift(cp, mp, 1.0), std::domain_error);
    CHECK_THROWS_AS(closure_drift(cp, mp, -0.2), std::domain_error);
    CHECK_THROWS_AS(closure_drift_deriv(cp, mp, 0.0), std::domain_error);
    CHECK_THROWS_AS(score_of_gate_coord(mp.gate, 1.0), std::domain_error);
}

TEST_CASE("gate coordinate map inverts the gate") {
    const ModelParams mp = default_model();
    const double r = score_of_gate_coord(mp.gate, 0.25);
    CHECK(r == doctest::Approx(0.5725346927832973).epsilon(1e-12));
    // G(R(u)) recovers g_min + dG u
    CHECK(gate(mp.gate, r) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("closure slope matches finite differences of the closure") {
    const ModelParams mp = default_model();
    const ClosureParams cp = frozen_closure(0.8, 8.0);
    const double h = 1e-5;
    for (double u : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double fd =
            (closure_drift(cp, mp, u + h) - closure_drift(cp, mp, u - h)) /
            (2.0 * h);
        CHECK(closure_drift_deriv(cp, mp, u) ==
              doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("closure fit recovers known coefficients exactly") {
    const ModelParams mp = default_model();
    const double a_true = 0.8, b_true = 150.0;
    const ClosureParams truth = frozen_closure(a_true, b_true);

    std::vector<double> r_samples, y0, y1;
    for (int i = 0; i <= 40; ++i) {
        const double r = 0.05 + 0.9 * i / 40.0;
        const double xi_r = truth.xi_b + gate(mp.gate, r) * truth.xi_a;
        const double phi1 = 1.0 / std::sqrt(truth.xi_0) - 1.0 / std::sqrt(xi_r);
        r_samples.push_back(r);
        y0.push_back(kYbarStar + a_true * phi1);
        y1.push_back(kYbarStar + a_true * phi1 +
                     mp.score.alpha * b_true * gate_deriv(mp.gate, r));
    }

    const ClosureParams fit = fit_closure(r_samples, y0, y1, mp);
    CHECK(fit.a_coef == doctest::Approx(a_true).epsilon(1e-6));
    CHECK(fit.b_coef == doctest::Approx(b_true).epsilon(1e-6));
    CHECK(fit.ybar_star == doctest::Approx(kYbarStar).epsilon(1e-9));
    CHECK(fit.xi_a == doctest::Approx(truth.xi_a).epsilon(1e-9));
    CHECK(fit.xi_b == doctest::Approx(truth.xi_b).epsilon(1e-9));
    CHECK(fit.xi_0 == doctest::Approx(truth.xi_0).epsilon(1e-9));
    CHECK(fit.rms_alpha0 < 1e-8);
    CHECK(fit.rms_alpha < 1e-8);
    CHECK(fit.ybar_star > 0.0);
    CHECK(fit.ybar_star < 1.0);
}

TEST_CASE("closure fit validates its inputs") {
    const ModelParams mp = default_model();
    std::vector<double> r(41, 0.5), y(41, 0.4), short_y(10, 0.4);
    for (int i = 0; i <= 40; ++i) r[i] = 0.05 + 0.9 * i / 40.0;

    CHECK_THROWS_AS(fit_closure({r.begin(), r.begin() + 10}, short_y, short_y, mp),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_closure(r, short_y, y, mp), std::invalid_argument);
    CHECK_THROWS_AS(fit_closure(r, y, short_y, mp), std::invalid_argument);

    ModelParams no_alpha = mp;
    no_alpha.score.alpha = 0.0;
    CHECK_THROWS_AS(fit_closure(r, y, y, no_alpha), std::invalid_argument);

    ModelParams flat = mp;
    flat.gate.beta = 1e-16;  // gate has no slope: design is rank deficient
    CHECK_THROWS_AS(fit_closure(r, y, y, flat), std::invalid_argument);

    ModelParams no_a = mp;
    no_a.intensities.lambda_a.assign(4, 0.0);
    CHECK_THROWS_AS(fit_closure(r, y, y, no_a), std::invalid_argument);
}

TEST_CASE("closure-source steepness scan finds the fold") {
    const SolverConfig config = default_config();
    const ClosureParams cp = frozen_closure(0.8, 8.0);
    const std::vector<double> betas = {0.5, 40.0, 2000.0};

    const BifurcationDiagram diag =
        bifurcation_scan(config, betas, DriftSource::Closure, &cp);
    REQUIRE(diag.points.size() == 3);

    const BifurcationPoint& flat = diag.points[0];
    CHECK(flat.beta == 0.5);
    CHECK_FALSE(flat.failed);
    REQUIRE(flat.fixed_points.size() == 1);
    CHECK(flat.fixed_points[0].r ==
          doctest::Approx(0.42778837886035045).epsilon(2e-6));
    CHECK(flat.fixed_points[0].stability == Stability::Stable);

    const BifurcationPoint& sharp = diag.points[1];
    REQUIRE(sharp.fixed_points.size() == 3);
    CHECK(sharp.fixed_points[0].r ==
          doctest::Approx(0.42176066903428455).epsilon(2e-6));
    CHECK(sharp.fixed_points[1].r ==
          doctest::Approx(0.52149203106765849).epsilon(2e-6));
    CHECK(sharp.fixed_points[2].r ==
          doctest::Approx(0.65437829872325545).epsilon(2e-6));
    CHECK(sharp.fixed_points[0].stability == Stability::Stable);
    CHECK(sharp.fixed_points[1].stability == Stability::Unstable);
    CHECK(sharp.fixed_points[2].stability == Stability::Stable);

    // odd root count everywhere, including gates far steeper than the score
    // grid would resolve through the gate-coordinate window
    for (const BifurcationPoint& pt : diag.points)
        CHECK(pt.fixed_points.size() % 2 == 1);

    REQUIRE(diag.folds.size() == 1);
    CHECK(diag.folds[0].first == 0.5);
    CHECK(diag.folds[0].second == 40.0);
}

TEST_CASE("steepness scan validates its inputs") {
    const SolverConfig config = default_config();
    const ClosureParams cp = frozen_closure(0.8, 8.0);
    CHECK_THROWS_AS(bifurcation_scan(config, {}, DriftSource::Closure, &cp),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        bifurcation_scan(config, {1.0, 0.5}, DriftSource::Closure, &cp),
        std::invalid_argument);
    CHECK_THROWS_AS(
        bifurcation_scan(config, {-1.0, 2.0}, DriftSource::Closure, &cp),
        std::invalid_argument);
    CHECK_THROWS_AS(
        bifurcation_scan(config, {1.0, 2.0}, DriftSource::Closure, nullptr),
        std::invalid_argument);
}
