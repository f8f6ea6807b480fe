#include "rfqmm/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rfqmm/anderson.hpp"

namespace rfqmm {

BlockSolver::BlockSolver(const ModelParams& mp, const GridSpec& grid)
    : model_(mp), grid_(grid) {
    grid_.validate(model_);

    const int nr = grid_.n_r;
    const std::size_t K = model_.n_sizes();

    // Shared tabulation range for all (tier, size) slots, sized from the
    // worst-case inventory-jump value difference plus headroom for the
    // score-direction terms a converged profile can produce.
    const double bound = suggested_x_bound(model_, grid_.q_max);
    const double dx_target = 0.05;
    const std::size_t n_points =
        static_cast<std::size_t>(std::ceil(2.0 * bound / dx_target)) + 1;
    table_ = HamiltonianTable::build(model_, -bound, bound, n_points);

    tab_x0_ = table_.x_min();
    tab_intervals_ = table_.points() - 1;
    const double dx = (table_.x_max() - table_.x_min()) /
                      static_cast<double>(tab_intervals_);
    tab_inv_dx_ = 1.0 / dx;

    cubics_.resize(2 * K);
    for (int ti = 0; ti < 2; ++ti) {
        for (std::size_t k = 0; k < K; ++k) {
            const Tier tier = ti == 0 ? Tier::A : Tier::B;
            const std::vector<double>& h = table_.node_values(tier, k);
            const std::vector<double>& hp = table_.node_derivs(tier, k);
            Cubic& cub = cubics_[static_cast<std::size_t>(ti) * K + k];
            cub.c.resize(4 * tab_intervals_);
            for (std::size_t i = 0; i < tab_intervals_; ++i) {
                const double f0 = h[i], f1 = h[i + 1];
                const double g0 = dx * hp[i], g1 = dx * hp[i + 1];
                double* c = cub.c.data() + 4 * i;
                c[0] = f0;
                c[1] = g0;
                c[2] = 3.0 * (f1 - f0) - 2.0 * g0 - g1;
                c[3] = 2.0 * (f0 - f1) + g0 + g1;
            }
        }
    }

    gate_lambda_a_.resize(K * nr);
    for (int ri = 0; ri < nr; ++ri) {
        const double g = gate(model_.gate, grid_.r_value(ri));
        for (std::size_t k = 0; k < K; ++k)
            gate_lambda_a_[k * nr + ri] = g * model_.intensities.lambda_a[k];
    }

    // EMA images R+ = (1-alpha) R + alpha, R- = (1-alpha) R stay inside
    // [0,1]; precompute their linear-interpolation stencils.
    up_idx_.resize(nr);
    dn_idx_.resize(nr);
    up_w_.resize(nr);
    dn_w_.resize(nr);
    const double alpha = model_.score.alpha;
    for (int ri = 0; ri < nr; ++ri) {
        const double r = grid_.r_value(ri);
        const double scale = static_cast<double>(nr - 1);
        double pos = ((1.0 - alpha) * r + alpha) * scale;
        int i = std::min(static_cast<int>(pos), nr - 2);
        up_idx_[ri] = i;
        up_w_[ri] = pos - static_cast<double>(i);
        pos = (1.0 - alpha) * r * scale;
        i = std::min(static_cast<int>(pos), nr - 2);
        dn_idx_[ri] = i;
        dn_w_[ri] = pos - static_cast<double>(i);
    }

    q_jump_.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        q_jump_[k] = static_cast<int>(std::lround(model_.ladder.sizes[k] / grid_.q_step));
}

// Hermite segment lookup used by the sweep.  Both the serial reference and
// the OpenMP sweep route through the same arithmetic so their results are
// bitwise identical.
static inline double eval_cubic(const double* c, std::size_t intervals, double x0,
                                double inv_dx, double x) {
    const double pos = (x - x0) * inv_dx;
    if (!(pos >= 0.0 && pos <= static_cast<double>(intervals)))
        return std::numeric_limits<double>::quiet_NaN();
    std::size_t i = static_cast<std::size_t>(pos);
    if (i >= intervals) i = intervals - 1;
    const double t = pos - static_cast<double>(i);
    const double* q = c + 4 * i;
    return ((q[3] * t + q[2]) * t + q[1]) * t + q[0];
}

void BlockSolver::step_backward(const std::vector<double>& v_in,
                                std::vector<double>& v_out, bool parallel) const {
    const int nr = grid_.n_r;
    const int nq = grid_.n_q();
    const std::size_t K = model_.n_sizes();
    const double dt = grid_.dt();
    const double half_pen =
        0.5 * model_.risk.gamma * model_.risk.sigma * model_.risk.sigma;
    const double* vin = v_in.data();
    double* vout = v_out.data();

    auto run_row = [&](int qi) {
        const double* row0 = vin + static_cast<std::size_t>(qi) * nr;
        const double q = grid_.q_value(qi);
        const double pen = half_pen * q * q;
        for (int ri = 0; ri < nr; ++ri) {
            const double v0 = row0[ri];
            const int di = dn_idx_[ri];
            const double dw = dn_w_[ri];
            const double vm = row0[di] + (row0[di + 1] - row0[di]) * dw;
            const double lose = vm - v0;
            const int ui = up_idx_[ri];
            const double uw = up_w_[ri];

            double sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const int dq = q_jump_[k];
                const double* ca = cubics_[k].c.data();
                const double* cb = cubics_[K + k].c.data();
                double ha = 0.0, hb = 0.0;
                if (qi + dq < nq) {
                    const double* rowp = vin + static_cast<std::size_t>(qi + dq) * nr;
                    const double vwin = rowp[ui] + (rowp[ui + 1] - rowp[ui]) * uw;
                    ha += eval_cubic(ca, tab_intervals_, tab_x0_, tab_inv_dx_,
                                     vwin - vm);
                    hb += eval_cubic(cb, tab_intervals_, tab_x0_, tab_inv_dx_,
                                     rowp[ri] - v0);
                }
                if (qi - dq >= 0) {
                    const double* rowm = vin + static_cast<std::size_t>(qi - dq) * nr;
                    const double vwin = rowm[ui] + (rowm[ui + 1] - rowm[ui]) * uw;
                    ha += eval_cubic(ca, tab_intervals_, tab_x0_, tab_inv_dx_,
                                     vwin - vm);
                    hb += eval_cubic(cb, tab_intervals_, tab_x0_, tab_inv_dx_,
                                     rowm[ri] - v0);
                }
                sum += gate_lambda_a_[k * nr + ri] * (2.0 * lose + ha) +
                       model_.intensities.lambda_b[k] * hb;
            }
            vout[static_cast<std::size_t>(qi) * nr + ri] = v0 + dt * (sum - pen);
        }
    };

    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int qi = 0; qi < nq; ++qi) run_row(qi);
    } else {
        for (int qi = 0; qi < nq; ++qi) run_row(qi);
    }
}

void BlockSolver::check_finite(const std::vector<double>& v, int step) const {
    const int nr = grid_.n_r;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            const int qi = static_cast<int>(i) / nr;
            const int ri = static_cast<int>(i) % nr;
            std::ostringstream os;
            os << "backward sweep: non-finite value at step " << step << ", cell q="
               << grid_.q_value(qi) << ", R=" << grid_.r_value(ri)
               << " (unstable step or Hamiltonian table range exceeded)";
            throw NumericError(os.str());
        }
    }
}

ValueGrid BlockSolver::solve_block(const std::vector<double>& phi,
                                   bool parallel) const {
    const int nr = grid_.n_r;
    const int nq = grid_.n_q();
    if (static_cast<int>(phi.size()) != nr)
        throw std::invalid_argument("solve_block: phi size mismatch");

    std::vector<double> a(static_cast<std::size_t>(nq) * nr);
    std::vector<double> b(a.size());

    const double disc = std::exp(-model_.risk.rho * grid_.t_block);
    for (int qi = 0; qi < nq; ++qi) {
        const double q = grid_.q_value(qi);
        const double qpen = -0.5 * model_.risk.eta * q * q;
        for (int ri = 0; ri < nr; ++ri)
            a[static_cast<std::size_t>(qi) * nr + ri] = qpen + disc * phi[ri];
    }

    for (int s = 0; s < grid_.n_t; ++s) {
        step_backward(a, b, parallel);
        check_finite(b, s);
        a.swap(b);
    }

    ValueGrid vg;
    vg.grid = grid_;
    vg.v = std::move(a);
    vg.phi = phi;
    return vg;
}

ControlField BlockSolver::extract_controls(const ValueGrid& vg) const {
    const int nr = grid_.n_r;
    const int nq = grid_.n_q();
    const std::size_t K = model_.n_sizes();

    ControlField cf;
    cf.grid = grid_;
    cf.n_sizes = K;
    cf.allocate();

    const double* vin = vg.v.data();
    for (int qi = 0; qi < nq; ++qi) {
        const double* row0 = vin + static_cast<std::size_t>(qi) * nr;
        for (int ri = 0; ri < nr; ++ri) {
            const double v0 = row0[ri];
            const double vm =
                row0[dn_idx_[ri]] +
                (row0[dn_idx_[ri] + 1] - row0[dn_idx_[ri]]) * dn_w_[ri];
            const int ui = up_idx_[ri];
            const double uw = up_w_[ri];
            for (std::size_t k = 0; k < K; ++k) {
                const int dq = q_jump_[k];
                // Bid fills buy: q -> q + z.  Ask fills sell: q -> q - z.
                const int qto[2] = {qi + dq, qi - dq};
                for (int si = 0; si < 2; ++si) {
                    if (qto[si] < 0 || qto[si] >= nq) continue;
                    const double* rowj =
                        vin + static_cast<std::size_t>(qto[si]) * nr;
                    const Side side = si == 0 ? Side::Bid : Side::Ask;
                    const double vwin_a = rowj[ui] + (rowj[ui + 1] - rowj[ui]) * uw;
                    const HamiltonianSolution sa =
                        solve_hamiltonian(model_, Tier::A, k, vwin_a - vm);
                    cf.y_at(k, Tier::A, side, qi, ri) = sa.deriv;
                    cf.delta_at(k, Tier::A, side, qi, ri) = sa.maximizer;
                    const HamiltonianSolution sb =
                        solve_hamiltonian(model_, Tier::B, k, rowj[ri] - v0);
                    cf.y_at(k, Tier::B, side, qi, ri) = sb.deriv;
                    cf.delta_at(k, Tier::B, side, qi, ri) = sb.maximizer;
                }
            }
        }
    }
    return cf;
}

StationaryResult stationary_solve(const SolverConfig& config, bool parallel) {
    const ModelParams& mp = config.model;
    const GridSpec& grid = config.grid;
    const FixedPointParams& fp = config.fixed_point;
    fp.validate();

    BlockSolver solver(mp, grid);
    const int nr = grid.n_r;
    const int qi0 = grid.q_index_of_zero();

    FixedPointReport report;
    report.anderson_m = fp.anderson_m;
    report.zeta = fp.zeta;

    std::vector<double> phi(nr, 0.0);
    std::vector<AndersonPair> history;
    const double amp = 1.0 / (1.0 - std::exp(-mp.risk.rho * grid.t_block));

    bool converged = false;
    int iter = 0;
    for (; iter < fp.max_iter; ++iter) {
        const ValueGrid vg = solver.solve_block(phi, parallel);
        std::vector<double> g(nr);
        for (int ri = 0; ri < nr; ++ri)
            g[ri] = vg.v[static_cast<std::size_t>(qi0) * nr + ri];

        std::vector<double> resid(nr);
        for (int ri = 0; ri < nr; ++ri) resid[ri] = g[ri] - phi[ri];

        history.push_back({phi, resid});
        if (history.size() > static_cast<std::size_t>(std::max(fp.anderson_m, 1)))
            history.erase(history.begin());

        std::vector<double> next(nr);
        if (iter == 0 && fp.warm_start) {
            // First pass sees Phi = 0, so g is the one-block value; the
            // geometric series of the pure-discount recursion gives a
            // strong initializer for the stationary profile.
            for (int ri = 0; ri < nr; ++ri) next[ri] = amp * g[ri];
        } else if (fp.anderson_m > 0) {
            AndersonStep step = anderson_update(
                history, static_cast<std::size_t>(fp.anderson_m), fp.anderson_ridge);
            next = std::move(step.next);
            if (step.fallback) ++report.anderson_fallbacks;
        } else {
            for (int ri = 0; ri < nr; ++ri) next[ri] = phi[ri] + fp.zeta * resid[ri];
        }

        double inc = 0.0;
        for (int ri = 0; ri < nr; ++ri)
            inc = std::max(inc, std::abs(next[ri] - phi[ri]));
        report.residuals.push_back(inc);
        phi = std::move(next);

        if (inc < fp.tol) {
            converged = true;
            ++iter;
            break;
        }
    }
    report.iterations = iter;
    report.converged = converged;

    if (!converged) {
        std::ostringstream os;
        os << "stationary_solve: no convergence after " << fp.max_iter
           << " iterations; sup-norm increment " << report.residuals.back()
           << " vs tol " << fp.tol;
        throw NumericError(os.str());
    }

    StationaryResult out;
    out.value = solver.solve_block(phi, parallel);
    out.controls = solver.extract_controls(out.value);
    double rfin = 0.0;
    for (int ri = 0; ri < nr; ++ri)
        rfin = std::max(rfin, std::abs(out.value.v[static_cast<std::size_t>(qi0) * nr +
                                                   ri] -
                                       phi[ri]));
    report.final_residual = rfin;
    out.report = report;
    return out;
}

double instant_pnl_A(const ControlField& cf, const ModelParams& mp, int qi,
                     int ri) {
    const double g = gate(mp.gate, cf.grid.r_value(ri));
    double total = 0.0;
    for (std::size_t k = 0; k < cf.n_sizes; ++k) {
        const double lam = mp.intensities.lambda_a[k];
        if (lam <= 0.0) continue;
        const double z = mp.ladder.sizes[k];
        const double theta = mp.risk.theta[k];
        double side_sum = 0.0;
        for (Side side : {Side::Bid, Side::Ask}) {
            if (!cf.present(k, Tier::A, side, qi, ri)) continue;
            const double y = cf.y_at(k, Tier::A, side, qi, ri);
            const double d = cf.delta_at(k, Tier::A, side, qi, ri);
            side_sum += y * z * (d - theta);
        }
        total += lam * side_sum;
    }
    return g * total;
}

std::vector<double> instant_pnl_A_field(const ControlField& cf,
                                        const ModelParams& mp) {
    const int nq = cf.grid.n_q();
    const int nr = cf.grid.n_r;
    std::vector<double> out(static_cast<std::size_t>(nq) * nr);
    for (int qi = 0; qi < nq; ++qi)
        for (int ri = 0; ri < nr; ++ri)
            out[static_cast<std::size_t>(qi) * nr + ri] =
                instant_pnl_A(cf, mp, qi, ri);
    return out;
}

}  // namespace rfqmm
