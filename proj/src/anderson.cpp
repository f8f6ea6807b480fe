#include "rfqmm/anderson.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include <Eigen/Dense>

namespace rfqmm {

AndersonStep anderson_update(const std::vector<AndersonPair>& history,
                             std::size_t m, double ridge) {
    if (history.empty())
        throw std::invalid_argument("anderson_update: empty history");
    if (m < 1) throw std::invalid_argument("anderson_update: m must be >= 1");
    if (!(ridge >= 0.0))
        throw std::invalid_argument("anderson_update: ridge must be >= 0");

    const std::size_t win = std::min(m, history.size());
    const std::size_t first = history.size() - win;
    const std::size_t dim = history[first].iterate.size();
    for (std::size_t i = first; i < history.size(); ++i)
        if (history[i].iterate.size() != dim || history[i].residual.size() != dim)
            throw std::invalid_argument("anderson_update: inconsistent dimensions");

    AndersonStep out;
    out.coefficients.assign(win, 0.0);

    auto plain = [&] {
        const AndersonPair& last = history.back();
        out.next.resize(dim);
        for (std::size_t j = 0; j < dim; ++j)
            out.next[j] = last.iterate[j] + last.residual[j];
        out.coefficients.back() = 1.0;
    };

    if (win == 1) {
        plain();
        return out;
    }

    // Minimize ||R c||^2 + ridge ||c||^2 subject to 1'c = 1: the optimum is
    // proportional to (R'R + ridge I)^{-1} 1, normalized to unit sum.  The
    // ridge is applied relative to the residual scale (mean Gram diagonal),
    // otherwise it would swamp the system near convergence and stall the
    // iteration at the residual level where ||r||^2 ~ ridge.
    Eigen::MatrixXd gram(win, win);
    double trace = 0.0;
    for (std::size_t a = 0; a < win; ++a) {
        for (std::size_t b = a; b < win; ++b) {
            double dot = 0.0;
            const auto& ra = history[first + a].residual;
            const auto& rb = history[first + b].residual;
            for (std::size_t j = 0; j < dim; ++j) dot += ra[j] * rb[j];
            gram(a, b) = dot;
            gram(b, a) = dot;
        }
        trace += gram(a, a);
    }
    const double scale = trace > 0.0 ? trace / static_cast<double>(win) : 1.0;
    for (std::size_t a = 0; a < win; ++a) gram(a, a) += ridge * scale;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd sol;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
        sol = ldlt.solve(Eigen::VectorXd::Ones(win));
        ok = sol.allFinite();
    }
    double sum = ok ? sol.sum() : 0.0;
    if (!ok || std::abs(sum) < 1e-300) {
        std::cerr << "warning: anderson_update: singular coefficient system, "
                     "falling back to plain step\n";
        plain();
        out.fallback = true;
        return out;
    }

    out.next.assign(dim, 0.0);
    for (std::size_t a = 0; a < win; ++a) {
        const double c = sol(a) / sum;
        out.coefficients[a] = c;
        const AndersonPair& p = history[first + a];
        for (std::size_t j = 0; j < dim; ++j)
            out.next[j] += c * (p.iterate[j] + p.residual[j]);
    }
    return out;
}

}  // namespace rfqmm
