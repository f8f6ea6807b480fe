// Benchmark of the backward-step kernel: OpenMP path vs the serial
// reference.  Reports per-step wall time and the speedup, and verifies on
// one step that both paths produce bitwise identical output (the serial
// sweep is the correctness reference for the parallel one).
//
// Usage: bench_kernels [steps] [q_max] [n_r]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rfqmm/config.hpp"
#include "rfqmm/hjb.hpp"

using namespace rfqmm;
using Clock = std::chrono::steady_clock;

namespace {

double time_steps(const BlockSolver& solver, std::vector<double>& a,
                  std::vector<double>& b, int steps, bool parallel) {
    const auto t0 = Clock::now();
    for (int i = 0; i < steps; ++i) {
        solver.step_backward(a, b, parallel);
        std::swap(a, b);
    }
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    const int steps = argc > 1 ? std::atoi(argv[1]) : 400;
    SolverConfig cfg = default_config();
    if (argc > 2) cfg.grid.q_max = std::atof(argv[2]);
    if (argc > 3) cfg.grid.n_r = std::atoi(argv[3]);
    cfg.validate();

    const GridSpec& g = cfg.grid;
    std::printf("grid: %d x %d cells, %zu sizes, dt = %.3g day\n", g.n_q(),
                g.n_r, cfg.model.n_sizes(), g.dt());
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif

    const BlockSolver solver(cfg.model, g);
    const std::size_t cells = std::size_t(g.n_q()) * std::size_t(g.n_r);

    // terminal condition of a block with a flat score profile
    std::vector<double> v0(cells), scratch(cells);
    for (int qi = 0; qi < g.n_q(); ++qi) {
        const double q = g.q_value(qi);
        for (int ri = 0; ri < g.n_r; ++ri)
            v0[std::size_t(qi) * g.n_r + ri] =
                -0.5 * cfg.model.risk.eta * q * q;
    }

    // correctness: serial and parallel steps must agree bitwise
    std::vector<double> out_serial(cells), out_parallel(cells);
    solver.step_backward(v0, out_serial, false);
    solver.step_backward(v0, out_parallel, true);
    const bool identical = std::memcmp(out_serial.data(), out_parallel.data(),
                                       cells * sizeof(double)) == 0;
    std::printf("bitwise agreement: %s\n", identical ? "yes" : "NO");

    // warm up, then measure
    std::vector<double> a = v0;
    time_steps(solver, a, scratch, std::min(steps, 16), true);

    a = v0;
    const double t_serial = time_steps(solver, a, scratch, steps, false);
    a = v0;
    const double t_parallel = time_steps(solver, a, scratch, steps, true);

    std::printf("serial:   %8.3f ms/step  (%.2f s total)\n",
                1e3 * t_serial / steps, t_serial);
    std::printf("parallel: %8.3f ms/step  (%.2f s total)\n",
                1e3 * t_parallel / steps, t_parallel);
    std::printf("speedup:  %.2fx\n", t_serial / t_parallel);

    return identical ? 0 : 1;
}
