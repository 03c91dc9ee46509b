#include "tcbsde/solver.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tcbsde/parallel.hpp"
#include "tcbsde/stats.hpp"

namespace tcbsde {

LinearDriverSpec LinearDriverSpec::constants(double forcing, double beta, double mu) {
    LinearDriverSpec s;
    s.forcing = [forcing](double, const PathContext&) { return forcing; };
    s.beta = [beta](double, const PathContext&) { return beta; };
    s.mu = [mu](double, const PathContext&) { return mu; };
    s.beta_bound = std::abs(beta);
    s.mu_bound = std::abs(mu);
    return s;
}

Driver LinearDriverSpec::driver() const { return Driver::linear(forcing, beta, mu); }

namespace {

void spot_check_bounds(const LinearDriverSpec& spec, const PathEnsemble& ensemble) {
    if (spec.beta_bound < 0.0 && spec.mu_bound < 0.0) return;
    const std::size_t mstride = std::max<std::size_t>(1, ensemble.path_count / 8);
    const std::size_t istride = std::max<std::size_t>(1, ensemble.grid.steps / 16);
    for (std::size_t m = 0; m < ensemble.path_count; m += mstride) {
        const PathContext ctx{&ensemble, m};
        for (std::size_t i = 0; i <= ensemble.grid.steps; i += istride) {
            const double t = ensemble.grid.point(i);
            if (spec.beta_bound >= 0.0 && std::abs(spec.beta(t, ctx)) > spec.beta_bound + 1e-12)
                throw std::invalid_argument("linear driver: beta exceeds its declared bound");
            if (spec.mu_bound >= 0.0 && std::abs(spec.mu(t, ctx)) > spec.mu_bound + 1e-12)
                throw std::invalid_argument("linear driver: mu exceeds its declared bound");
        }
    }
}

// Fills values[0..steps] with the log-Euler exponential anchored at 1.
void adjoint_path(const LinearDriverSpec& spec, const PathEnsemble& ensemble, std::size_t m,
                  std::size_t anchor, double* values, double* max_log) {
    const TimeGrid& grid = ensemble.grid;
    const double dt = grid.dt();
    const PathContext ctx{&ensemble, m};
    for (std::size_t i = 0; i <= anchor; ++i) values[i] = 1.0;
    double lg = 0.0;
    for (std::size_t i = anchor; i < grid.steps; ++i) {
        const double t = grid.point(i);
        const double b = spec.beta(t, ctx);
        const double u = spec.mu(t, ctx);
        lg += (b - 0.5 * u * u) * dt + u * ensemble.increment(m, i);
        if (lg > 700.0)
            throw std::overflow_error("adjoint exponent " + std::to_string(lg) +
                                      " overflows at step " + std::to_string(i + 1));
        *max_log = std::max(*max_log, std::abs(lg));
        values[i + 1] = std::exp(lg);
    }
}

struct DrivingView {
    const TimeGrid* grid;
    std::size_t paths;
    const double* levels;      // stride steps + 1
    const double* increments;  // stride steps
};

Solution solve_on_view(const BsdeProblem& problem, const DrivingView& view,
                       const PathEnsemble& ctx_ensemble, const RegressionBasis& basis,
                       SolverDiagnostics* diagnostics) {
    const TimeGrid& grid = *view.grid;
    const std::size_t N = grid.steps;
    const std::size_t M = view.paths;
    const std::size_t W = N + 1;
    const double dt = grid.dt();

    const std::vector<std::uint32_t> k = problem.horizon_indices(grid, M);
    std::vector<double> xi;
    if (problem.terminal_values) {
        xi = *problem.terminal_values;
        if (xi.size() != M)
            throw std::invalid_argument("solve_backward_regression: baked terminal values have the "
                                        "wrong length");
    } else {
        StoppingTimeField field{k, grid.horizon};
        xi = evaluate_terminal(problem.terminal, ctx_ensemble, field);
    }

    Solution sol;
    sol.grid = grid;
    sol.path_count = M;
    sol.y.assign(M * W, 0.0);
    sol.z.assign(M * W, 0.0);
    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m)
            for (std::size_t i = k[m]; i <= N; ++i) sol.y[m * W + i] = xi[m];
    });

    const bool have_aux = problem.transform_tau.has_value();
    if (have_aux && problem.transform_tau->size() != M)
        throw std::invalid_argument("solve_backward_regression: transform horizons have the wrong "
                                    "length");

    std::vector<double> state(M), ynext(M), target(M, 0.0), aux;
    if (have_aux) aux.resize(M);
    // Raw per-path accumulation xi + sum f dt. Its mean telescopes to y0, so
    // its spread is the sampling error of the estimate; the fitted chain's
    // spread would understate it.
    std::vector<double> acc(xi);
    std::vector<std::size_t> rows;
    rows.reserve(M);

    for (std::size_t step = N; step-- > 0;) {
        rows.clear();
        for (std::size_t m = 0; m < M; ++m)
            if (k[m] > step) rows.push_back(m);
        if (rows.empty()) continue;

        const double t = grid.point(step);
        par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t m = lo; m < hi; ++m) {
                state[m] = view.levels[m * W + step];
                ynext[m] = sol.y[m * W + step + 1];
                if (have_aux) aux[m] = t * (*problem.transform_tau)[m];
            }
        });

        StepRegression reg(basis, state, have_aux ? std::span<const double>(aux)
                                                  : std::span<const double>(),
                           rows);
        const std::vector<double> yhat = reg.fitted(ynext);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t m = rows[r];
            target[m] = (ynext[m] - yhat[r]) * view.increments[m * N + step];
        }
        const std::vector<double> zfit = reg.fitted(target);

        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t m = rows[r];
            const double z = zfit[r] / dt;
            const double f = problem.driver.f(t, ynext[m], z, PathContext{&ctx_ensemble, m});
            const double y = yhat[r] + f * dt;
            if (!std::isfinite(y) || !std::isfinite(z))
                throw std::runtime_error("solve_backward_regression: non-finite value at step " +
                                         std::to_string(step));
            sol.y[m * W + step] = y;
            sol.z[m * W + step] = z;
            acc[m] += f * dt;
        }
        if (diagnostics)
            diagnostics->fits.push_back(
                {step, rows.size(), reg.condition(), reg.dropped_columns()});
    }

    for (std::size_t m = 0; m < M; ++m) ynext[m] = sol.y[m * W];
    sol.y0 = M > 0 ? mean(ynext) : 0.0;
    sol.y0_se = standard_error(acc);
    return sol;
}

}  // namespace

AdjointEnsemble simulate_adjoint(const LinearDriverSpec& spec, const PathEnsemble& ensemble,
                                 std::size_t anchor_index) {
    if (!spec.beta || !spec.mu)
        throw std::invalid_argument("simulate_adjoint: beta and mu coefficients are required");
    if (anchor_index > ensemble.grid.steps)
        throw std::invalid_argument("simulate_adjoint: anchor beyond the grid");
    spot_check_bounds(spec, ensemble);

    AdjointEnsemble adj;
    adj.grid = ensemble.grid;
    adj.path_count = ensemble.path_count;
    adj.anchor = anchor_index;
    adj.values.assign(ensemble.path_count * (ensemble.grid.steps + 1), 1.0);
    std::vector<double> max_log(ensemble.path_count, 0.0);
    par::parallel_for(std::size_t{0}, ensemble.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m)
            adjoint_path(spec, ensemble, m, anchor_index,
                         adj.values.data() + m * (ensemble.grid.steps + 1), &max_log[m]);
    });
    for (double v : max_log) adj.max_log = std::max(adj.max_log, v);
    return adj;
}

Solution solve_backward_regression(const BsdeProblem& problem, const PathEnsemble& ensemble,
                                   const RegressionBasis& basis, SolverDiagnostics* diagnostics) {
    DrivingView view{&ensemble.grid, ensemble.path_count, ensemble.levels.data(),
                     ensemble.increments.data()};
    return solve_on_view(problem, view, ensemble, basis, diagnostics);
}

Solution solve_backward_regression(const BsdeProblem& problem, const TransportedEnsemble& driving,
                                   const PathEnsemble& base, const RegressionBasis& basis,
                                   SolverDiagnostics* diagnostics) {
    if (!problem.terminal_values)
        throw std::invalid_argument("solve_backward_regression: a transported solve needs baked "
                                    "terminal values");
    if (driving.path_count != base.path_count)
        throw std::invalid_argument("solve_backward_regression: path counts differ");
    DrivingView view{&driving.grid, driving.path_count, driving.levels.data(),
                     driving.increments.data()};
    return solve_on_view(problem, view, base, basis, diagnostics);
}

Solution linear_explicit(const LinearDriverSpec& spec, const TerminalCondition& terminal,
                         const StoppingTimeField& tau, const PathEnsemble& ensemble,
                         const RegressionBasis& basis, SolverDiagnostics* diagnostics) {
    if (!spec.forcing || !spec.beta || !spec.mu)
        throw std::invalid_argument("linear_explicit: all three coefficients are required");
    if (tau.size() != ensemble.path_count)
        throw std::invalid_argument("linear_explicit: horizon size differs from path count");
    spot_check_bounds(spec, ensemble);

    const TimeGrid& grid = ensemble.grid;
    const std::size_t N = grid.steps;
    const std::size_t M = ensemble.path_count;
    const std::size_t W = N + 1;
    const double dt = grid.dt();
    const std::vector<double> xi = evaluate_terminal(terminal, ensemble, tau);

    // Time-major targets: H[i][m] = (xi G_k + sum_{j in [i,k)} G_j a_j dt) / G_i,
    // the pathwise value whose conditional mean is Y_i; xi past the horizon.
    std::vector<double> targets(W * M);
    std::vector<double> max_log(M, 0.0);
    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> g(W);
        for (std::size_t m = lo; m < hi; ++m) {
            adjoint_path(spec, ensemble, m, 0, g.data(), &max_log[m]);
            const std::size_t km = tau.index[m];
            const PathContext ctx{&ensemble, m};
            double s = xi[m] * g[km];
            for (std::size_t i = km; i <= N; ++i) targets[i * M + m] = xi[m];
            for (std::size_t i = km; i-- > 0;) {
                s += g[i] * spec.forcing(grid.point(i), ctx) * dt;
                const double h = s / g[i];
                if (!std::isfinite(h))
                    throw std::runtime_error("linear_explicit: non-finite target at step " +
                                             std::to_string(i));
                targets[i * M + m] = h;
            }
        }
    });

    Solution sol;
    sol.grid = grid;
    sol.path_count = M;
    sol.y.assign(M * W, 0.0);
    sol.z.assign(M * W, 0.0);
    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m)
            for (std::size_t i = tau.index[m]; i <= N; ++i) sol.y[m * W + i] = xi[m];
    });

    std::vector<double> state(M), ynext(M), target2(M, 0.0);
    std::vector<std::size_t> rows;
    rows.reserve(M);
    for (std::size_t step = N; step-- > 0;) {
        rows.clear();
        for (std::size_t m = 0; m < M; ++m)
            if (tau.index[m] > step) rows.push_back(m);
        if (rows.empty()) continue;

        par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t m = lo; m < hi; ++m) {
                state[m] = ensemble.levels[m * W + step];
                ynext[m] = sol.y[m * W + step + 1];
            }
        });

        StepRegression reg(basis, state, {}, rows);
        const std::span<const double> h_step{targets.data() + step * M, M};
        const std::vector<double> yfit = reg.fitted(h_step);
        const std::vector<double> yhat = reg.fitted(ynext);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t m = rows[r];
            target2[m] = (ynext[m] - yhat[r]) * ensemble.increment(m, step);
        }
        const std::vector<double> zfit = reg.fitted(target2);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::size_t m = rows[r];
            if (!std::isfinite(yfit[r]))
                throw std::runtime_error("linear_explicit: non-finite fit at step " +
                                         std::to_string(step));
            sol.y[m * W + step] = yfit[r];
            sol.z[m * W + step] = zfit[r] / dt;
        }
        if (diagnostics)
            diagnostics->fits.push_back(
                {step, rows.size(), reg.condition(), reg.dropped_columns()});
    }

    const std::span<const double> h0{targets.data(), M};
    sol.y0 = mean(h0);
    sol.y0_se = standard_error(h0);
    return sol;
}

ColeHopfEstimate cole_hopf_reference(double alpha, std::span<const double> terminal_values) {
    if (alpha == 0.0)
        throw std::invalid_argument("cole_hopf_reference: alpha must be nonzero");
    if (terminal_values.empty())
        throw std::invalid_argument("cole_hopf_reference: no terminal values");
    ColeHopfEstimate est;
    for (double v : terminal_values)
        est.max_exponent = std::max(est.max_exponent, std::abs(2.0 * alpha * v));
    if (est.max_exponent > 700.0)
        throw std::overflow_error("cole_hopf_reference: exponent " +
                                  std::to_string(est.max_exponent) + " overflows");
    std::vector<double> e(terminal_values.size());
    for (std::size_t m = 0; m < e.size(); ++m) e[m] = std::exp(2.0 * alpha * terminal_values[m]);
    const double me = mean(e);
    if (me <= 0.0) throw std::runtime_error("cole_hopf_reference: degenerate exponential mean");
    est.y0 = std::log(me) / (2.0 * alpha);
    est.se = standard_error(e) / (me * std::abs(2.0 * alpha));
    return est;
}

}  // namespace tcbsde
