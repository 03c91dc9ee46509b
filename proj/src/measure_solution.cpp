#include "tcbsde/measure_solution.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tcbsde/parallel.hpp"
#include "tcbsde/stats.hpp"

namespace tcbsde {

Driver FactoredDriver::driver() const { return Driver::factored(g); }

FactoredDriver FactoredDriver::quadratic(double alpha) {
    FactoredDriver d;
    d.g = [alpha](double, double z, const PathContext&) { return alpha * z; };
    d.growth_c = std::abs(alpha);
    d.small_z_radius = 1.0;
    const double cap = std::abs(alpha);
    d.psi = [cap](double) { return cap; };
    return d;
}

FactoredDriver FactoredDriver::linear_in_z(double mu) {
    FactoredDriver d;
    d.g = [mu](double, double, const PathContext&) { return mu; };
    d.growth_c = std::abs(mu);
    d.small_z_radius = 1.0;
    const double cap = std::abs(mu);
    d.psi = [cap](double) { return cap; };
    return d;
}

AssumptionLattice AssumptionLattice::standard(double horizon) {
    AssumptionLattice lat;
    for (int j = 0; j < 8; ++j)
        lat.times.push_back(horizon * static_cast<double>(j) / 7.0);
    for (int j = 0; j <= 16; ++j)
        lat.z_values.push_back(-4.0 + 8.0 * static_cast<double>(j) / 16.0);
    return lat;
}

AssumptionReport check_assumption_H(const FactoredDriver& driver, const AssumptionLattice& lattice,
                                    const PathEnsemble* context) {
    if (!driver.g) throw std::invalid_argument("check_assumption_H: no g term");
    if (!driver.psi) throw std::invalid_argument("check_assumption_H: no small-z cap psi");
    if (lattice.times.empty() || lattice.z_values.size() < 2)
        throw std::invalid_argument("check_assumption_H: lattice too small");

    AssumptionReport rep;
    const double eps = driver.small_z_radius;
    double scale = 0.0;
    for (std::size_t p : lattice.paths) {
        const PathContext ctx{context, p};
        for (double t : lattice.times) {
            for (double z : lattice.z_values) {
                const double gv = driver.g(t, z, ctx);
                rep.max_growth_ratio =
                    std::max(rep.max_growth_ratio, std::abs(z * gv) / (1.0 + z * z));
            }
            for (int j = 0; j <= 8; ++j) {
                const double z = -eps + 2.0 * eps * static_cast<double>(j) / 8.0;
                const double gap = std::abs(driver.g(t, z, ctx)) - driver.psi(t);
                rep.max_small_z_gap = std::max(rep.max_small_z_gap, gap);
            }
            for (std::size_t j = 0; j + 1 < lattice.z_values.size(); ++j) {
                const double a = lattice.z_values[j];
                const double b = lattice.z_values[j + 1];
                const double ga = driver.g(t, a, ctx);
                const double gb = driver.g(t, b, ctx);
                scale = std::max({scale, std::abs(ga), std::abs(gb)});
                rep.coarse_modulus = std::max(rep.coarse_modulus, std::abs(gb - ga));
                double prev = ga;
                for (int s = 1; s <= 8; ++s) {
                    const double zs = a + (b - a) * static_cast<double>(s) / 8.0;
                    const double gs = driver.g(t, zs, ctx);
                    rep.fine_modulus = std::max(rep.fine_modulus, std::abs(gs - prev));
                    prev = gs;
                }
            }
        }
    }
    rep.continuity_ok = rep.fine_modulus <= 0.5 * rep.coarse_modulus + 1e-12 * (1.0 + scale);
    rep.growth_ok = rep.max_growth_ratio <= driver.growth_c + 1e-12;
    rep.small_z_ok = rep.max_small_z_gap <= 1e-12;
    return rep;
}

GirsanovPaths girsanov_density(const AdaptedProcess& g_values, const PathEnsemble& ensemble,
                               const StoppingTimeField& tau) {
    const std::size_t M = ensemble.path_count;
    const std::size_t N = ensemble.grid.steps;
    if (g_values.path_count != M || tau.size() != M)
        throw std::invalid_argument("girsanov_density: path counts differ");
    if (!g_values.grid.same_as(ensemble.grid))
        throw std::invalid_argument("girsanov_density: grids differ");

    GirsanovPaths out;
    out.density.resize(M);
    out.shifted_increments.resize(M * N);
    std::vector<double> logs(M, 0.0);
    const double dt = ensemble.grid.dt();
    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const std::size_t km = tau.index[m];
            double lg = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double dw = ensemble.increment(m, i);
                if (i < km) {
                    const double gv = g_values.value(m, i);
                    lg += gv * dw - 0.5 * gv * gv * dt;
                    out.shifted_increments[m * N + i] = dw - gv * dt;
                } else {
                    out.shifted_increments[m * N + i] = dw;
                }
            }
            if (lg > 700.0)
                throw std::overflow_error("girsanov_density: log density " + std::to_string(lg) +
                                          " overflows on path " + std::to_string(m));
            logs[m] = std::abs(lg);
            out.density[m] = std::exp(lg);
        }
    });
    for (double v : logs) out.max_log_density = std::max(out.max_log_density, v);
    return out;
}

MeasureSolution construct_measure_solution(const TerminalCondition& terminal,
                                           const FactoredDriver& driver,
                                           const PathEnsemble& ensemble,
                                           const StoppingTimeField& tau,
                                           const MeasureSolutionOptions& options) {
    const std::size_t M = ensemble.path_count;
    const std::size_t N = ensemble.grid.steps;
    const std::size_t W = N + 1;
    const double dt = ensemble.grid.dt();
    if (tau.size() != M)
        throw std::invalid_argument("construct_measure_solution: horizon size differs");
    if (options.max_iterations == 0)
        throw std::invalid_argument("construct_measure_solution: needs at least one iteration");

    MeasureSolution out;
    if (options.check_assumption) {
        out.assumption =
            check_assumption_H(driver, AssumptionLattice::standard(ensemble.grid.horizon), &ensemble);
        if (!out.assumption.ok()) {
            std::string what = "construct_measure_solution: standing assumption fails:";
            if (!out.assumption.growth_ok) what += " growth";
            if (!out.assumption.small_z_ok) what += " small-z";
            if (!out.assumption.continuity_ok) what += " continuity";
            throw std::invalid_argument(what);
        }
    }

    const std::vector<double> xi = evaluate_terminal(terminal, ensemble, tau);

    Solution& sol = out.solution;
    sol.grid = ensemble.grid;
    sol.path_count = M;
    sol.y.assign(M * W, 0.0);
    sol.z.assign(M * W, 0.0);

    AdaptedProcess gv;
    gv.grid = ensemble.grid;
    gv.path_count = M;
    gv.values.assign(M * W, 0.0);
    std::vector<double> gv_prev;

    std::vector<double> rxi(M), state(M), tz(M, 0.0);
    std::vector<double> step_change(N + 1, 0.0);
    std::vector<std::size_t> rows;
    rows.reserve(M);
    GirsanovPaths gp;

    bool first_pass = true;
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t m = lo; m < hi; ++m) {
                const PathContext ctx{&ensemble, m};
                const std::size_t km = tau.index[m];
                for (std::size_t i = 0; i < km; ++i)
                    gv.values[m * W + i] =
                        driver.g(ensemble.grid.point(i), sol.z[m * W + i], ctx);
            }
        });

        if (!first_pass) {
            double gdiff = 0.0;
            for (std::size_t j = 0; j < gv.values.size(); ++j)
                gdiff = std::max(gdiff, std::abs(gv.values[j] - gv_prev[j]));
            if (gdiff == 0.0) {
                // Exact fixed point of the reweighting: the next pass would
                // reproduce the current iterate verbatim.
                out.converged = true;
                out.iterations = it - 1;
                break;
            }
        }
        gv_prev = gv.values;
        first_pass = false;

        gp = girsanov_density(gv, ensemble, tau);
        const double mean_r = mean(gp.density);
        if (!(mean_r > 1e-8))
            throw std::runtime_error("construct_measure_solution: density collapsed, mean " +
                                     std::to_string(mean_r));
        for (std::size_t m = 0; m < M; ++m) rxi[m] = gp.density[m] * xi[m];

        std::fill(step_change.begin(), step_change.end(), 0.0);
        // Terminal level: frozen at xi from the horizon onward.
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t i = tau.index[m]; i <= N; ++i) {
                step_change[i] += std::abs(xi[m] - sol.y[m * W + i]);
                sol.y[m * W + i] = xi[m];
                sol.z[m * W + i] = 0.0;
            }
        }

        for (std::size_t step = N; step-- > 0;) {
            rows.clear();
            for (std::size_t m = 0; m < M; ++m)
                if (tau.index[m] > step) rows.push_back(m);
            if (rows.empty()) continue;

            for (std::size_t m = 0; m < M; ++m) state[m] = ensemble.level(m, step);
            StepRegression reg(options.basis, state, {}, rows);
            const std::vector<double> fit_r = reg.fitted(gp.density);
            const std::vector<double> fit_rxi = reg.fitted(rxi);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const std::size_t m = rows[r];
                if (!(std::abs(fit_r[r]) > 1e-6 * mean_r))
                    throw std::runtime_error(
                        "construct_measure_solution: degenerate conditional weight at step " +
                        std::to_string(step));
                const double ynew = fit_rxi[r] / fit_r[r];
                tz[m] = gp.density[m] * (sol.y[m * W + step + 1] - ynew) *
                        gp.shifted_increments[m * N + step];
                step_change[step] += std::abs(ynew - sol.y[m * W + step]);
                sol.y[m * W + step] = ynew;
            }
            const std::vector<double> fit_tz = reg.fitted(tz);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const std::size_t m = rows[r];
                const double z = fit_tz[r] / (fit_r[r] * dt);
                if (!std::isfinite(sol.y[m * W + step]) || !std::isfinite(z))
                    throw std::runtime_error("construct_measure_solution: non-finite value at step " +
                                             std::to_string(step));
                sol.z[m * W + step] = z;
            }
        }

        double change = 0.0;
        for (std::size_t i = 0; i <= N; ++i)
            change = std::max(change, step_change[i] / static_cast<double>(M));
        const double y0 = mean(rxi) / mean_r;
        out.history.push_back({it, y0, change});
        out.iterations = it;
        if (it >= 2 && change < options.tolerance) {
            out.converged = true;
            break;
        }
    }

    if (gp.density.empty())
        throw std::runtime_error("construct_measure_solution: no reweighting pass ran");
    out.density = std::move(gp.density);
    out.shifted_increments = std::move(gp.shifted_increments);
    out.max_log_density = gp.max_log_density;

    const double mean_r = mean(out.density);
    for (std::size_t m = 0; m < M; ++m) rxi[m] = out.density[m] * xi[m];
    sol.y0 = mean(rxi) / mean_r;
    std::vector<double> influence(M);
    for (std::size_t m = 0; m < M; ++m) influence[m] = rxi[m] - sol.y0 * out.density[m];
    sol.y0_se = standard_error(influence) / mean_r;
    return out;
}

IncrementResidual reweighted_increment_residual(const MeasureSolution& solution, std::size_t step) {
    const Solution& sol = solution.solution;
    const std::size_t M = sol.path_count;
    const std::size_t N = sol.grid.steps;
    const std::size_t W = N + 1;
    if (step >= N)
        throw std::invalid_argument("reweighted_increment_residual: step beyond the grid");
    std::vector<double> vals(M), part_dy(M), part_z(M);
    for (std::size_t m = 0; m < M; ++m) {
        const double dy = sol.y[m * W + step + 1] - sol.y[m * W + step];
        const double zdw = sol.z[m * W + step] * solution.shifted_increments[m * N + step];
        part_dy[m] = solution.density[m] * dy;
        part_z[m] = solution.density[m] * zdw;
        vals[m] = part_dy[m] - part_z[m];
    }
    IncrementResidual res;
    res.mean = mean(vals);
    // The cross-sectional fits couple the paths: the level part nearly
    // telescopes inside any one sample, so the spread of the pointwise
    // residual understates how the mean fluctuates across reruns. Error bar
    // from the two centered parts separately, no cancellation credit.
    const double se_dy = standard_error(part_dy);
    const double se_z = standard_error(part_z);
    res.se = std::sqrt(se_dy * se_dy + se_z * se_z);
    return res;
}

}  // namespace tcbsde
