#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tcbsde/bsde.hpp"
#include "tcbsde/measure_solution.hpp"
#include "tcbsde/paths.hpp"
#include "tcbsde/solver.hpp"
#include "tcbsde/stats.hpp"

using namespace tcbsde;

TEST_CASE("factored drivers expand to their product form") {
    const FactoredDriver q = FactoredDriver::quadratic(0.25);
    const Driver d = q.driver();
    CHECK(d.f(0.1, 2.0, -3.0, PathContext{}) == doctest::Approx(0.25 * 9.0).epsilon(1e-15));
    const FactoredDriver l = FactoredDriver::linear_in_z(0.4);
    CHECK(l.driver().f(0.0, 0.0, 5.0, PathContext{}) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("standing assumption verdicts") {
    const AssumptionLattice lattice = AssumptionLattice::standard(1.0);

    SUBCASE("a proportional factor passes every clause") {
        const AssumptionReport rep = check_assumption_H(FactoredDriver::quadratic(0.25), lattice);
        CHECK(rep.growth_ok);
        CHECK(rep.small_z_ok);
        CHECK(rep.continuity_ok);
        CHECK(rep.ok());
        CHECK(rep.max_growth_ratio <= 0.25 + 1e-12);
        CHECK(rep.fine_modulus <= 0.5 * rep.coarse_modulus + 1e-9);
    }

    SUBCASE("a constant factor passes") {
        CHECK(check_assumption_H(FactoredDriver::linear_in_z(0.3), lattice).ok());
    }

    SUBCASE("an understated growth envelope fails the growth clause") {
        FactoredDriver d = FactoredDriver::quadratic(1.0);
        d.growth_c = 0.5;
        const AssumptionReport rep = check_assumption_H(d, lattice);
        CHECK_FALSE(rep.growth_ok);
        CHECK(rep.max_growth_ratio > 0.5);
    }

    SUBCASE("a jump in the factor fails the scale test") {
        FactoredDriver d;
        d.g = [](double, double z, const PathContext&) { return z >= 0.3 ? 1.0 : 0.0; };
        d.growth_c = 2.0;
        d.small_z_radius = 1.0;
        d.psi = [](double) { return 1.0; };
        const AssumptionReport rep = check_assumption_H(d, lattice);
        CHECK_FALSE(rep.continuity_ok);
        CHECK_FALSE(rep.ok());
    }

    SUBCASE("a factor exceeding psi near zero fails the small-z clause") {
        FactoredDriver d = FactoredDriver::linear_in_z(0.5);
        d.psi = [](double) { return 0.1; };
        const AssumptionReport rep = check_assumption_H(d, lattice);
        CHECK_FALSE(rep.small_z_ok);
        CHECK(rep.max_small_z_gap > 0.0);
    }
}

TEST_CASE("reweighting densities") {
    const TimeGrid g = make_grid(1.0, 64);
    const PathEnsemble ens = sample_ensemble(g, 8000, 211);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);

    SUBCASE("a vanishing factor leaves the measure alone") {
        const AdaptedProcess zero = constant_process(g, ens.path_count, 0.0);
        const GirsanovPaths gp = girsanov_density(zero, ens, tau);
        for (double r : gp.density) CHECK(r == 1.0);
        CHECK(gp.max_log_density == 0.0);
        CHECK(gp.shifted_increments == ens.increments);
    }

    SUBCASE("a constant factor tilts with unit mean") {
        const AdaptedProcess c = constant_process(g, ens.path_count, 0.3);
        const GirsanovPaths gp = girsanov_density(c, ens, tau);
        CHECK(std::abs(mean(gp.density) - 1.0) <= 3.0 * standard_error(gp.density));
        double lowest = 1e300;
        for (double r : gp.density) lowest = std::min(lowest, r);
        CHECK(lowest > 0.0);
        // Shifted increments subtract g dt before the horizon only.
        for (std::size_t m = 0; m < ens.path_count; m += 500) {
            for (std::size_t i = 0; i < g.steps; ++i) {
                const double want = i < tau.index[m]
                                        ? ens.increment(m, i) - 0.3 * g.dt()
                                        : ens.increment(m, i);
                CHECK(gp.shifted_increments[m * g.steps + i] ==
                      doctest::Approx(want).epsilon(1e-15));
            }
        }
    }

    SUBCASE("log overflow is a hard error") {
        // Per step the log density g dW - g^2 dt / 2 is at most dW^2 / (2 dt),
        // taken at g = dW / dt; a constant factor can never overflow against a
        // barrier horizon. Alignment over a long grid can.
        const TimeGrid fine = make_grid(1.0, 2048);
        const PathEnsemble few = sample_ensemble(fine, 4, 211);
        AdaptedProcess aligned;
        aligned.grid = fine;
        aligned.path_count = few.path_count;
        aligned.values.assign(few.path_count * (fine.steps + 1), 0.0);
        for (std::size_t m = 0; m < few.path_count; ++m)
            for (std::size_t i = 0; i < fine.steps; ++i)
                aligned.values[m * (fine.steps + 1) + i] = few.increment(m, i) / fine.dt();
        const StoppingTimeField full = constant_horizon_field(fine, few.path_count);
        CHECK_THROWS_AS(girsanov_density(aligned, few, full), std::overflow_error);
    }

    SUBCASE("mismatched shapes are rejected") {
        const AdaptedProcess other = constant_process(g, ens.path_count + 1, 0.0);
        CHECK_THROWS_AS(girsanov_density(other, ens, tau), std::invalid_argument);
    }
}

TEST_CASE("fixed point with no factored term converges immediately") {
    const TimeGrid g = make_grid(1.0, 64);
    const PathEnsemble ens = sample_ensemble(g, 8000, 223);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const MeasureSolution ms = construct_measure_solution(
        TerminalCondition::brownian_at_horizon(), FactoredDriver::linear_in_z(0.0), ens, tau);
    CHECK(ms.converged);
    CHECK(ms.iterations == 1);
    CHECK(ms.assumption.ok());
    for (double r : ms.density) CHECK(r == 1.0);

    std::vector<double> xi(ens.path_count);
    for (std::size_t m = 0; m < ens.path_count; ++m) xi[m] = ens.level(m, tau.index[m]);
    CHECK(std::abs(ms.solution.y0 - mean(xi)) <= 1e-12);

    for (std::size_t probe : {std::size_t{5}, std::size_t{31}, std::size_t{50}}) {
        const IncrementResidual res = reweighted_increment_residual(ms, probe);
        CHECK(std::abs(res.mean) <= 3.0 * res.se);
    }
}

TEST_CASE("fixed point under a proportional factor matches the other routes") {
    const TimeGrid g = make_grid(1.0, 64);
    const PathEnsemble ens = sample_ensemble(g, 10000, 227);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const FactoredDriver fd = FactoredDriver::quadratic(0.25);
    const MeasureSolution ms = construct_measure_solution(
        TerminalCondition::tanh_brownian_at_horizon(), fd, ens, tau);
    REQUIRE(ms.converged);
    CHECK(ms.iterations <= 50);
    CHECK(ms.history.size() >= 2);

    CHECK(std::abs(mean(ms.density) - 1.0) <= 3.0 * standard_error(ms.density));
    double lowest = 1e300;
    for (double r : ms.density) lowest = std::min(lowest, r);
    CHECK(lowest > 0.0);
    CHECK(ms.max_log_density > 0.0);

    BsdeProblem p;
    p.driver = fd.driver();
    p.terminal = TerminalCondition::tanh_brownian_at_horizon();
    p.horizon = tau;
    const Solution direct = solve_backward_regression(p, ens, RegressionBasis::polynomial());
    const double tol = 3.0 * (ms.solution.y0_se + direct.y0_se) +
                       0.02 * std::max(std::abs(ms.solution.y0), std::abs(direct.y0));
    CHECK(std::abs(ms.solution.y0 - direct.y0) <= tol);

    const std::vector<double> xi =
        evaluate_terminal(TerminalCondition::tanh_brownian_at_horizon(), ens, tau);
    const ColeHopfEstimate ch = cole_hopf_reference(0.25, xi);
    const double tol2 = 3.0 * (ms.solution.y0_se + ch.se) +
                        0.02 * std::max(std::abs(ms.solution.y0), std::abs(ch.y0));
    CHECK(std::abs(ms.solution.y0 - ch.y0) <= tol2);

    for (std::size_t probe : {std::size_t{8}, std::size_t{32}, std::size_t{48}}) {
        const IncrementResidual res = reweighted_increment_residual(ms, probe);
        CHECK(std::abs(res.mean) <= 3.0 * res.se);
    }
}

TEST_CASE("assumption failures block the construction unless disabled") {
    const TimeGrid g = make_grid(1.0, 16);
    const PathEnsemble ens = sample_ensemble(g, 500, 229);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    FactoredDriver bad = FactoredDriver::quadratic(1.0);
    bad.growth_c = 0.25;  // understates the true envelope
    CHECK_THROWS_AS(construct_measure_solution(TerminalCondition::brownian_at_horizon(), bad, ens,
                                               tau),
                    std::invalid_argument);
    MeasureSolutionOptions opts;
    opts.check_assumption = false;
    opts.max_iterations = 8;
    CHECK_NOTHROW(construct_measure_solution(TerminalCondition::brownian_at_horizon(), bad, ens,
                                             tau, opts));
}

TEST_CASE("iteration budget must be positive") {
    const TimeGrid g = make_grid(1.0, 8);
    const PathEnsemble ens = sample_ensemble(g, 100, 233);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    MeasureSolutionOptions opts;
    opts.max_iterations = 0;
    CHECK_THROWS_AS(construct_measure_solution(TerminalCondition::brownian_at_horizon(),
                                               FactoredDriver::linear_in_z(0.0), ens, tau, opts),
                    std::invalid_argument);
}

TEST_CASE("residual probes validate their step index") {
    const TimeGrid g = make_grid(1.0, 8);
    const PathEnsemble ens = sample_ensemble(g, 200, 239);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const MeasureSolution ms = construct_measure_solution(
        TerminalCondition::brownian_at_horizon(), FactoredDriver::linear_in_z(0.0), ens, tau);
    CHECK_THROWS_AS(reweighted_increment_residual(ms, 8), std::invalid_argument);
}
