#include <doctest.h>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tcbsde/paths.hpp"
#include "tcbsde/stats.hpp"
#include "tcbsde/time_change.hpp"

using namespace tcbsde;

namespace {

StoppingTimeField field_at(const TimeGrid& grid, std::size_t paths, std::uint32_t index) {
    StoppingTimeField tau;
    tau.index.assign(paths, index);
    tau.cap = grid.horizon;
    return tau;
}

}  // namespace

TEST_CASE("proportional map basics") {
    const TimeGrid g = make_grid(1.0, 8);
    const TimeChange half = proportional_time_change(field_at(g, 2, 4), g);  // tau = 0.5
    CHECK(half.phi(0, 0.25) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(half.phi_inverse(0, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(half.phi_prime(1, 0.3) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(half.phi(0, 0.0) == 0.0);
    CHECK(half.horizon_time(0) == 0.5);

    const TimeChange unit = proportional_time_change(field_at(g, 2, 8), g);  // tau = 1
    for (double t : {0.0, 0.125, 0.6, 1.0}) CHECK(unit.phi(0, t) == t);
}

TEST_CASE("random horizon lands on one exactly") {
    const TimeGrid g = make_grid(1.0, 256);
    const PathEnsemble ens = sample_ensemble(g, 2000, 5);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);
    for (std::size_t m = 0; m < tau.size(); ++m) {
        CHECK(change.phi(m, tau.time(g, m)) == 1.0);
        CHECK(change.phi_inverse(m, 1.0) == tau.time(g, m));
    }
}

TEST_CASE("degenerate horizon is rejected") {
    const TimeGrid g = make_grid(1.0, 8);
    CHECK_THROWS_AS(proportional_time_change(field_at(g, 3, 0), g), std::invalid_argument);
    StoppingTimeField beyond = field_at(g, 3, 9);
    CHECK_THROWS_AS(proportional_time_change(beyond, g), std::invalid_argument);
}

TEST_CASE("inversion is an involution") {
    const TimeGrid g = make_grid(1.0, 64);
    const PathEnsemble ens = sample_ensemble(g, 200, 13);
    const StoppingTimeField tau = first_exit_time(ens, 0.9);
    const TimeChange change = proportional_time_change(tau, g);
    const TimeChange inv = change.inverted();
    const TimeChange back = inv.inverted();
    for (std::size_t m = 0; m < 50; ++m) {
        const double tm = change.horizon_time(m);
        for (double u : {0.0, 0.25, 0.7, 1.0}) {
            const double t = u * tm;
            CHECK(std::abs(inv.phi(m, change.phi(m, t)) - t) <= 1e-12);
            CHECK(std::abs(back.phi(m, t) - change.phi(m, t)) <= 1e-12);
            // Slopes are reciprocal at matched points.
            CHECK(std::abs(inv.phi_prime(m, change.phi(m, t)) * change.phi_prime(m, t) - 1.0) <=
                  1e-12);
        }
    }
}

TEST_CASE("custom maps invert through the stored inverse") {
    auto fwd = [](std::size_t, double t) { return t * t; };
    auto deriv = [](std::size_t, double t) { return 2.0 * t; };
    auto inv = [](std::size_t, double s) { return std::sqrt(s); };
    const TimeChange change = TimeChange::custom(fwd, deriv, inv, 4);
    const TimeChange flipped = change.inverted();
    for (double t : {0.1, 0.35, 0.8, 1.0}) {
        CHECK(std::abs(change.phi(2, t) - t * t) <= 1e-15);
        CHECK(std::abs(flipped.phi(2, t * t) - t) <= 1e-12);
        CHECK(std::abs(flipped.phi_prime(2, t * t) - 1.0 / (2.0 * t)) <= 1e-12);
        CHECK(std::abs(flipped.inverted().phi(2, t) - t * t) <= 1e-12);
    }
    CHECK_THROWS_AS(change.horizon_time(0), std::logic_error);
    CHECK_THROWS_AS(TimeChange::custom(fwd, nullptr, inv, 4), std::invalid_argument);
}

TEST_CASE("path sampling snaps near-grid times and interpolates between") {
    const TimeGrid g = make_grid(1.0, 4);
    const std::vector<double> row{0.0, 1.0, -1.0, 3.0, 2.0};
    const std::span<const double> v(row);
    CHECK(sample_path_value(v, g, 0.25) == 1.0);
    CHECK(sample_path_value(v, g, 0.25 + 1e-13) == 1.0);
    CHECK(sample_path_value(v, g, 0.25 - 1e-13) == 1.0);
    CHECK(sample_path_value(v, g, 0.375) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(sample_path_value(v, g, 0.8125) == doctest::Approx(2.75).epsilon(1e-14));
    CHECK(sample_path_value(v, g, 1.0) == 2.0);
    CHECK(sample_path_value(v, g, 0.0) == 0.0);
    CHECK_THROWS_AS(sample_path_value(v, g, 1.0 + 1e-6), std::out_of_range);
    CHECK_THROWS_AS(sample_path_value(v, g, -1e-6), std::out_of_range);
}

TEST_CASE("transport of simple processes") {
    const TimeGrid g = make_grid(1.0, 128);
    const PathEnsemble ens = sample_ensemble(g, 400, 19);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);
    const TimeGrid unit = make_grid(1.0, 64);

    // The identity-in-time process transports to s * tau_m.
    AdaptedProcess clock;
    clock.grid = g;
    clock.path_count = ens.path_count;
    clock.values.resize(ens.path_count * (g.steps + 1));
    for (std::size_t m = 0; m < ens.path_count; ++m)
        for (std::size_t i = 0; i <= g.steps; ++i)
            clock.values[m * (g.steps + 1) + i] = g.point(i);
    const AdaptedProcess moved = transport_process(clock, change, unit);
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        const double tm = change.horizon_time(m);
        for (std::size_t j = 0; j <= unit.steps; ++j) {
            const double expected = unit.point(j) * tm;
            CHECK(std::abs(moved.values[m * (unit.steps + 1) + j] - expected) <= 1e-12);
        }
    }

    const AdaptedProcess c = constant_process(g, ens.path_count, 2.5);
    const AdaptedProcess cm = transport_process(c, change, unit);
    for (double v : cm.values) CHECK(v == 2.5);
}

TEST_CASE("unit horizon transport is the identity on grid points") {
    const TimeGrid g = make_grid(1.0, 64);
    const PathEnsemble ens = sample_ensemble(g, 300, 43);
    const TimeChange change =
        proportional_time_change(constant_horizon_field(g, ens.path_count), g);
    const AdaptedProcess w = process_from_levels(ens);
    const AdaptedProcess moved = transport_process(w, change, g);
    for (std::size_t m = 0; m < ens.path_count; ++m)
        for (std::size_t i = 0; i <= g.steps; ++i)
            CHECK(moved.values[m * (g.steps + 1) + i] ==
                  doctest::Approx(ens.level(m, i)).epsilon(1e-14));
}

TEST_CASE("rescaled transformed path restricted to the unit horizon is the path") {
    const TimeGrid g = make_grid(1.0, 128);
    const PathEnsemble ens = sample_ensemble(g, 250, 47);
    const TimeChange change =
        proportional_time_change(constant_horizon_field(g, ens.path_count), g);
    const TransportedEnsemble tw = transformed_brownian(ens, change, g.steps);
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        CHECK(tw.horizon_time[m] == 1.0);
        for (std::size_t j = 0; j <= g.steps; ++j)
            CHECK(tw.level(m, j) == doctest::Approx(ens.level(m, j)).epsilon(1e-14));
    }
}

TEST_CASE("transformed path statistics") {
    const TimeGrid g = make_grid(1.0, 2048);
    const PathEnsemble ens = sample_ensemble(g, 2000, 53);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);
    const std::size_t coarse = 64;
    const TransportedEnsemble tw = transformed_brownian(ens, change, coarse);

    std::vector<double> ends(ens.path_count);
    std::vector<double> qv64(ens.path_count);
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        CHECK(tw.level(m, 0) == 0.0);
        ends[m] = tw.level(m, coarse);
        double q = 0.0;
        for (std::size_t j = 0; j < coarse; ++j) q += tw.increment(m, j) * tw.increment(m, j);
        qv64[m] = q;
    }
    CHECK(std::abs(mean(ends)) <= 3.0 * standard_error(ends));
    CHECK(mean(qv64) >= 0.95);
    CHECK(mean(qv64) <= 1.05);

    // Refining the transformed grid below the surviving resolution of the
    // interpolated path can only shed quadratic variation.
    const TransportedEnsemble fine = transformed_brownian(ens, change, 512);
    std::vector<double> qv512(ens.path_count);
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        double q = 0.0;
        for (std::size_t j = 0; j < 512; ++j) q += fine.increment(m, j) * fine.increment(m, j);
        qv512[m] = q;
    }
    CHECK(mean(qv512) <= mean(qv64));
}

TEST_CASE("transport there and back stays within the path modulus") {
    const TimeGrid g = make_grid(1.0, 256);
    const PathEnsemble ens = sample_ensemble(g, 500, 59);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);

    double shortest = g.horizon;
    for (std::size_t m = 0; m < tau.size(); ++m)
        shortest = std::min(shortest, tau.time(g, m));
    REQUIRE(shortest > 0.0);

    const TimeGrid unit = make_grid(1.0, 256);
    const AdaptedProcess w = process_from_levels(ens);
    const AdaptedProcess out = transport_process(w, change, unit);
    const std::size_t back_steps = std::max<std::size_t>(8, std::size_t(shortest * 256));
    const TimeGrid target = make_grid(shortest, back_steps);
    const AdaptedProcess back = transport_process(out, change.inverted(), target);

    for (std::size_t m = 0; m < ens.path_count; ++m) {
        double modulus = 0.0;
        for (std::size_t i = 0; i < g.steps; ++i)
            modulus = std::max(modulus, std::abs(ens.increment(m, i)));
        for (std::size_t i = 0; i <= target.steps; ++i) {
            const double truth = sample_path_value(
                std::span<const double>(ens.levels).subspan(m * (g.steps + 1), g.steps + 1), g,
                target.point(i));
            CHECK(std::abs(back.values[m * (target.steps + 1) + i] - truth) <= 2.0 * modulus);
        }
    }
}

TEST_CASE("increments after the transform have conditionally centered signs") {
    // Horizons chosen independently of the paths, so the per-path rescaling
    // cannot leak anything about the increments it divides.
    const std::size_t n = 1024;
    const TimeGrid g = make_grid(1.0, n);
    const PathEnsemble ens = sample_ensemble(g, 4000, 61);
    StoppingTimeField tau;
    tau.index.resize(ens.path_count);
    tau.cap = g.horizon;
    for (std::size_t m = 0; m < ens.path_count; ++m)
        tau.index[m] = static_cast<std::uint32_t>((m % 4 + 1) * (n / 4));
    const TimeChange change = proportional_time_change(tau, g);
    const std::size_t k = 64;
    const TransportedEnsemble tw = transformed_brownian(ens, change, k);

    std::vector<double> up, down;
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        double later = tw.level(m, k) - tw.level(m, k / 2);
        (tw.level(m, k / 2) >= 0.0 ? up : down).push_back(later);
    }
    REQUIRE(up.size() > 100);
    REQUIRE(down.size() > 100);
    CHECK(std::abs(mean(up)) <= 3.0 * standard_error(up));
    CHECK(std::abs(mean(down)) <= 3.0 * standard_error(down));
}

TEST_CASE("first-exit horizons bias the conditional increment means") {
    // With tau = first exit, the rescaling anticipates the exit side: a
    // positive midpoint of the rescaled path predicts exit at +1, so the
    // later increment is conditionally positive, not centered. This pins the
    // boundary of the construction rather than a defect of it.
    const TimeGrid g = make_grid(1.0, 1024);
    const PathEnsemble ens = sample_ensemble(g, 4000, 61);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);
    const std::size_t k = 64;
    const TransportedEnsemble tw = transformed_brownian(ens, change, k);

    std::vector<double> up, down;
    for (std::size_t m = 0; m < ens.path_count; ++m) {
        double later = tw.level(m, k) - tw.level(m, k / 2);
        (tw.level(m, k / 2) >= 0.0 ? up : down).push_back(later);
    }
    REQUIRE(up.size() > 100);
    REQUIRE(down.size() > 100);
    CHECK(mean(up) > 5.0 * standard_error(up));
    CHECK(mean(down) < -5.0 * standard_error(down));
}

TEST_CASE("integral transport identities") {
    const TimeGrid g = make_grid(1.0, 256);
    const PathEnsemble ens = sample_ensemble(g, 1000, 67);
    const StoppingTimeField tau = first_exit_time(ens, 1.0);
    const TimeChange change = proportional_time_change(tau, g);
    StoppingTimeField start;
    start.index.assign(ens.path_count, 0);
    start.cap = g.horizon;

    const AdaptedProcess zero = constant_process(g, ens.path_count, 0.0);
    const TransportDiscrepancy z = verify_integral_transport(zero, ens, change, start, tau, 64);
    CHECK(z.max_abs == 0.0);

    // A constant integrand telescopes on both sides, so the gap collapses.
    const AdaptedProcess one = constant_process(g, ens.path_count, 1.0);
    const TransportDiscrepancy o = verify_integral_transport(one, ens, change, start, tau, 64);
    CHECK(o.max_abs <= 1e-12);

    CHECK_THROWS_AS(verify_integral_transport(one, ens, change, tau, start, 64),
                    std::invalid_argument);
}

TEST_CASE("integral transport gap shrinks under refinement") {
    // X = W from a 1024-step grid, halving dt twice. The transformed-side
    // resolution scales with the grid so both discretizations refine together.
    std::vector<double> gaps;
    std::vector<double> sizes;
    for (const std::size_t steps : {1024u, 2048u, 4096u}) {
        const TimeGrid g = make_grid(1.0, steps);
        const PathEnsemble ens = sample_ensemble(g, 2000, 71);
        const StoppingTimeField tau = first_exit_time(ens, 1.0);
        const TimeChange change = proportional_time_change(tau, g);
        StoppingTimeField start;
        start.index.assign(ens.path_count, 0);
        start.cap = g.horizon;
        const AdaptedProcess w = process_from_levels(ens);
        const TransportDiscrepancy d =
            verify_integral_transport(w, ens, change, start, tau, steps / 8);
        gaps.push_back(d.mean_abs);
        sizes.push_back(static_cast<double>(steps));
        // Gap stays below a fixed multiple of sqrt(dt).
        CHECK(d.mean_abs <= 1.5 / std::sqrt(static_cast<double>(steps)));
    }
    CHECK(gaps[1] < gaps[0]);
    CHECK(gaps[2] < gaps[1]);
    // Least-squares slope of log(gap) against log(1/N).
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double x = -std::log(sizes[i]);
        const double y = std::log(gaps[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    CHECK(slope >= 0.4);
}
