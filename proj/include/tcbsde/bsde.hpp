#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "tcbsde/paths.hpp"
#include "tcbsde/time_change.hpp"

namespace tcbsde {

// Read-only handle a driver or coefficient process receives to look at its
// own path. Structural drivers (zero, quadratic, ...) ignore it; the ensemble
// pointer may then be null.
struct PathContext {
    const PathEnsemble* ensemble{nullptr};
    std::size_t path{0};
};

enum class DriverKind { zero, linear, quadratic_in_z, factored, custom };

// Generator of the ds-integral, f(t, y, z) with optional path dependence.
struct Driver {
    DriverKind kind{DriverKind::zero};
    std::function<double(double t, double y, double z, const PathContext&)> f;

    static Driver zero();
    static Driver linear_constants(double forcing, double beta, double mu);
    static Driver linear(std::function<double(double, const PathContext&)> forcing,
                         std::function<double(double, const PathContext&)> beta,
                         std::function<double(double, const PathContext&)> mu);
    static Driver quadratic(double alpha);  // f = alpha * z^2
    static Driver factored(std::function<double(double, double, const PathContext&)> g);  // f = z*g(t,z)
    static Driver custom(std::function<double(double, double, double, const PathContext&)> fn);
};

// Terminal payoff xi, a functional of the path up to its horizon index.
struct TerminalCondition {
    std::function<double(const PathEnsemble&, std::size_t path, std::size_t horizon_index)> value;

    static TerminalCondition constant(double c);
    static TerminalCondition brownian_at_horizon();          // W_tau
    static TerminalCondition tanh_brownian_at_horizon();     // tanh(W_tau)
    static TerminalCondition squared_brownian_at_horizon();  // W_tau^2
};

std::vector<double> evaluate_terminal(const TerminalCondition& terminal, const PathEnsemble& ensemble,
                                      const StoppingTimeField& horizon);

// Either a constant horizon (must equal the grid horizon) or a bounded
// stopping time on the grid.
using Horizon = std::variant<double, StoppingTimeField>;

struct BsdeProblem {
    Driver driver;
    TerminalCondition terminal;
    Horizon horizon;
    // Pathwise terminal values baked in by a transform; take precedence over
    // the evaluator when present.
    std::optional<std::vector<double>> terminal_values;
    // Original-time horizons tau_m of a transformed problem; enables the
    // auxiliary regression state phi_inverse(s) = s*tau.
    std::optional<std::vector<double>> transform_tau;

    std::vector<std::uint32_t> horizon_indices(const TimeGrid& grid, std::size_t path_count) const;
};

// Per-path (Y, Z) estimates on a grid; values are frozen at xi past the
// horizon index and Z is zero there (and at the terminal index).
struct Solution {
    TimeGrid grid;
    std::size_t path_count{};
    std::vector<double> y;  // [m * (steps + 1) + i]
    std::vector<double> z;
    double y0{};
    double y0_se{};

    double y_at(std::size_t m, std::size_t i) const { return y[m * (grid.steps + 1) + i]; }
    double z_at(std::size_t m, std::size_t i) const { return z[m * (grid.steps + 1) + i]; }
};

// Rewrites a stopping-time-horizon problem on the unit interval: driver
// s |-> tau * f(s*tau, y, z / sqrt(tau)), horizon 1, terminal unchanged.
BsdeProblem to_constant_horizon(const BsdeProblem& problem, const TimeChange& change,
                                const PathEnsemble& base);

// Inverse map at the solution level: Y_t = y_phi(t), Z_t = z_phi(t) * sqrt(phi'(t)),
// resampled on the original grid and frozen at xi past the horizon.
Solution map_solution_back(const Solution& transformed, const TimeChange& change,
                           const TimeGrid& original_grid, const StoppingTimeField& tau,
                           std::span<const double> terminal_values);

// Max |transformed quadratic driver - alpha z^2| over a sample lattice of
// (s, z, tau); an exact algebraic identity up to rounding.
double driver_invariance_check(double alpha, const StoppingTimeField& tau, const TimeGrid& grid);

}  // namespace tcbsde
