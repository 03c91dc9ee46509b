#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tcbsde/bsde.hpp"
#include "tcbsde/paths.hpp"
#include "tcbsde/regression.hpp"

namespace tcbsde {

// Driver factored through the martingale term, f(t, y, z) = z * g(t, z),
// together with the declared envelope of the standing assumption: quadratic
// growth of f, and a cap psi on |g| near z = 0.
struct FactoredDriver {
    std::function<double(double t, double z, const PathContext&)> g;
    double growth_c{};
    double small_z_radius{1.0};
    std::function<double(double t)> psi;

    Driver driver() const;
    static FactoredDriver quadratic(double alpha);   // g = alpha z
    static FactoredDriver linear_in_z(double mu);    // g = mu
};

struct AssumptionLattice {
    std::vector<double> times;
    std::vector<double> z_values;
    std::vector<std::size_t> paths{0};

    static AssumptionLattice standard(double horizon);
};

// Sampled verdict on the standing assumption. Continuity in z is judged by a
// scale test: halving-style refinement must shrink the adjacent-difference
// modulus, which passes Hoelder-continuous g and fails jumps.
struct AssumptionReport {
    bool growth_ok{};
    double max_growth_ratio{};  // max |f| / (1 + z^2)
    bool small_z_ok{};
    double max_small_z_gap{};   // max |g| - psi over |z| <= radius
    bool continuity_ok{};
    double coarse_modulus{};
    double fine_modulus{};

    bool ok() const { return growth_ok && small_z_ok && continuity_ok; }
};

AssumptionReport check_assumption_H(const FactoredDriver& driver, const AssumptionLattice& lattice,
                                    const PathEnsemble* context = nullptr);

// Exponential reweighting along a field of g values: per path the density
// R = exp(sum g dW - g^2 dt / 2) up to the horizon, and the increments of
// the shifted driver dW - g dt (untouched past the horizon).
struct GirsanovPaths {
    std::vector<double> density;
    std::vector<double> shifted_increments;  // [m * steps + i]
    double max_log_density{};
};

GirsanovPaths girsanov_density(const AdaptedProcess& g_values, const PathEnsemble& ensemble,
                               const StoppingTimeField& tau);

struct MeasureIterate {
    std::size_t iteration{};
    double y0{};
    double change{};  // max over steps of the cross-path mean |Y - Y_prev|
};

struct MeasureSolutionOptions {
    std::size_t max_iterations{50};
    double tolerance{1e-4};
    RegressionBasis basis{};
    bool check_assumption{true};
};

struct MeasureSolution {
    Solution solution;
    std::vector<double> density;             // final R per path
    std::vector<double> shifted_increments;  // final dW - g dt, [m * steps + i]
    double max_log_density{};
    bool converged{};
    std::size_t iterations{};
    std::vector<MeasureIterate> history;
    AssumptionReport assumption;
};

// Fixed-point construction of the solution as a conditional expectation under
// a reweighted law: starting from Z = 0, each pass reweights the paths by the
// factored term along the current Z, reads Y as a ratio of cross-sectional
// fits of R xi and R, and refreshes Z from the reweighted increments.
MeasureSolution construct_measure_solution(const TerminalCondition& terminal,
                                           const FactoredDriver& driver,
                                           const PathEnsemble& ensemble,
                                           const StoppingTimeField& tau,
                                           const MeasureSolutionOptions& options = {});

struct IncrementResidual {
    double mean{};
    double se{};
};

// Cross-path mean of R (Y_{i+1} - Y_i - Z_i dW^Q_i) at one step; zero in
// expectation when Y is a martingale under the reweighted law. The error bar
// combines the level and increment parts in quadrature: the fits couple the
// paths, so the pointwise residual spread is not an honest scale for the mean.
IncrementResidual reweighted_increment_residual(const MeasureSolution& solution, std::size_t step);

}  // namespace tcbsde
