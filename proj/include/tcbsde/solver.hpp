#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tcbsde/bsde.hpp"
#include "tcbsde/paths.hpp"
#include "tcbsde/regression.hpp"
#include "tcbsde/time_change.hpp"

namespace tcbsde {

struct SolverDiagnostics {
    std::vector<FitReport> fits;  // one per regression step, descending time
};

// Coefficients of f(t, y, z) = forcing(t) + beta(t) y + mu(t) z, kept separate
// so the adjoint of the explicit representation can read them. Non-negative
// bounds switch on a lattice spot check of the coefficient paths.
struct LinearDriverSpec {
    std::function<double(double, const PathContext&)> forcing, beta, mu;
    double beta_bound{-1.0};
    double mu_bound{-1.0};

    static LinearDriverSpec constants(double forcing, double beta, double mu);
    Driver driver() const;
};

// Pathwise exponential dG = G (beta dt + mu dW) started at 1 on the anchor
// index, simulated in log space.
struct AdjointEnsemble {
    TimeGrid grid;
    std::size_t path_count{};
    std::size_t anchor{};
    std::vector<double> values;  // [m * (steps + 1) + i], 1 up to the anchor
    double max_log{};

    double value(std::size_t m, std::size_t i) const {
        return values[m * (grid.steps + 1) + i];
    }
};

AdjointEnsemble simulate_adjoint(const LinearDriverSpec& spec, const PathEnsemble& ensemble,
                                 std::size_t anchor_index);

// Backward regression scheme: terminal values at the horizon, centered
// increment regression for Z, explicit driver step for Y. Paths past their
// horizon are frozen at xi and excluded from the cross sections.
Solution solve_backward_regression(const BsdeProblem& problem, const PathEnsemble& ensemble,
                                   const RegressionBasis& basis,
                                   SolverDiagnostics* diagnostics = nullptr);

// Same scheme driven by a transported ensemble on the unit interval. The
// problem must carry baked terminal values; `base` supplies the path context
// for coefficient processes of the original clock.
Solution solve_backward_regression(const BsdeProblem& problem, const TransportedEnsemble& driving,
                                   const PathEnsemble& base, const RegressionBasis& basis,
                                   SolverDiagnostics* diagnostics = nullptr);

// Explicit representation of the linear solution: Y_t is the conditional
// mean of xi G_{t,tau} + integral of G_{t,s} forcing ds, evaluated per path
// through the anchor-0 adjoint and a cross-sectional fit.
Solution linear_explicit(const LinearDriverSpec& spec, const TerminalCondition& terminal,
                         const StoppingTimeField& tau, const PathEnsemble& ensemble,
                         const RegressionBasis& basis, SolverDiagnostics* diagnostics = nullptr);

// Closed-form initial value for f = alpha z^2 via the exponential transform:
// y0 = log E[exp(2 alpha xi)] / (2 alpha), standard error by the delta method.
struct ColeHopfEstimate {
    double y0{};
    double se{};
    double max_exponent{};
};

ColeHopfEstimate cole_hopf_reference(double alpha, std::span<const double> terminal_values);

}  // namespace tcbsde
