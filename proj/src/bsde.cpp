#include "tcbsde/bsde.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

#include "tcbsde/parallel.hpp"

namespace tcbsde {

Driver Driver::zero() {
    Driver d;
    d.kind = DriverKind::zero;
    d.f = [](double, double, double, const PathContext&) { return 0.0; };
    return d;
}

Driver Driver::linear_constants(double forcing, double beta, double mu) {
    Driver d;
    d.kind = DriverKind::linear;
    d.f = [forcing, beta, mu](double, double y, double z, const PathContext&) {
        return forcing + beta * y + mu * z;
    };
    return d;
}

Driver Driver::linear(std::function<double(double, const PathContext&)> forcing,
                      std::function<double(double, const PathContext&)> beta,
                      std::function<double(double, const PathContext&)> mu) {
    Driver d;
    d.kind = DriverKind::linear;
    d.f = [forcing = std::move(forcing), beta = std::move(beta),
           mu = std::move(mu)](double t, double y, double z, const PathContext& ctx) {
        return forcing(t, ctx) + beta(t, ctx) * y + mu(t, ctx) * z;
    };
    return d;
}

Driver Driver::quadratic(double alpha) {
    Driver d;
    d.kind = DriverKind::quadratic_in_z;
    d.f = [alpha](double, double, double z, const PathContext&) { return alpha * z * z; };
    return d;
}

Driver Driver::factored(std::function<double(double, double, const PathContext&)> g) {
    Driver d;
    d.kind = DriverKind::factored;
    d.f = [g = std::move(g)](double t, double, double z, const PathContext& ctx) {
        return z * g(t, z, ctx);
    };
    return d;
}

Driver Driver::custom(std::function<double(double, double, double, const PathContext&)> fn) {
    Driver d;
    d.kind = DriverKind::custom;
    d.f = std::move(fn);
    return d;
}

TerminalCondition TerminalCondition::constant(double c) {
    return {[c](const PathEnsemble&, std::size_t, std::size_t) { return c; }};
}

TerminalCondition TerminalCondition::brownian_at_horizon() {
    return {[](const PathEnsemble& e, std::size_t m, std::size_t k) { return e.level(m, k); }};
}

TerminalCondition TerminalCondition::tanh_brownian_at_horizon() {
    return {[](const PathEnsemble& e, std::size_t m, std::size_t k) {
        return std::tanh(e.level(m, k));
    }};
}

TerminalCondition TerminalCondition::squared_brownian_at_horizon() {
    return {[](const PathEnsemble& e, std::size_t m, std::size_t k) {
        const double w = e.level(m, k);
        return w * w;
    }};
}

std::vector<double> evaluate_terminal(const TerminalCondition& terminal, const PathEnsemble& ensemble,
                                      const StoppingTimeField& horizon) {
    if (horizon.size() != ensemble.path_count)
        throw std::invalid_argument("evaluate_terminal: horizon size differs from path count");
    std::vector<double> xi(ensemble.path_count);
    par::parallel_for(std::size_t{0}, ensemble.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m)
            xi[m] = terminal.value(ensemble, m, horizon.index[m]);
    });
    return xi;
}

std::vector<std::uint32_t> BsdeProblem::horizon_indices(const TimeGrid& grid,
                                                        std::size_t path_count) const {
    if (std::holds_alternative<double>(horizon)) {
        const double T = std::get<double>(horizon);
        if (std::abs(T - grid.horizon) > 1e-12 * std::max(1.0, std::abs(grid.horizon)))
            throw std::invalid_argument("BsdeProblem: constant horizon differs from the grid horizon");
        return std::vector<std::uint32_t>(path_count, static_cast<std::uint32_t>(grid.steps));
    }
    const auto& field = std::get<StoppingTimeField>(horizon);
    if (field.size() != path_count)
        throw std::invalid_argument("BsdeProblem: stopping-time field size differs from path count");
    for (std::size_t m = 0; m < field.size(); ++m)
        if (field.index[m] > grid.steps)
            throw std::invalid_argument("BsdeProblem: horizon index beyond the grid on path " +
                                        std::to_string(m));
    return field.index;
}

namespace {

// s |-> tau * f(s * tau, y, z / sqrt(tau)) with tau read per path.
Driver rescale_driver(const Driver& original, std::shared_ptr<const std::vector<double>> tau) {
    Driver d;
    d.kind = original.kind;
    d.f = [f = original.f, tau = std::move(tau)](double s, double y, double z,
                                                 const PathContext& ctx) {
        const double tm = (*tau)[ctx.path];
        return tm * f(s * tm, y, z / std::sqrt(tm), ctx);
    };
    return d;
}

}  // namespace

BsdeProblem to_constant_horizon(const BsdeProblem& problem, const TimeChange& change,
                                const PathEnsemble& base) {
    if (!std::holds_alternative<StoppingTimeField>(problem.horizon))
        throw std::invalid_argument("to_constant_horizon: the horizon is already constant");
    const auto& tau = std::get<StoppingTimeField>(problem.horizon);
    if (tau.size() != base.path_count || change.path_count() != base.path_count)
        throw std::invalid_argument("to_constant_horizon: path counts differ");
    if (change.kind() != TimeChange::Kind::proportional)
        throw std::invalid_argument("to_constant_horizon: requires a proportional change");
    for (std::size_t m = 0; m < tau.size(); ++m)
        if (base.grid.point(tau.index[m]) != change.horizon_time(m))
            throw std::invalid_argument("to_constant_horizon: change horizon differs from problem "
                                        "horizon on path " + std::to_string(m));

    auto tau_times = std::make_shared<std::vector<double>>(change.horizon_times());

    BsdeProblem out;
    out.driver = rescale_driver(problem.driver, tau_times);
    out.terminal = problem.terminal;
    out.horizon = 1.0;
    out.terminal_values = problem.terminal_values
                              ? *problem.terminal_values
                              : evaluate_terminal(problem.terminal, base, tau);
    out.transform_tau = *tau_times;
    return out;
}

Solution map_solution_back(const Solution& transformed, const TimeChange& change,
                           const TimeGrid& original_grid, const StoppingTimeField& tau,
                           std::span<const double> terminal_values) {
    const std::size_t M = transformed.path_count;
    if (tau.size() != M || change.path_count() != M || terminal_values.size() != M)
        throw std::invalid_argument("map_solution_back: path counts differ");
    const std::size_t N = original_grid.steps;
    const std::size_t width = N + 1;
    const std::size_t twidth = transformed.grid.steps + 1;

    Solution out;
    out.grid = original_grid;
    out.path_count = M;
    out.y.resize(M * width);
    out.z.resize(M * width);
    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const std::size_t k = tau.index[m];
            const std::span<const double> yrow{transformed.y.data() + m * twidth, twidth};
            const std::span<const double> zrow{transformed.z.data() + m * twidth, twidth};
            for (std::size_t i = 0; i < width; ++i) {
                if (i >= k) {
                    out.y[m * width + i] = terminal_values[m];
                    out.z[m * width + i] = 0.0;
                    continue;
                }
                const double t = original_grid.point(i);
                const double s = change.phi(m, t);
                const double scale = std::sqrt(change.phi_prime(m, t));
                out.y[m * width + i] = sample_path_value(yrow, transformed.grid, s);
                out.z[m * width + i] = sample_path_value(zrow, transformed.grid, s) * scale;
            }
        }
    });

    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) sum += out.y[m * width];
    out.y0 = M > 0 ? sum / static_cast<double>(M) : 0.0;
    out.y0_se = transformed.y0_se;
    return out;
}

double driver_invariance_check(double alpha, const StoppingTimeField& tau, const TimeGrid& grid) {
    auto change = TimeChange::proportional(tau, grid);
    auto tau_times = std::make_shared<std::vector<double>>(change.horizon_times());
    Driver transformed = rescale_driver(Driver::quadratic(alpha), tau_times);

    // Up to ten paths with distinct horizons, ten times, ten z values.
    std::vector<std::size_t> paths;
    std::vector<double> seen;
    for (std::size_t m = 0; m < tau.size() && paths.size() < 10; ++m) {
        const double t = (*tau_times)[m];
        bool fresh = true;
        for (double v : seen)
            if (v == t) fresh = false;
        if (fresh || tau.size() <= 10) {
            paths.push_back(m);
            seen.push_back(t);
        }
    }
    if (paths.empty()) throw std::invalid_argument("driver_invariance_check: empty horizon field");

    double worst = 0.0;
    const double y = 0.7;
    for (std::size_t m : paths) {
        PathContext ctx{nullptr, m};
        for (int a = 0; a < 10; ++a) {
            const double s = (static_cast<double>(a) + 0.5) / 10.0;
            for (int b = 0; b < 10; ++b) {
                const double z = -3.0 + 6.0 * static_cast<double>(b) / 9.0;
                const double got = transformed.f(s, y, z, ctx);
                worst = std::max(worst, std::abs(got - alpha * z * z));
            }
        }
    }
    return worst;
}

}  // namespace tcbsde
