#include "tcbsde/time_change.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "tcbsde/parallel.hpp"

namespace tcbsde {

TimeChange TimeChange::proportional(const StoppingTimeField& tau, const TimeGrid& grid) {
    TimeChange tc;
    tc.kind_ = Kind::proportional;
    tc.paths_ = tau.size();
    tc.tau_.resize(tau.size());
    for (std::size_t m = 0; m < tau.size(); ++m) {
        if (tau.index[m] == 0)
            throw std::invalid_argument("TimeChange::proportional: degenerate horizon tau = 0 on path " +
                                        std::to_string(m));
        if (tau.index[m] > grid.steps)
            throw std::invalid_argument("TimeChange::proportional: horizon index beyond grid on path " +
                                        std::to_string(m));
        tc.tau_[m] = grid.point(tau.index[m]);
    }
    return tc;
}

TimeChange TimeChange::custom(Map forward, Map derivative, Map inverse, std::size_t path_count) {
    if (!forward || !derivative || !inverse)
        throw std::invalid_argument("TimeChange::custom: all three maps are required");
    TimeChange tc;
    tc.kind_ = Kind::custom;
    tc.paths_ = path_count;
    tc.forward_ = std::move(forward);
    tc.derivative_ = std::move(derivative);
    tc.inverse_ = std::move(inverse);
    return tc;
}

double TimeChange::phi(std::size_t m, double t) const {
    if (kind_ == Kind::proportional) return reversed_ ? t * tau_[m] : t / tau_[m];
    return forward_(m, t);
}

double TimeChange::phi_prime(std::size_t m, double t) const {
    if (kind_ == Kind::proportional) return reversed_ ? tau_[m] : 1.0 / tau_[m];
    return derivative_(m, t);
}

double TimeChange::phi_inverse(std::size_t m, double s) const {
    if (kind_ == Kind::proportional) return reversed_ ? s / tau_[m] : s * tau_[m];
    return inverse_(m, s);
}

double TimeChange::horizon_time(std::size_t m) const {
    if (kind_ != Kind::proportional)
        throw std::logic_error("TimeChange::horizon_time: only defined for the proportional kind");
    return tau_[m];
}

TimeChange TimeChange::inverted() const {
    TimeChange tc = *this;
    if (kind_ == Kind::proportional) {
        tc.reversed_ = !reversed_;
        return tc;
    }
    tc.forward_ = inverse_;
    tc.inverse_ = forward_;
    Map deriv = derivative_;
    Map inv = inverse_;
    tc.derivative_ = [deriv, inv](std::size_t m, double s) {
        return 1.0 / deriv(m, inv(m, s));
    };
    return tc;
}

TimeChange proportional_time_change(const StoppingTimeField& tau, const TimeGrid& grid) {
    return TimeChange::proportional(tau, grid);
}

double sample_path_value(std::span<const double> values, const TimeGrid& grid, double t) {
    const double dt = grid.dt();
    const double u = t / dt;
    const auto n = static_cast<double>(grid.steps);
    const long long nearest = std::llround(u);
    if (nearest >= 0 && nearest <= static_cast<long long>(grid.steps) &&
        std::abs(u - static_cast<double>(nearest)) <= 1e-9 * std::max(1.0, std::abs(u)))
        return values[static_cast<std::size_t>(nearest)];
    if (u < 0.0 || u > n)
        throw std::out_of_range("sample_path_value: time " + std::to_string(t) +
                                " outside the grid span");
    auto i = static_cast<std::size_t>(u);
    if (i >= grid.steps) i = grid.steps - 1;
    const double w = u - static_cast<double>(i);
    return values[i] + w * (values[i + 1] - values[i]);
}

AdaptedProcess transport_process(const AdaptedProcess& process, const TimeChange& change,
                                 const TimeGrid& target_grid) {
    if (process.path_count != change.path_count())
        throw std::invalid_argument("transport_process: path counts differ");
    AdaptedProcess out;
    out.grid = target_grid;
    out.path_count = process.path_count;
    out.values.resize(process.path_count * (target_grid.steps + 1));
    const std::size_t width = target_grid.steps + 1;
    par::parallel_for(std::size_t{0}, process.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const auto row = process.path_values(m);
            for (std::size_t j = 0; j < width; ++j) {
                const double t = change.phi_inverse(m, target_grid.point(j));
                out.values[m * width + j] = sample_path_value(row, process.grid, t);
            }
        }
    });
    return out;
}

TransportedEnsemble transformed_brownian(const PathEnsemble& ensemble, const TimeChange& change,
                                         std::size_t transformed_steps) {
    if (change.kind() != TimeChange::Kind::proportional)
        throw std::invalid_argument("transformed_brownian: requires a proportional change");
    if (change.path_count() != ensemble.path_count)
        throw std::invalid_argument("transformed_brownian: path counts differ");
    if (transformed_steps == 0)
        throw std::invalid_argument("transformed_brownian: needs at least one step");

    TransportedEnsemble out;
    out.grid = make_grid(1.0, transformed_steps);
    out.path_count = ensemble.path_count;
    out.horizon_time.resize(ensemble.path_count);
    const std::size_t K = transformed_steps;
    out.levels.resize(ensemble.path_count * (K + 1));
    out.increments.resize(ensemble.path_count * K);
    par::parallel_for(std::size_t{0}, ensemble.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const double tau = change.horizon_time(m);
            const double root = std::sqrt(tau);
            out.horizon_time[m] = tau;
            const auto row = ensemble.path_levels(m);
            double* lev = out.levels.data() + m * (K + 1);
            double* inc = out.increments.data() + m * K;
            for (std::size_t j = 0; j <= K; ++j) {
                const double t = change.phi_inverse(m, out.grid.point(j));
                lev[j] = sample_path_value(row, ensemble.grid, t) / root;
            }
            for (std::size_t j = 0; j < K; ++j) inc[j] = lev[j + 1] - lev[j];
        }
    });
    return out;
}

TransportDiscrepancy verify_integral_transport(const AdaptedProcess& integrand,
                                               const PathEnsemble& ensemble,
                                               const TimeChange& change,
                                               const StoppingTimeField& eta,
                                               const StoppingTimeField& xi,
                                               std::size_t transformed_steps) {
    const std::size_t M = ensemble.path_count;
    if (integrand.path_count != M || eta.size() != M || xi.size() != M ||
        change.path_count() != M)
        throw std::invalid_argument("verify_integral_transport: path counts differ");
    if (!integrand.grid.same_as(ensemble.grid))
        throw std::invalid_argument("verify_integral_transport: integrand grid differs from driver grid");
    if (transformed_steps == 0)
        throw std::invalid_argument("verify_integral_transport: needs at least one step");
    for (std::size_t m = 0; m < M; ++m)
        if (eta.index[m] > xi.index[m])
            throw std::invalid_argument("verify_integral_transport: eta exceeds xi on path " +
                                        std::to_string(m));

    const TimeGrid& grid = ensemble.grid;
    const std::size_t K = transformed_steps;
    std::vector<double> diff(M, 0.0);

    par::parallel_for(std::size_t{0}, M, [&](std::size_t lo, std::size_t hi) {
        std::vector<std::size_t> idx;
        for (std::size_t m = lo; m < hi; ++m) {
            const std::size_t a = eta.index[m];
            const std::size_t b = xi.index[m];
            double lhs = 0.0;
            for (std::size_t i = a; i < b; ++i)
                lhs += integrand.value(m, i) * ensemble.increment(m, i);

            // Transported side: left-point sum against W(phi_inverse) over the
            // uniform transformed grid, with each node snapped to the nearest
            // original grid time. Snapping keeps the partition increments
            // genuine path increments; reading the path between grid points
            // through the interpolant bleeds quadratic variation out of the
            // coarse side, and the gap then stops shrinking under refinement.
            const double s_lo = change.phi(m, grid.point(a));
            const double s_hi = change.phi(m, grid.point(b));
            const double dt = grid.dt();
            idx.clear();
            idx.push_back(a);
            for (std::size_t j = 1; j < K; ++j) {
                const double s = static_cast<double>(j) / static_cast<double>(K);
                if (s <= s_lo || s >= s_hi) continue;
                const double t = change.phi_inverse(m, s);
                const long long i = std::llround(t / dt);
                if (i <= static_cast<long long>(idx.back()) || i >= static_cast<long long>(b))
                    continue;
                idx.push_back(static_cast<std::size_t>(i));
            }
            if (b > idx.back()) idx.push_back(b);

            const auto xrow = integrand.path_values(m);
            const auto wrow = ensemble.path_levels(m);
            double rhs = 0.0;
            for (std::size_t j = 0; j + 1 < idx.size(); ++j)
                rhs += xrow[idx[j]] * (wrow[idx[j + 1]] - wrow[idx[j]]);
            diff[m] = std::abs(lhs - rhs);
        }
    });

    TransportDiscrepancy d;
    for (std::size_t m = 0; m < M; ++m) {
        d.mean_abs += diff[m];
        d.max_abs = std::max(d.max_abs, diff[m]);
    }
    if (M > 0) d.mean_abs /= static_cast<double>(M);
    return d;
}

}  // namespace tcbsde
