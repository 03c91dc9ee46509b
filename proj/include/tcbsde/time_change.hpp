#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tcbsde/paths.hpp"

namespace tcbsde {

// Per-path strictly increasing C1 map of the time axis with phi(0) = 0.
// The proportional kind is phi(t) = t / tau_m (or its inverse t * tau_m); it
// maps the random horizon tau_m to 1 exactly. phi_prime takes ORIGINAL time;
// consumers that need the slope at a transformed time compose with
// phi_inverse themselves.
class TimeChange {
  public:
    enum class Kind { proportional, custom };
    using Map = std::function<double(std::size_t path, double t)>;

    static TimeChange proportional(const StoppingTimeField& tau, const TimeGrid& grid);
    static TimeChange custom(Map forward, Map derivative, Map inverse, std::size_t path_count);

    double phi(std::size_t m, double t) const;
    double phi_prime(std::size_t m, double t) const;
    double phi_inverse(std::size_t m, double s) const;

    Kind kind() const { return kind_; }
    std::size_t path_count() const { return paths_; }

    // Original-time horizon tau_m of a proportional change.
    double horizon_time(std::size_t m) const;
    const std::vector<double>& horizon_times() const { return tau_; }

    // Swaps phi and phi_inverse; the derivative becomes the reciprocal slope
    // composed through the inverse map. Involution up to 1e-12.
    TimeChange inverted() const;

  private:
    TimeChange() = default;
    Kind kind_{Kind::proportional};
    bool reversed_{false};  // proportional only: phi(t) = t * tau instead of t / tau
    std::vector<double> tau_;
    Map forward_, derivative_, inverse_;
    std::size_t paths_{};
};

// Value of a grid-sampled path at an off-grid time: linear interpolation
// between bracketing grid points, with near-exact grid hits snapped to the
// node so rationally aligned evaluation points are used exactly.
double sample_path_value(std::span<const double> values, const TimeGrid& grid, double t);

// Rescaled time-changed Brownian motion on the unit interval:
// levels[m][j] = W_m(s_j * tau_m) / sqrt(tau_m) on the uniform grid s_j = j/K.
struct TransportedEnsemble {
    TimeGrid grid;  // K steps on [0, 1]
    std::size_t path_count{};
    std::vector<double> levels;        // [m * (K + 1) + j]
    std::vector<double> increments;    // [m * K + j]
    std::vector<double> horizon_time;  // tau_m of the generating change

    double level(std::size_t m, std::size_t j) const { return levels[m * (grid.steps + 1) + j]; }
    double increment(std::size_t m, std::size_t j) const { return increments[m * grid.steps + j]; }
};

TimeChange proportional_time_change(const StoppingTimeField& tau, const TimeGrid& grid);

AdaptedProcess transport_process(const AdaptedProcess& process, const TimeChange& change,
                                 const TimeGrid& target_grid);

TransportedEnsemble transformed_brownian(const PathEnsemble& ensemble, const TimeChange& change,
                                         std::size_t transformed_steps);

// Coupled-path comparison of a stochastic integral with its transported
// counterpart over [eta, xi] (Lebesgue-free check; both sides use the same
// paths). The transported side is a left-point sum over the uniform
// transformed grid, each node snapped to the nearest original grid time so
// the coarse sum reads genuine path increments; interval ends enter exactly.
struct TransportDiscrepancy {
    double mean_abs{};
    double max_abs{};
};

TransportDiscrepancy verify_integral_transport(const AdaptedProcess& integrand,
                                               const PathEnsemble& ensemble,
                                               const TimeChange& change,
                                               const StoppingTimeField& eta,
                                               const StoppingTimeField& xi,
                                               std::size_t transformed_steps);

}  // namespace tcbsde
