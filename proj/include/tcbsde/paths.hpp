#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tcbsde {

// Uniform partition of [0, horizon] into `steps` cells.
struct TimeGrid {
    double horizon{};
    std::size_t steps{};
    std::vector<double> points;  // steps + 1 entries, points[0] = 0, back() = horizon

    double dt() const { return horizon / static_cast<double>(steps); }
    double point(std::size_t i) const { return points[i]; }
    bool same_as(const TimeGrid& other) const {
        return horizon == other.horizon && steps == other.steps;
    }
};

TimeGrid make_grid(double horizon, std::size_t steps);

// Seeded bundle of Brownian paths on a grid. Increment (m, i) is addressed by
// (seed, m, i) in the counter-based generator, so the ensemble is bit-identical
// across runs and worker counts. Immutable after creation.
struct PathEnsemble {
    TimeGrid grid;
    std::size_t path_count{};
    std::uint64_t seed{};
    std::vector<double> increments;  // [m * steps + i]
    std::vector<double> levels;      // [m * (steps + 1) + i], levels[m][0] = 0

    double increment(std::size_t m, std::size_t i) const {
        return increments[m * grid.steps + i];
    }
    double level(std::size_t m, std::size_t i) const {
        return levels[m * (grid.steps + 1) + i];
    }
    std::span<const double> path_levels(std::size_t m) const {
        return {levels.data() + m * (grid.steps + 1), grid.steps + 1};
    }
    std::span<const double> path_increments(std::size_t m) const {
        return {increments.data() + m * grid.steps, grid.steps};
    }
};

PathEnsemble sample_ensemble(const TimeGrid& grid, std::size_t path_count, std::uint64_t seed);

// Grid-aligned bounded stopping time: tau(omega_m) = t_{index[m]}, index <= steps.
struct StoppingTimeField {
    std::vector<std::uint32_t> index;
    double cap{};  // grid horizon

    std::size_t size() const { return index.size(); }
    double time(const TimeGrid& grid, std::size_t m) const { return grid.point(index[m]); }
};

// First grid index where |W| reaches the barrier, capped at the terminal index.
StoppingTimeField first_exit_time(const PathEnsemble& ensemble, double barrier);

// tau identically equal to the grid horizon.
StoppingTimeField constant_horizon_field(const TimeGrid& grid, std::size_t path_count);

// Grid-sampled process, one value per path and grid point.
struct AdaptedProcess {
    TimeGrid grid;
    std::size_t path_count{};
    std::vector<double> values;  // [m * (steps + 1) + i]

    double value(std::size_t m, std::size_t i) const {
        return values[m * (grid.steps + 1) + i];
    }
    std::span<const double> path_values(std::size_t m) const {
        return {values.data() + m * (grid.steps + 1), grid.steps + 1};
    }
};

AdaptedProcess constant_process(const TimeGrid& grid, std::size_t path_count, double value);
AdaptedProcess process_from_levels(const PathEnsemble& ensemble);  // X = W

// Left-point discrete Ito integral per path over grid indices [from, to).
std::vector<double> ito_integral(const AdaptedProcess& integrand, const PathEnsemble& driver,
                                 const StoppingTimeField& to);
std::vector<double> ito_integral(const AdaptedProcess& integrand, const PathEnsemble& driver,
                                 const StoppingTimeField& from, const StoppingTimeField& to);

// Partial sums of squared increments; output has the levels layout.
std::vector<double> quadratic_variation(const AdaptedProcess& process);

// Flat binary cache: header (horizon, steps, path_count, seed) then row-major
// increments. Levels are rebuilt on load.
void save_ensemble(const std::filesystem::path& file, const PathEnsemble& ensemble);
PathEnsemble load_ensemble(const std::filesystem::path& file);

}  // namespace tcbsde
