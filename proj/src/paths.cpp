#include "tcbsde/paths.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "tcbsde/parallel.hpp"
#include "tcbsde/philox.hpp"

namespace tcbsde {

TimeGrid make_grid(double horizon, std::size_t steps) {
    if (!(horizon > 0.0)) throw std::invalid_argument("make_grid: horizon must be positive");
    if (steps == 0) throw std::invalid_argument("make_grid: need at least one step");
    TimeGrid grid;
    grid.horizon = horizon;
    grid.steps = steps;
    grid.points.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        grid.points[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    return grid;
}

PathEnsemble sample_ensemble(const TimeGrid& grid, std::size_t path_count, std::uint64_t seed) {
    if (path_count == 0) throw std::invalid_argument("sample_ensemble: need at least one path");
    PathEnsemble ens;
    ens.grid = grid;
    ens.path_count = path_count;
    ens.seed = seed;
    const std::size_t n = grid.steps;
    ens.increments.resize(path_count * n);
    ens.levels.resize(path_count * (n + 1));
    const double scale = std::sqrt(grid.dt());
    par::parallel_for(0, path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            double* dw = ens.increments.data() + m * n;
            double* w = ens.levels.data() + m * (n + 1);
            w[0] = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dw[i] = scale * gaussian_at(seed, m, i);
                w[i + 1] = w[i] + dw[i];
            }
        }
    });
    return ens;
}

StoppingTimeField first_exit_time(const PathEnsemble& ensemble, double barrier) {
    if (!(barrier > 0.0)) throw std::invalid_argument("first_exit_time: barrier must be positive");
    const std::size_t n = ensemble.grid.steps;
    StoppingTimeField field;
    field.cap = ensemble.grid.horizon;
    field.index.resize(ensemble.path_count);
    par::parallel_for(0, ensemble.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const double* w = ensemble.levels.data() + m * (n + 1);
            std::uint32_t k = static_cast<std::uint32_t>(n);
            for (std::size_t i = 0; i <= n; ++i) {
                if (std::abs(w[i]) >= barrier) {
                    k = static_cast<std::uint32_t>(i);
                    break;
                }
            }
            field.index[m] = k;
        }
    });
    return field;
}

StoppingTimeField constant_horizon_field(const TimeGrid& grid, std::size_t path_count) {
    StoppingTimeField field;
    field.cap = grid.horizon;
    field.index.assign(path_count, static_cast<std::uint32_t>(grid.steps));
    return field;
}

AdaptedProcess constant_process(const TimeGrid& grid, std::size_t path_count, double value) {
    AdaptedProcess proc;
    proc.grid = grid;
    proc.path_count = path_count;
    proc.values.assign(path_count * (grid.steps + 1), value);
    return proc;
}

AdaptedProcess process_from_levels(const PathEnsemble& ensemble) {
    AdaptedProcess proc;
    proc.grid = ensemble.grid;
    proc.path_count = ensemble.path_count;
    proc.values = ensemble.levels;
    return proc;
}

namespace {

void require_conformable(const AdaptedProcess& x, const PathEnsemble& driver) {
    if (!x.grid.same_as(driver.grid))
        throw std::invalid_argument("ito_integral: integrand and driver grids differ");
    if (x.path_count != driver.path_count)
        throw std::invalid_argument("ito_integral: integrand and driver path counts differ");
}

}  // namespace

std::vector<double> ito_integral(const AdaptedProcess& integrand, const PathEnsemble& driver,
                                 const StoppingTimeField& to) {
    StoppingTimeField zero;
    zero.cap = driver.grid.horizon;
    zero.index.assign(driver.path_count, 0);
    return ito_integral(integrand, driver, zero, to);
}

std::vector<double> ito_integral(const AdaptedProcess& integrand, const PathEnsemble& driver,
                                 const StoppingTimeField& from, const StoppingTimeField& to) {
    require_conformable(integrand, driver);
    if (from.size() != driver.path_count || to.size() != driver.path_count)
        throw std::invalid_argument("ito_integral: stopping-time field size mismatch");
    const std::size_t n = driver.grid.steps;
    std::vector<double> out(driver.path_count);
    par::parallel_for(0, driver.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const double* x = integrand.values.data() + m * (n + 1);
            const double* dw = driver.increments.data() + m * n;
            double s = 0.0;
            for (std::size_t i = from.index[m]; i < to.index[m]; ++i) s += x[i] * dw[i];
            out[m] = s;
        }
    });
    return out;
}

std::vector<double> quadratic_variation(const AdaptedProcess& process) {
    const std::size_t n = process.grid.steps;
    std::vector<double> out(process.path_count * (n + 1));
    par::parallel_for(0, process.path_count, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const double* x = process.values.data() + m * (n + 1);
            double* qv = out.data() + m * (n + 1);
            qv[0] = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = x[i + 1] - x[i];
                qv[i + 1] = qv[i] + d * d;
            }
        }
    });
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_ensemble(const std::filesystem::path& file, const PathEnsemble& ensemble) {
    FileHandle f(std::fopen(file.string().c_str(), "wb"));
    if (!f) throw std::runtime_error("save_ensemble: cannot open " + file.string());
    const double horizon = ensemble.grid.horizon;
    const std::uint64_t steps = ensemble.grid.steps;
    const std::uint64_t paths = ensemble.path_count;
    const std::uint64_t seed = ensemble.seed;
    bool ok = std::fwrite(&horizon, sizeof horizon, 1, f.get()) == 1 &&
              std::fwrite(&steps, sizeof steps, 1, f.get()) == 1 &&
              std::fwrite(&paths, sizeof paths, 1, f.get()) == 1 &&
              std::fwrite(&seed, sizeof seed, 1, f.get()) == 1;
    ok = ok && std::fwrite(ensemble.increments.data(), sizeof(double),
                           ensemble.increments.size(), f.get()) == ensemble.increments.size();
    if (!ok) throw std::runtime_error("save_ensemble: short write to " + file.string());
}

PathEnsemble load_ensemble(const std::filesystem::path& file) {
    FileHandle f(std::fopen(file.string().c_str(), "rb"));
    if (!f) throw std::runtime_error("load_ensemble: cannot open " + file.string());
    double horizon = 0.0;
    std::uint64_t steps = 0, paths = 0, seed = 0;
    bool ok = std::fread(&horizon, sizeof horizon, 1, f.get()) == 1 &&
              std::fread(&steps, sizeof steps, 1, f.get()) == 1 &&
              std::fread(&paths, sizeof paths, 1, f.get()) == 1 &&
              std::fread(&seed, sizeof seed, 1, f.get()) == 1;
    if (!ok || steps == 0 || paths == 0)
        throw std::runtime_error("load_ensemble: bad header in " + file.string());
    PathEnsemble ens;
    ens.grid = make_grid(horizon, steps);
    ens.path_count = paths;
    ens.seed = seed;
    ens.increments.resize(paths * steps);
    if (std::fread(ens.increments.data(), sizeof(double), ens.increments.size(), f.get()) !=
        ens.increments.size())
        throw std::runtime_error("load_ensemble: truncated payload in " + file.string());
    ens.levels.resize(paths * (steps + 1));
    par::parallel_for(0, paths, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            const double* dw = ens.increments.data() + m * steps;
            double* w = ens.levels.data() + m * (steps + 1);
            w[0] = 0.0;
            for (std::size_t i = 0; i < steps; ++i) w[i + 1] = w[i] + dw[i];
        }
    });
    return ens;
}

}  // namespace tcbsde
