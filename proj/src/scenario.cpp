#include "tcbsde/scenario.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tcbsde/stats.hpp"
#include "tcbsde/time_change.hpp"

namespace tcbsde {

using Json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ScenarioError("scenario field '" + path + "': " + what);
}

const Json& need_object(const Json& parent, const std::string& path, const char* key) {
    auto it = parent.find(key);
    if (it == parent.end()) fail(path + "." + key, "missing");
    if (!it->is_object()) fail(path + "." + key, "expected an object");
    return *it;
}

void reject_unknown(const Json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) fail(path + "." + it.key(), "unknown field");
    }
}

double need_number(const Json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    if (!it->is_number()) fail(path + "." + key, "expected a number");
    return it->get<double>();
}

double optional_number(const Json& obj, const std::string& path, const char* key, double fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) fail(path + "." + key, "expected a number");
    return it->get<double>();
}

std::uint64_t need_uint(const Json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    if (!it->is_number_integer() || (it->is_number_integer() && it->get<std::int64_t>() < 0))
        fail(path + "." + key, "expected a non-negative integer");
    return it->get<std::uint64_t>();
}

std::uint64_t optional_uint(const Json& obj, const std::string& path, const char* key,
                            std::uint64_t fallback) {
    if (obj.find(key) == obj.end()) return fallback;
    return need_uint(obj, path, key);
}

std::string need_string(const Json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing");
    if (!it->is_string()) fail(path + "." + key, "expected a string");
    return it->get<std::string>();
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
    Json root;
    try {
        root = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw ScenarioError(std::string("scenario JSON does not parse: ") + e.what());
    }
    if (!root.is_object()) throw ScenarioError("scenario field '$': expected a single object");
    const std::string top = "$";
    reject_unknown(root, top,
                   {"name", "grid", "ensemble", "horizon", "driver", "terminal", "experiment",
                    "reference", "output"});

    Scenario sc;
    sc.name = need_string(root, top, "name");

    {
        const Json& g = need_object(root, top, "grid");
        reject_unknown(g, top + ".grid", {"horizon", "steps"});
        sc.grid.horizon = need_number(g, top + ".grid", "horizon");
        sc.grid.steps = need_uint(g, top + ".grid", "steps");
        if (!(sc.grid.horizon > 0.0)) fail(top + ".grid.horizon", "must be positive");
        if (sc.grid.steps == 0) fail(top + ".grid.steps", "must be at least 1");
    }
    {
        const Json& e = need_object(root, top, "ensemble");
        reject_unknown(e, top + ".ensemble", {"paths", "seed"});
        sc.ensemble.paths = need_uint(e, top + ".ensemble", "paths");
        sc.ensemble.seed = need_uint(e, top + ".ensemble", "seed");
        if (sc.ensemble.paths == 0) fail(top + ".ensemble.paths", "must be at least 1");
    }
    {
        const Json& h = need_object(root, top, "horizon");
        const std::string hp = top + ".horizon";
        const std::string kind = need_string(h, hp, "kind");
        if (kind == "constant") {
            reject_unknown(h, hp, {"kind"});
            sc.horizon.kind = HorizonSpec::Kind::constant;
        } else if (kind == "first-exit") {
            reject_unknown(h, hp, {"kind", "barrier"});
            sc.horizon.kind = HorizonSpec::Kind::first_exit;
            sc.horizon.barrier = need_number(h, hp, "barrier");
            if (!(sc.horizon.barrier > 0.0)) fail(hp + ".barrier", "must be positive");
        } else {
            fail(hp + ".kind", "expected constant | first-exit");
        }
    }
    {
        const Json& d = need_object(root, top, "driver");
        const std::string dp = top + ".driver";
        const std::string kind = need_string(d, dp, "kind");
        if (kind == "zero") {
            reject_unknown(d, dp, {"kind"});
            sc.driver.kind = DriverSpec::Kind::zero;
        } else if (kind == "linear") {
            reject_unknown(d, dp, {"kind", "forcing", "beta", "mu"});
            sc.driver.kind = DriverSpec::Kind::linear;
            sc.driver.forcing = need_number(d, dp, "forcing");
            sc.driver.beta = need_number(d, dp, "beta");
            sc.driver.mu = need_number(d, dp, "mu");
        } else if (kind == "quadratic" || kind == "factored-quadratic") {
            reject_unknown(d, dp, {"kind", "alpha"});
            sc.driver.kind = kind == "quadratic" ? DriverSpec::Kind::quadratic
                                                 : DriverSpec::Kind::factored_quadratic;
            sc.driver.alpha = need_number(d, dp, "alpha");
        } else {
            fail(dp + ".kind", "expected zero | linear | quadratic | factored-quadratic");
        }
    }
    {
        const Json& t = need_object(root, top, "terminal");
        const std::string tp = top + ".terminal";
        const std::string kind = need_string(t, tp, "kind");
        if (kind == "constant") {
            reject_unknown(t, tp, {"kind", "value"});
            sc.terminal.kind = TerminalSpec::Kind::constant;
            sc.terminal.value = need_number(t, tp, "value");
        } else if (kind == "brownian" || kind == "tanh-brownian" || kind == "squared-brownian") {
            reject_unknown(t, tp, {"kind"});
            sc.terminal.kind = kind == "brownian" ? TerminalSpec::Kind::brownian
                               : kind == "tanh-brownian" ? TerminalSpec::Kind::tanh_brownian
                                                         : TerminalSpec::Kind::squared_brownian;
        } else {
            fail(tp + ".kind", "expected constant | brownian | tanh-brownian | squared-brownian");
        }
    }
    {
        const Json& x = need_object(root, top, "experiment");
        const std::string xp = top + ".experiment";
        reject_unknown(x, xp,
                       {"kind", "basis_degree", "aux_degree", "transformed_steps", "max_iterations",
                        "iteration_tol", "steps", "paths", "tolerance_rel", "tolerance_abs"});
        const std::string kind = need_string(x, xp, "kind");
        if (kind == "solve")
            sc.experiment.kind = ExperimentSpec::Kind::solve;
        else if (kind == "transform-check")
            sc.experiment.kind = ExperimentSpec::Kind::transform_check;
        else if (kind == "linear-formula")
            sc.experiment.kind = ExperimentSpec::Kind::linear_formula;
        else if (kind == "measure-solution")
            sc.experiment.kind = ExperimentSpec::Kind::measure_solution;
        else if (kind == "convergence")
            sc.experiment.kind = ExperimentSpec::Kind::convergence;
        else
            fail(xp + ".kind",
                 "expected solve | transform-check | linear-formula | measure-solution | "
                 "convergence");
        sc.experiment.basis_degree = static_cast<int>(optional_uint(x, xp, "basis_degree", 3));
        sc.experiment.aux_degree = static_cast<int>(optional_uint(x, xp, "aux_degree", 2));
        sc.experiment.transformed_steps = optional_uint(x, xp, "transformed_steps", 0);
        sc.experiment.max_iterations = optional_uint(x, xp, "max_iterations", 50);
        sc.experiment.iteration_tol = optional_number(x, xp, "iteration_tol", 1e-4);
        sc.experiment.tolerance_rel = optional_number(x, xp, "tolerance_rel", 0.02);
        sc.experiment.tolerance_abs = optional_number(x, xp, "tolerance_abs", 0.02);
        if (auto it = x.find("steps"); it != x.end()) {
            if (!it->is_array()) fail(xp + ".steps", "expected an array of integers");
            for (const auto& v : *it) {
                if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
                    fail(xp + ".steps", "expected positive integers");
                sc.experiment.steps_list.push_back(v.get<std::uint64_t>());
            }
        }
        if (auto it = x.find("paths"); it != x.end()) {
            if (!it->is_array()) fail(xp + ".paths", "expected an array of integers");
            for (const auto& v : *it) {
                if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
                    fail(xp + ".paths", "expected positive integers");
                sc.experiment.paths_list.push_back(v.get<std::uint64_t>());
            }
        }
        if (sc.experiment.kind == ExperimentSpec::Kind::convergence) {
            if (sc.experiment.steps_list.size() < 2)
                fail(xp + ".steps", "convergence needs at least two refinements");
            for (std::size_t i = 1; i < sc.experiment.steps_list.size(); ++i)
                if (sc.experiment.steps_list[i] <= sc.experiment.steps_list[i - 1])
                    fail(xp + ".steps", "refinements must increase");
            if (!sc.experiment.paths_list.empty() &&
                sc.experiment.paths_list.size() != sc.experiment.steps_list.size())
                fail(xp + ".paths", "must match the length of steps");
        }
    }
    if (auto it = root.find("reference"); it != root.end()) {
        const Json& r = *it;
        const std::string rp = top + ".reference";
        if (!r.is_object()) fail(rp, "expected an object");
        if (r.find("source") != r.end()) {
            reject_unknown(r, rp, {"source"});
            const std::string src = need_string(r, rp, "source");
            if (src != "cole-hopf") fail(rp + ".source", "expected cole-hopf");
            sc.reference.source = ReferenceSpec::Source::cole_hopf;
        } else {
            reject_unknown(r, rp, {"value", "provenance"});
            sc.reference.source = ReferenceSpec::Source::value;
            sc.reference.value = need_number(r, rp, "value");
            sc.reference.provenance = need_string(r, rp, "provenance");
        }
    }
    if (auto it = root.find("output"); it != root.end()) {
        if (!it->is_string()) fail(top + ".output", "expected a string");
        sc.output = it->get<std::string>();
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ScenarioError("cannot open scenario file " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

namespace {

struct Workbench {
    TimeGrid grid;
    PathEnsemble ens;
    StoppingTimeField tau;
    TerminalCondition terminal;
    RegressionBasis basis;
};

Workbench make_bench(const Scenario& sc, std::size_t steps, std::size_t paths) {
    Workbench wb;
    wb.grid = make_grid(sc.grid.horizon, steps);
    wb.ens = sample_ensemble(wb.grid, paths, sc.ensemble.seed);
    if (sc.horizon.kind == HorizonSpec::Kind::constant)
        wb.tau = constant_horizon_field(wb.grid, paths);
    else
        wb.tau = first_exit_time(wb.ens, sc.horizon.barrier);
    switch (sc.terminal.kind) {
        case TerminalSpec::Kind::constant:
            wb.terminal = TerminalCondition::constant(sc.terminal.value);
            break;
        case TerminalSpec::Kind::brownian:
            wb.terminal = TerminalCondition::brownian_at_horizon();
            break;
        case TerminalSpec::Kind::tanh_brownian:
            wb.terminal = TerminalCondition::tanh_brownian_at_horizon();
            break;
        case TerminalSpec::Kind::squared_brownian:
            wb.terminal = TerminalCondition::squared_brownian_at_horizon();
            break;
    }
    wb.basis = RegressionBasis::polynomial(sc.experiment.basis_degree, sc.experiment.aux_degree);
    return wb;
}

Driver make_driver(const DriverSpec& d) {
    switch (d.kind) {
        case DriverSpec::Kind::zero:
            return Driver::zero();
        case DriverSpec::Kind::linear:
            return Driver::linear_constants(d.forcing, d.beta, d.mu);
        case DriverSpec::Kind::quadratic:
            return Driver::quadratic(d.alpha);
        case DriverSpec::Kind::factored_quadratic:
            return FactoredDriver::quadratic(d.alpha).driver();
    }
    throw ScenarioError("scenario field '$.driver.kind': unhandled kind");
}

BsdeProblem make_problem(const Scenario& sc, const Workbench& wb) {
    BsdeProblem p;
    p.driver = make_driver(sc.driver);
    p.terminal = wb.terminal;
    if (sc.horizon.kind == HorizonSpec::Kind::constant)
        p.horizon = sc.grid.horizon;
    else
        p.horizon = wb.tau;
    return p;
}

struct ResolvedRef {
    std::optional<double> value;
    double se{};
    std::string provenance;
};

ResolvedRef resolve_reference(const Scenario& sc, const Workbench& wb) {
    ResolvedRef out;
    switch (sc.reference.source) {
        case ReferenceSpec::Source::none:
            break;
        case ReferenceSpec::Source::value:
            out.value = sc.reference.value;
            out.provenance =
                sc.reference.provenance.empty() ? "declared value" : sc.reference.provenance;
            break;
        case ReferenceSpec::Source::cole_hopf: {
            if (sc.driver.kind != DriverSpec::Kind::quadratic &&
                sc.driver.kind != DriverSpec::Kind::factored_quadratic)
                throw ScenarioError(
                    "scenario field '$.reference.source': cole-hopf needs a quadratic driver");
            const std::vector<double> xi = evaluate_terminal(wb.terminal, wb.ens, wb.tau);
            const ColeHopfEstimate est = cole_hopf_reference(sc.driver.alpha, xi);
            out.value = est.y0;
            out.se = est.se;
            out.provenance = "exponential-transform oracle on the sampled terminal values";
            break;
        }
    }
    return out;
}

ResultRow make_row(const Scenario& sc, std::string quantity, double est, double se) {
    ResultRow row;
    row.scenario = sc.name;
    row.quantity = std::move(quantity);
    row.estimate = est;
    row.standard_error = se;
    row.status = "info";
    return row;
}

// Pass rule against a reference: three standard errors of both estimates, or
// the relative tolerance of the reference (the absolute one when it is zero).
void judge(ResultRow& row, const ResolvedRef& ref, double tol_rel, double tol_abs) {
    if (!ref.value) return;
    row.reference = *ref.value;
    row.provenance = ref.provenance;
    const double slack = *ref.value != 0.0 ? tol_rel * std::abs(*ref.value) : tol_abs;
    const double budget = std::max(3.0 * (row.standard_error + ref.se), slack);
    row.status = std::abs(row.estimate - *ref.value) <= budget ? "pass" : "fail";
}

void judge_gap(ResultRow& row, double budget, const std::string& provenance) {
    row.reference = 0.0;
    row.provenance = provenance;
    row.status = std::abs(row.estimate) <= budget ? "pass" : "fail";
}

std::size_t transformed_steps_for(const Scenario& sc) {
    if (sc.experiment.transformed_steps > 0) return sc.experiment.transformed_steps;
    if (sc.horizon.kind == HorizonSpec::Kind::constant) return sc.grid.steps;
    return std::max<std::size_t>(32, sc.grid.steps / 4);
}

void experiment_solve(const Scenario& sc, const Workbench& wb, std::vector<ResultRow>& rows) {
    const BsdeProblem problem = make_problem(sc, wb);
    const Solution sol = solve_backward_regression(problem, wb.ens, wb.basis);
    const ResolvedRef ref = resolve_reference(sc, wb);
    ResultRow row = make_row(sc, "y0", sol.y0, sol.y0_se);
    judge(row, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(row);
    if (sc.reference.source == ReferenceSpec::Source::cole_hopf)
        rows.push_back(make_row(sc, "cole_hopf_y0", *ref.value, ref.se));
}

void experiment_transform_check(const Scenario& sc, const Workbench& wb,
                                std::vector<ResultRow>& rows) {
    const BsdeProblem problem = make_problem(sc, wb);
    const Solution direct = solve_backward_regression(problem, wb.ens, wb.basis);

    const TimeChange change = proportional_time_change(wb.tau, wb.grid);
    const TransportedEnsemble moved =
        transformed_brownian(wb.ens, change, transformed_steps_for(sc));
    const BsdeProblem unit = to_constant_horizon(problem, change, wb.ens);
    const Solution tsol = solve_backward_regression(unit, moved, wb.ens, wb.basis);
    const Solution mapped =
        map_solution_back(tsol, change, wb.grid, wb.tau, *unit.terminal_values);

    const ResolvedRef ref = resolve_reference(sc, wb);
    ResultRow d = make_row(sc, "y0_direct", direct.y0, direct.y0_se);
    judge(d, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(d);
    ResultRow t = make_row(sc, "y0_transformed_route", mapped.y0, mapped.y0_se);
    judge(t, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(t);

    ResultRow gap = make_row(sc, "route_discrepancy", std::abs(direct.y0 - mapped.y0),
                             direct.y0_se + mapped.y0_se);
    judge_gap(gap,
              3.0 * (direct.y0_se + mapped.y0_se) +
                  sc.experiment.tolerance_rel * std::abs(direct.y0),
              "coupled two-route agreement");
    rows.push_back(gap);
}

void experiment_linear_formula(const Scenario& sc, const Workbench& wb,
                               std::vector<ResultRow>& rows) {
    if (sc.driver.kind != DriverSpec::Kind::linear && sc.driver.kind != DriverSpec::Kind::zero)
        throw ScenarioError("scenario field '$.driver.kind': linear-formula needs a linear driver");
    const LinearDriverSpec spec =
        LinearDriverSpec::constants(sc.driver.forcing, sc.driver.beta, sc.driver.mu);

    BsdeProblem problem = make_problem(sc, wb);
    problem.driver = spec.driver();
    const Solution reg = solve_backward_regression(problem, wb.ens, wb.basis);
    const Solution exp = linear_explicit(spec, wb.terminal, wb.tau, wb.ens, wb.basis);

    const ResolvedRef ref = resolve_reference(sc, wb);
    ResultRow r1 = make_row(sc, "y0_regression", reg.y0, reg.y0_se);
    judge(r1, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(r1);
    ResultRow r2 = make_row(sc, "y0_explicit", exp.y0, exp.y0_se);
    judge(r2, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(r2);

    ResultRow gap = make_row(sc, "formula_discrepancy", std::abs(reg.y0 - exp.y0),
                             reg.y0_se + exp.y0_se);
    judge_gap(gap,
              3.0 * (reg.y0_se + exp.y0_se) + sc.experiment.tolerance_rel * std::abs(exp.y0),
              "explicit-representation agreement");
    rows.push_back(gap);
}

void experiment_measure_solution(const Scenario& sc, const Workbench& wb,
                                 std::vector<ResultRow>& rows) {
    FactoredDriver fd;
    if (sc.driver.kind == DriverSpec::Kind::factored_quadratic)
        fd = FactoredDriver::quadratic(sc.driver.alpha);
    else if (sc.driver.kind == DriverSpec::Kind::linear && sc.driver.forcing == 0.0 &&
             sc.driver.beta == 0.0)
        fd = FactoredDriver::linear_in_z(sc.driver.mu);
    else
        throw ScenarioError(
            "scenario field '$.driver.kind': measure-solution needs factored-quadratic or pure-z "
            "linear");

    MeasureSolutionOptions opts;
    opts.max_iterations = sc.experiment.max_iterations;
    opts.tolerance = sc.experiment.iteration_tol;
    opts.basis = wb.basis;
    const MeasureSolution msol =
        construct_measure_solution(wb.terminal, fd, wb.ens, wb.tau, opts);

    BsdeProblem problem = make_problem(sc, wb);
    problem.driver = fd.driver();
    const Solution sol = solve_backward_regression(problem, wb.ens, wb.basis);

    const ResolvedRef ref = resolve_reference(sc, wb);
    ResultRow y = make_row(sc, "y0_measure", msol.solution.y0, msol.solution.y0_se);
    judge(y, ref, sc.experiment.tolerance_rel, sc.experiment.tolerance_abs);
    rows.push_back(y);

    ResultRow conv = make_row(sc, "converged", msol.converged ? 1.0 : 0.0, 0.0);
    conv.reference = 1.0;
    conv.provenance = "fixed-point iteration";
    conv.status = msol.converged ? "pass" : "fail";
    rows.push_back(conv);

    ResultRow iters = make_row(sc, "iterations", static_cast<double>(msol.iterations), 0.0);
    iters.reference = static_cast<double>(sc.experiment.max_iterations);
    iters.provenance = "iteration budget";
    iters.status = msol.iterations <= sc.experiment.max_iterations ? "pass" : "fail";
    rows.push_back(iters);

    const double mean_r = mean(msol.density);
    ResultRow mr = make_row(sc, "mean_density", mean_r, standard_error(msol.density));
    mr.reference = 1.0;
    mr.provenance = "unit-mean density";
    mr.status = std::abs(mean_r - 1.0) <= 3.0 * mr.standard_error ? "pass" : "fail";
    rows.push_back(mr);

    double min_r = msol.density.empty() ? 0.0 : msol.density[0];
    for (double v : msol.density) min_r = std::min(min_r, v);
    ResultRow pos = make_row(sc, "min_density", min_r, 0.0);
    pos.reference = 0.0;
    pos.provenance = "positive density";
    pos.status = min_r > 0.0 ? "pass" : "fail";
    rows.push_back(pos);

    rows.push_back(make_row(sc, "max_log_density", msol.max_log_density, 0.0));
    rows.push_back(make_row(sc, "y0_solver", sol.y0, sol.y0_se));

    ResultRow gap = make_row(sc, "solver_discrepancy", std::abs(msol.solution.y0 - sol.y0),
                             msol.solution.y0_se + sol.y0_se);
    judge_gap(gap,
              3.0 * (msol.solution.y0_se + sol.y0_se) +
                  sc.experiment.tolerance_rel * std::abs(sol.y0),
              "independent solver agreement");
    rows.push_back(gap);
}

void experiment_convergence(const Scenario& sc, std::vector<ResultRow>& rows) {
    if (sc.reference.source == ReferenceSpec::Source::none)
        throw ScenarioError("scenario field '$.reference': convergence needs a reference");
    const auto& steps = sc.experiment.steps_list;
    std::vector<std::size_t> paths = sc.experiment.paths_list;
    if (paths.empty()) paths.assign(steps.size(), sc.ensemble.paths);

    std::vector<double> y0(steps.size()), se(steps.size());
    ResolvedRef ref;
    for (std::size_t j = 0; j < steps.size(); ++j) {
        const Workbench wb = make_bench(sc, steps[j], paths[j]);
        const BsdeProblem problem = make_problem(sc, wb);
        const Solution sol = solve_backward_regression(problem, wb.ens, wb.basis);
        y0[j] = sol.y0;
        se[j] = sol.y0_se;
        if (j + 1 == steps.size()) ref = resolve_reference(sc, wb);
    }

    bool decreasing = true;
    double prev = 0.0;
    for (std::size_t j = 0; j < steps.size(); ++j) {
        const std::string tag = "[N=" + std::to_string(steps[j]) + "]";
        ResultRow row = make_row(sc, "y0" + tag, y0[j], se[j]);
        row.reference = *ref.value;
        row.provenance = ref.provenance;
        rows.push_back(row);
        const double err = std::abs(y0[j] - *ref.value);
        rows.push_back(make_row(sc, "abs_error" + tag, err, se[j]));
        if (j > 0 && err > prev) decreasing = false;
        prev = err;
    }
    ResultRow mono = make_row(sc, "error_decreasing", decreasing ? 1.0 : 0.0, 0.0);
    mono.reference = 1.0;
    mono.provenance = "grid refinement";
    mono.status = decreasing ? "pass" : "fail";
    rows.push_back(mono);
}

}  // namespace

bool ResultTable::all_passed() const {
    for (const auto& row : rows)
        if (row.status == "fail") return false;
    return true;
}

ResultTable run_scenario(const Scenario& sc) {
    const auto start = std::chrono::steady_clock::now();
    ResultTable table;
    if (sc.experiment.kind == ExperimentSpec::Kind::convergence) {
        experiment_convergence(sc, table.rows);
    } else {
        const Workbench wb = make_bench(sc, sc.grid.steps, sc.ensemble.paths);
        switch (sc.experiment.kind) {
            case ExperimentSpec::Kind::solve:
                experiment_solve(sc, wb, table.rows);
                break;
            case ExperimentSpec::Kind::transform_check:
                experiment_transform_check(sc, wb, table.rows);
                break;
            case ExperimentSpec::Kind::linear_formula:
                experiment_linear_formula(sc, wb, table.rows);
                break;
            case ExperimentSpec::Kind::measure_solution:
                experiment_measure_solution(sc, wb, table.rows);
                break;
            case ExperimentSpec::Kind::convergence:
                break;
        }
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (auto& row : table.rows) row.wall_time_s = wall;
    if (!sc.output.empty()) write_csv(sc.output, table);
    return table;
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string safe_cell(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

}  // namespace

std::string to_csv(const ResultTable& table) {
    std::string out =
        "scenario,quantity,estimate,standard_error,reference,provenance,status,wall_time_s\n";
    for (const auto& row : table.rows) {
        out += safe_cell(row.scenario) + ',' + safe_cell(row.quantity) + ',';
        out += fmt17(row.estimate) + ',' + fmt17(row.standard_error) + ',';
        out += row.reference ? fmt17(*row.reference) : std::string{};
        out += ',' + safe_cell(row.provenance) + ',' + row.status + ',';
        char wall[32];
        std::snprintf(wall, sizeof wall, "%.6f", row.wall_time_s);
        out += wall;
        out += '\n';
    }
    return out;
}

void write_csv(const std::filesystem::path& file, const ResultTable& table) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write CSV to " + file.string());
    out << to_csv(table);
}

std::vector<BuiltinScenario> list_builtin_scenarios() {
    return {
        {"linear-gamma-check",
         "constant-coefficient linear driver against the closed-form exponential value"},
        {"quadratic-colehopf",
         "quadratic driver on a constant horizon against the exponential-transform oracle"},
        {"stopped-optional-stopping",
         "driverless first-exit problem whose initial value is zero by optional stopping"},
        {"transform-equivalence",
         "stopped quadratic problem solved directly and through the unit-horizon transform"},
        {"measure-solution-quadratic",
         "stopped quadratic problem solved by reweighting against the oracle"},
    };
}

Scenario builtin_scenario(const std::string& name) {
    Scenario sc;
    sc.name = name;
    sc.grid = {1.0, 256};
    if (name == "linear-gamma-check") {
        sc.ensemble = {100000, 101};
        sc.horizon.kind = HorizonSpec::Kind::constant;
        sc.driver.kind = DriverSpec::Kind::linear;
        sc.driver.forcing = 0.0;
        sc.driver.beta = 0.1;
        sc.driver.mu = 0.0;
        sc.terminal.kind = TerminalSpec::Kind::constant;
        sc.terminal.value = 1.0;
        sc.experiment.kind = ExperimentSpec::Kind::linear_formula;
        sc.experiment.tolerance_rel = 0.01;
        sc.reference.source = ReferenceSpec::Source::value;
        sc.reference.value = std::exp(0.1);
        sc.reference.provenance = "closed-form constant-coefficient value";
        return sc;
    }
    if (name == "quadratic-colehopf") {
        sc.ensemble = {100000, 211};
        sc.horizon.kind = HorizonSpec::Kind::constant;
        sc.driver.kind = DriverSpec::Kind::quadratic;
        sc.driver.alpha = 0.5;
        sc.terminal.kind = TerminalSpec::Kind::brownian;
        sc.experiment.kind = ExperimentSpec::Kind::solve;
        sc.reference.source = ReferenceSpec::Source::cole_hopf;
        return sc;
    }
    if (name == "stopped-optional-stopping") {
        sc.ensemble = {100000, 307};
        sc.horizon.kind = HorizonSpec::Kind::first_exit;
        sc.horizon.barrier = 1.0;
        sc.driver.kind = DriverSpec::Kind::zero;
        sc.terminal.kind = TerminalSpec::Kind::brownian;
        sc.experiment.kind = ExperimentSpec::Kind::solve;
        sc.experiment.tolerance_abs = 0.0;
        sc.reference.source = ReferenceSpec::Source::value;
        sc.reference.value = 0.0;
        sc.reference.provenance = "optional stopping of a bounded martingale";
        return sc;
    }
    if (name == "transform-equivalence") {
        sc.ensemble = {100000, 401};
        sc.horizon.kind = HorizonSpec::Kind::first_exit;
        sc.horizon.barrier = 1.0;
        sc.driver.kind = DriverSpec::Kind::quadratic;
        sc.driver.alpha = 0.25;
        sc.terminal.kind = TerminalSpec::Kind::tanh_brownian;
        sc.experiment.kind = ExperimentSpec::Kind::transform_check;
        sc.experiment.transformed_steps = 64;
        return sc;
    }
    if (name == "measure-solution-quadratic") {
        sc.ensemble = {100000, 503};
        sc.horizon.kind = HorizonSpec::Kind::first_exit;
        sc.horizon.barrier = 1.0;
        sc.driver.kind = DriverSpec::Kind::factored_quadratic;
        sc.driver.alpha = 0.25;
        sc.terminal.kind = TerminalSpec::Kind::tanh_brownian;
        sc.experiment.kind = ExperimentSpec::Kind::measure_solution;
        sc.reference.source = ReferenceSpec::Source::cole_hopf;
        return sc;
    }
    throw ScenarioError("unknown builtin scenario '" + name + "'");
}

}  // namespace tcbsde
