#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcbsde/bsde.hpp"
#include "tcbsde/measure_solution.hpp"
#include "tcbsde/regression.hpp"
#include "tcbsde/solver.hpp"

namespace tcbsde {

// Schema violation in a scenario description; the message names the field path.
struct ScenarioError : std::runtime_error {
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

struct GridSpec {
    double horizon{1.0};
    std::size_t steps{256};
};

struct EnsembleSpec {
    std::size_t paths{100000};
    std::uint64_t seed{};
};

struct HorizonSpec {
    enum class Kind { constant, first_exit };
    Kind kind{Kind::constant};
    double barrier{};
};

struct DriverSpec {
    enum class Kind { zero, linear, quadratic, factored_quadratic };
    Kind kind{Kind::zero};
    double forcing{}, beta{}, mu{};
    double alpha{};
};

struct TerminalSpec {
    enum class Kind { constant, brownian, tanh_brownian, squared_brownian };
    Kind kind{Kind::constant};
    double value{};
};

struct ReferenceSpec {
    enum class Source { none, value, cole_hopf };
    Source source{Source::none};
    double value{};
    std::string provenance;
};

struct ExperimentSpec {
    enum class Kind { solve, transform_check, linear_formula, measure_solution, convergence };
    Kind kind{Kind::solve};
    int basis_degree{3};
    int aux_degree{2};
    std::size_t transformed_steps{0};  // 0 picks a default from the horizon kind
    std::size_t max_iterations{50};
    double iteration_tol{1e-4};
    std::vector<std::size_t> steps_list;  // convergence refinements
    std::vector<std::size_t> paths_list;  // optional per-refinement path counts
    double tolerance_rel{0.02};
    double tolerance_abs{0.02};
};

struct Scenario {
    std::string name;
    GridSpec grid;
    EnsembleSpec ensemble;
    HorizonSpec horizon;
    DriverSpec driver;
    TerminalSpec terminal;
    ExperimentSpec experiment;
    ReferenceSpec reference;
    std::string output;  // optional CSV destination
};

struct ResultRow {
    std::string scenario;
    std::string quantity;
    double estimate{};
    double standard_error{};
    std::optional<double> reference;
    std::string provenance;
    std::string status;  // pass | fail | info
    double wall_time_s{};
};

struct ResultTable {
    std::vector<ResultRow> rows;
    bool all_passed() const;
};

// Strict parse: a single JSON object, unknown fields rejected, kind-specific
// parameters required. Errors name the offending field path.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& file);

ResultTable run_scenario(const Scenario& scenario);

// Fixed columns, floating point at 17 significant digits:
// scenario,quantity,estimate,standard_error,reference,provenance,status,wall_time_s
std::string to_csv(const ResultTable& table);
void write_csv(const std::filesystem::path& file, const ResultTable& table);

struct BuiltinScenario {
    std::string name;
    std::string summary;
};

std::vector<BuiltinScenario> list_builtin_scenarios();
Scenario builtin_scenario(const std::string& name);

}  // namespace tcbsde
