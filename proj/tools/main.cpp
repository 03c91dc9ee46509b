#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "tcbsde/parallel.hpp"
#include "tcbsde/scenario.hpp"

namespace {
constexpr const char* kVersion = "0.1.0";
}

int main(int argc, char** argv) {
    CLI::App app{"scenario runner for BSDE horizon-transform experiments"};
    app.require_subcommand(1);

    std::string target;
    std::string out;
    unsigned threads = 0;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "execute a scenario file or a builtin name");
    run->add_option("scenario", target, "scenario JSON file path, or a builtin name")->required();
    run->add_option("--out", out, "CSV destination; overrides the scenario's output field");
    run->add_option("--threads", threads,
                    "worker threads (0 = all cores; results do not depend on this)");
    run->add_flag("--quiet", quiet, "suppress the CSV echo on stdout");

    auto* list = app.add_subcommand("list", "list builtin scenarios");
    auto* version = app.add_subcommand("version", "print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        for (const auto& b : tcbsde::list_builtin_scenarios())
            std::printf("%-28s %s\n", b.name.c_str(), b.summary.c_str());
        return 0;
    }
    if (version->parsed()) {
        std::printf("tcbsde %s\n", kVersion);
        return 0;
    }

    try {
        tcbsde::par::set_thread_count(threads);
        tcbsde::Scenario sc;
        bool is_builtin = false;
        for (const auto& b : tcbsde::list_builtin_scenarios())
            if (b.name == target) is_builtin = true;
        sc = is_builtin ? tcbsde::builtin_scenario(target) : tcbsde::load_scenario(target);
        if (!out.empty()) sc.output = out;
        const tcbsde::ResultTable table = tcbsde::run_scenario(sc);
        if (!quiet) std::fputs(tcbsde::to_csv(table).c_str(), stdout);
        return table.all_passed() ? 0 : 1;
    } catch (const tcbsde::ScenarioError& e) {
        std::fprintf(stderr, "scenario error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "hard error: %s\n", e.what());
        return 3;
    }
}
