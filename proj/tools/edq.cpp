// edq: command line front end for the queueing toolkit.
//
// Each subcommand reads a JSON scenario file, validates it, runs the
// corresponding computation, and writes the result either to stdout or to
// the file named by the scenario's "output" field (see --out to override).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "edq/scenario.hpp"
#include "edq/version.hpp"

namespace {

struct CommonOpts {
    std::string scenario_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("scenario", opts.scenario_path, "scenario file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "write the result here instead of the scenario's output");
    cmd->add_option("--seed", opts.seed, "override the scenario's seed");
    cmd->add_option("--threads", opts.threads, "worker threads")
        ->envname("EDQ_THREADS")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--dry-run", opts.dry_run, "validate and print the resolved scenario, then stop");
}

int run_command(edq::ScenarioKind kind, const CommonOpts& opts) {
    edq::Scenario scenario;
    try {
        scenario = edq::load_scenario_file(opts.scenario_path, kind, opts.out, opts.seed);
    } catch (const edq::Error& e) {
        std::cerr << "edq: " << e.what() << "\n";
        return 2;
    }

    if (opts.dry_run) {
        std::cout << scenario.resolved.dump(2) << "\n";
        return 0;
    }

    std::string content;
    try {
        content = edq::run_scenario(scenario, opts.threads);
    } catch (const edq::Error& e) {
        std::cerr << "edq: " << e.what() << "\n";
        return 3;
    }

    if (scenario.output.empty()) {
        std::cout << content;
        return 0;
    }
    std::filesystem::path path(scenario.output);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            std::cerr << "edq: cannot create '" << path.parent_path().string()
                      << "': " << ec.message() << "\n";
            return 3;
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::cerr << "edq: cannot write '" << scenario.output << "'\n";
        return 3;
    }
    out << content;
    out.close();
    if (!out) {
        std::cerr << "edq: cannot write '" << scenario.output << "'\n";
        return 3;
    }
    std::cerr << "wrote " << scenario.output << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"many-server queue approximations, simulation, and staffing"};
    app.set_version_flag("--version", std::string("edq ") + edq::kVersion);
    app.require_subcommand(1);

    struct Sub {
        edq::ScenarioKind kind;
        const char* name;
        const char* blurb;
    };
    const Sub subs[] = {
        {edq::ScenarioKind::approx, "approx", "closed-form performance measures for a set of queues"},
        {edq::ScenarioKind::simulate, "simulate",
         "discrete-event estimates with batch-means confidence intervals"},
        {edq::ScenarioKind::staff, "staff", "smallest server count meeting a service objective"},
        {edq::ScenarioKind::fclt, "fclt",
         "scaled superposition ensembles and Brownian-limit diagnostics"},
        {edq::ScenarioKind::mam, "mam",
         "matrix-analytic state distribution for Markovian instances"},
        {edq::ScenarioKind::compare, "compare", "side-by-side table of evaluators on shared cells"},
    };

    CommonOpts opts[std::size(subs)];
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].blurb);
        add_common(cmd, opts[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (std::size_t i = 0; i < std::size(subs); ++i)
        if (app.get_subcommand(subs[i].name)->parsed()) return run_command(subs[i].kind, opts[i]);
    return 2;
}
