#include "ndlab/error.hpp"
#include "ndlab/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Layered anisotropic inverse-problem lab"};
    std::string command;
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool verbose = false;
    app.add_option("command", command, "forward | ndmap | probe | recover | verify | report")
        ->required()
        ->check(CLI::IsMember({"forward", "ndmap", "probe", "recover", "verify", "report"}));
    app.add_option("--config", config_path, "experiment YAML")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (default: the config's output)");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--verbose,-v", verbose);
    CLI11_PARSE(app, argc, argv);

    try {
        ndlab::ExperimentConfig config = ndlab::load_config(config_path);
        if (seed) config.seed = *seed;
        if (workers) config.workers = *workers;
        ndlab::RunOptions run{out.empty() ? std::filesystem::path(config.output) : std::filesystem::path(out), verbose};
        return ndlab::run_command(command, config, run, std::cout);
    } catch (const ndlab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
