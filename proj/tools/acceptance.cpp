// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.
#include "ndlab/error.hpp"
#include "ndlab/harness.hpp"
#include "ndlab/parallel.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iomanip>
#include <iostream>
#include <set>

namespace {

using ndlab::CheckResult;
using ndlab::ExperimentConfig;

CheckResult combine(std::string name, const std::vector<CheckResult>& parts) {
    CheckResult r{std::move(name), true, "", 0.0};
    for (const auto& p : parts) {
        r.pass = r.pass && p.pass;
        r.seconds += p.seconds;
        if (!r.detail.empty()) r.detail += " | ";
        r.detail += p.name + ": " + (p.pass ? "" : "[fail] ") + p.detail;
    }
    return r;
}

CheckResult guarded(const std::string& name, const std::function<CheckResult()>& run) {
    try {
        return run();
    } catch (const std::exception& e) {
        return {name, false, std::string("raised ") + e.what(), 0.0};
    }
}

CheckResult relabel(CheckResult r, const std::string& name) {
    r.name = name;
    return r;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string dir = NDLAB_CONFIG_DIR;
    std::vector<int> only;
    int workers = 1;
    app.add_option("--configs", dir, "directory holding the experiment configurations");
    app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
    app.add_option("--workers", workers)->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    ndlab::worker_count() = workers;

    const std::set<int> wanted(only.begin(), only.end());
    auto load = [&](const std::string& name) { return ndlab::load_config(std::filesystem::path(dir) / name); };
    const ndlab::Tolerances tol;
    const std::uint64_t seed = 20240611;

    const std::vector<std::pair<int, std::function<CheckResult()>>> criteria{
        {1, [&] { return ndlab::check_algebra(seed, 1000, tol.algebra); }},
        {2, [&] { return ndlab::check_degeneracy(seed, 1000, tol.determinant); }},
        {3, [&] { return ndlab::check_alessandrini(seed, 50, 0.1, tol.alessandrini); }},
        {4, [&] { return ndlab::check_nd_structure(load("reference_two_layer.yaml")); }},
        {5, [&] { return ndlab::check_kernel_asymptotics(load("halfspace_probe.yaml")); }},
        {6, [&] { return ndlab::check_boundary_recovery(load("boundary_probe.yaml")); }},
        {7, [&] {
             return combine("layer stripping",
                            {guarded("two-layer", [&] {
                                 return relabel(ndlab::check_layer_stripping(load("reference_two_layer.yaml")),
                                                "two-layer");
                             }),
                             guarded("three-layer curved", [&] {
                                 return relabel(ndlab::check_layer_stripping(load("three_layer_curved.yaml")),
                                                "three-layer curved");
                             })});
         }},
        {8, [&] {
             return combine("uniqueness sanity",
                            {guarded("two-layer", [&] {
                                 return relabel(ndlab::check_uniqueness(load("reference_two_layer.yaml")),
                                                "two-layer");
                             }),
                             guarded("three-layer curved", [&] {
                                 return relabel(ndlab::check_uniqueness(load("three_layer_curved.yaml")),
                                                "three-layer curved");
                             })});
         }},
        {9, [&] { return ndlab::check_convergence(load("reference_two_layer.yaml")); }},
    };

    int failures = 0;
    for (const auto& [id, run] : criteria) {
        if (!wanted.empty() && !wanted.count(id)) continue;
        const CheckResult r = guarded("criterion " + std::to_string(id), run);
        std::cout << (r.pass ? "PASS" : "FAIL") << " [" << id << "] " << r.name << ": " << r.detail << " ("
                  << std::fixed << std::setprecision(1) << r.seconds << " s)" << std::defaultfloat << std::endl;
        if (!r.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
