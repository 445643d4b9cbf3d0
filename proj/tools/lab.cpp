// Command-line front end: runs registered experiments, re-checks their
// verdicts, and lists what is available. Exit codes: 0 pass, 2 verdict
// failure, 1 runtime error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "oprl/harness.hpp"

namespace {

int run_command(const std::string& experiment, oprl::HarnessOptions opts,
                const std::string& out_dir) {
    const oprl::ExperimentResult result = oprl::run_experiment(experiment, opts);
    oprl::write_outputs(result, out_dir);

    bool all_pass = true;
    std::vector<std::string> failed;
    for (const auto& v : result.verdicts) {
        std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << v.name << ": " << v.value << " "
                  << v.relation << " " << v.threshold << "\n";
        if (!v.pass) {
            all_pass = false;
            failed.push_back(v.name);
        }
    }
    std::cout << "wrote " << out_dir << "/trace.csv, summary.json, plot.svg\n";
    if (!all_pass) {
        std::cerr << "failed criteria:";
        for (const auto& name : failed) std::cerr << " " << name;
        std::cerr << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline policy-optimization lab"};
    app.require_subcommand(1);

    std::string experiment, out_dir = "out", check_dir, norm_str = "l2", eta_str = "auto";
    oprl::HarnessOptions opts;

    CLI::App* run = app.add_subcommand("run", "run one experiment and write its artifacts");
    run->add_option("experiment", experiment, "experiment id (see `lab list`)")->required();
    run->add_option("--seed", opts.seed, "seed for sampled datasets and instances");
    run->add_option("--k", opts.iterations, "iteration count override");
    run->add_option("--n", opts.n_samples, "sample-size / instance-count override");
    run->add_option("--eta", eta_str, "step size (float) or 'auto' for the formula value");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--update", opts.update_rule,
                    "update rule for exp_template: pspi | cmd | lspu-ols | lspu-sgd | "
                    "drpu-linf | drpu-chi2 | mean-match");
    run->add_option("--norm", norm_str, "norm pair: l2 | l1linf");
    run->add_option("--oracle", opts.oracle, "critic oracle kind: exact | perturbed");
    run->add_option("--pessimism", opts.pessimism,
                    "uniform pessimism magnitude for the perturbed oracle");
    run->add_option("--pessimism-file", opts.pessimism_file,
                    "JSON [s][a] pessimism table (overrides --pessimism)");
    run->add_flag("--verbose", opts.verbose, "extra logging and solver diagnostic dumps");

    CLI::App* check = app.add_subcommand("check", "re-evaluate verdicts from a run directory");
    check->add_option("dir", check_dir, "directory holding trace.csv and summary.json")->required();
    check->add_flag("--verbose", opts.verbose, "extra logging");

    CLI::App* list = app.add_subcommand("list", "list registered experiments");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const auto& name : oprl::experiment_names()) std::cout << name << "\n";
            return 0;
        }
        if (check->parsed()) return oprl::check_outputs(check_dir, opts.verbose);

        if (norm_str == "l2")
            opts.norm = oprl::Norm::L2;
        else if (norm_str == "l1linf")
            opts.norm = oprl::Norm::L1;
        else {
            std::cerr << "unknown norm: " << norm_str << "\n";
            return 1;
        }
        if (eta_str != "auto") opts.eta = std::stod(eta_str);
        return run_command(experiment, opts, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
