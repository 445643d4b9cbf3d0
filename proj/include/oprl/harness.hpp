#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "oprl/actor.hpp"

namespace oprl {

/// One acceptance check: `value relation threshold` (relation "<=" or ">=").
struct Verdict {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation = "<=";
    bool pass = false;
};

Verdict make_verdict(std::string name, double value, const std::string& relation,
                     double threshold);

/// Numeric table with named columns; serializes to CSV with %.17g so equal
/// configs produce byte-identical files.
struct TraceTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row);
    int column_index(const std::string& name) const;  // -1 when absent
    double at(std::size_t row, const std::string& name) const;
    std::string to_csv() const;
    static TraceTable from_csv_file(const std::string& path);
};

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

struct PlotSpec {
    std::string title, x_label, y_label;
    bool log_y = false;
    std::vector<PlotSeries> series;
};

std::string render_svg(const PlotSpec& spec);

/// Options shared by all experiments; unset fields fall back to
/// per-experiment defaults.
struct HarnessOptions {
    std::uint64_t seed = 0;
    int iterations = -1;
    int n_samples = -1;
    std::optional<double> eta;  // unset: theorem formula / golden default
    std::string update_rule;    // exp_template only
    Norm norm = Norm::L2;
    bool verbose = false;
    std::string oracle = "exact";     // exact | perturbed (exp_template)
    double pessimism = 0.0;           // uniform pessimism magnitude
    std::string pessimism_file;       // JSON [s][a] table, overrides the scalar
};

struct ExperimentResult {
    std::string id;
    TraceTable trace;
    std::vector<Verdict> verdicts;
    PlotSpec plot;
    std::string config_echo;   // JSON text of the resolved configuration
    std::string diagnostics;   // JSON text of non-verdict metrics
    std::int64_t runtime_us = 0;
    // verbose-mode diagnostic dumps, written as <name>.csv next to trace.csv
    std::vector<std::pair<std::string, TraceTable>> extra_tables;

    bool all_pass() const;
};

std::vector<std::string> experiment_names();
bool is_experiment(const std::string& id);

/// Runs one registered experiment. Throws std::invalid_argument for unknown
/// ids or bad options.
ExperimentResult run_experiment(const std::string& id, const HarnessOptions& options);

/// Writes trace.csv, summary.json and plot.svg into out_dir (created if
/// needed).
void write_outputs(const ExperimentResult& result, const std::string& out_dir);

/// Recomputes the experiment's verdicts from trace.csv alone and compares
/// them to summary.json. Returns 0 when everything passes, 2 otherwise.
int check_outputs(const std::string& out_dir, bool verbose = false);

/// Verdict recomputation used by both run and check paths; operates purely
/// on the trace.
std::vector<Verdict> verdicts_from_trace(const std::string& id, const TraceTable& trace);

}  // namespace oprl
