#include "oprl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oprl {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Verdict make_verdict(std::string name, double value, const std::string& relation,
                     double threshold) {
    Verdict v;
    v.name = std::move(name);
    v.value = value;
    v.threshold = threshold;
    v.relation = relation;
    v.pass = relation == "<=" ? value <= threshold : value >= threshold;
    return v;
}

void TraceTable::add(std::vector<double> row) {
    if (row.size() != columns.size())
        throw std::invalid_argument("trace row width does not match the header");
    rows.push_back(std::move(row));
}

int TraceTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

double TraceTable::at(std::size_t row, const std::string& name) const {
    const int idx = column_index(name);
    if (idx < 0) throw std::invalid_argument("trace has no column named " + name);
    return rows.at(row)[idx];
}

std::string TraceTable::to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out += ',';
        out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += fmt_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

TraceTable TraceTable::from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    TraceTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trace file: " + path);
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) t.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        t.add(std::move(row));
    }
    return t;
}

std::string render_svg(const PlotSpec& spec) {
    const double width = 720, height = 440;
    const double ml = 70, mr = 20, mt = 34, mb = 46;
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    auto ty = [&](double y) { return spec.log_y ? std::log10(std::max(y, 1e-300)) : y; };
    for (const auto& s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double x = s.x[i], y = ty(s.y[i]);
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (ty(y) - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
        << spec.title << "</text>\n";
    // axes
    svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">" << spec.x_label << "</text>\n";
    svg << "<text x=\"16\" y=\"" << (mt + height - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << (mt + height - mb) / 2 << ")\">" << spec.y_label << (spec.log_y ? " (log10)" : "")
        << "</text>\n";
    svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(xmin) << "</text>\n";
    svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(xmax) << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << height - mb
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(ymin) << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(ymax) << "</text>\n";

    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const auto& s = spec.series[si];
        const char* color = palette[si % (sizeof(palette) / sizeof(palette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << ' ';
            svg << px(s.x[i]) << ',' << py(s.y[i]);
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << width - mr - 6 << "\" y=\"" << mt + 16 + 14 * si
            << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">" << s.label
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

bool ExperimentResult::all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

void write_outputs(const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::ofstream trace(fs::path(out_dir) / "trace.csv", std::ios::binary);
    trace << result.trace.to_csv();
    trace.close();

    nlohmann::json j;
    j["experiment"] = result.id;
    j["config"] = nlohmann::json::parse(result.config_echo.empty() ? "{}" : result.config_echo);
    if (!result.diagnostics.empty()) j["diagnostics"] = nlohmann::json::parse(result.diagnostics);
    nlohmann::json verdicts;
    for (const auto& v : result.verdicts) {
        verdicts[v.name] = {{"value", v.value},
                            {"threshold", v.threshold},
                            {"relation", v.relation},
                            {"pass", v.pass}};
    }
    j["verdicts"] = verdicts;
    j["pass"] = result.all_pass();
    j["runtime_us"] = result.runtime_us;
    std::ofstream summary(fs::path(out_dir) / "summary.json", std::ios::binary);
    summary << j.dump(2) << "\n";
    summary.close();

    std::ofstream plot(fs::path(out_dir) / "plot.svg", std::ios::binary);
    plot << render_svg(result.plot);
    plot.close();

    for (const auto& [name, table] : result.extra_tables) {
        std::ofstream extra(fs::path(out_dir) / (name + ".csv"), std::ios::binary);
        extra << table.to_csv();
    }
}

int check_outputs(const std::string& out_dir, bool verbose) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(out_dir) / "summary.json");
    if (!in) {
        std::cerr << "no summary.json under " << out_dir << "\n";
        return 1;
    }
    nlohmann::json j;
    in >> j;
    const std::string id = j.at("experiment").get<std::string>();
    const TraceTable trace = TraceTable::from_csv_file((fs::path(out_dir) / "trace.csv").string());
    const std::vector<Verdict> fresh = verdicts_from_trace(id, trace);

    bool all_pass = true, consistent = true;
    for (const auto& v : fresh) {
        all_pass = all_pass && v.pass;
        std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << id << "/" << v.name << ": "
                  << fmt_double(v.value) << " " << v.relation << " " << fmt_double(v.threshold)
                  << "\n";
        if (j.at("verdicts").contains(v.name)) {
            const bool stored = j.at("verdicts").at(v.name).at("pass").get<bool>();
            if (stored != v.pass) {
                consistent = false;
                std::cout << "  (stored verdict disagrees: " << (stored ? "pass" : "fail") << ")\n";
            }
        } else {
            consistent = false;
            std::cout << "  (verdict missing from summary.json)\n";
        }
    }
    if (verbose)
        std::cout << "checked " << fresh.size() << " verdicts against " << out_dir << "\n";
    return all_pass && consistent ? 0 : 2;
}

}  // namespace oprl
