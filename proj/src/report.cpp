#include "gsde/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gsde {

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("write_sweep_csv: cannot open '" + path + "'");
    out << "axis,value,mean_accuracy,std_accuracy,num_seeds\n";
    for (const auto& r : rows) {
        out << r.axis << ',' << num(r.value) << ',' << num(r.mean_accuracy)
            << ',' << num(r.std_accuracy) << ',' << r.num_seeds << '\n';
    }
}

std::vector<SweepRow> load_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_sweep_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) ||
        line.substr(0, line.find('\r')) !=
            "axis,value,mean_accuracy,std_accuracy,num_seeds") {
        throw ParseError(path + ":1: unexpected sweep header");
    }
    std::vector<SweepRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string field;
        SweepRow r;
        try {
            std::getline(ss, r.axis, ',');
            std::getline(ss, field, ',');
            r.value = std::stod(field);
            std::getline(ss, field, ',');
            r.mean_accuracy = std::stod(field);
            std::getline(ss, field, ',');
            r.std_accuracy = std::stod(field);
            if (!std::getline(ss, field)) throw std::invalid_argument("");
            r.num_seeds = std::stoi(field);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": malformed sweep row");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<PlotPoint> plotdata_from_metrics(
    const std::vector<MetricsRow>& rows) {
    // Seed means per (run, iteration).
    std::map<std::pair<int, int>, std::vector<double>> acc;
    std::map<std::pair<int, int>, std::vector<double>> disc_src;
    std::map<std::pair<int, int>, std::vector<double>> disc_tgt;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.run, r.iteration);
        acc[key].push_back(r.target_accuracy);
        disc_src[key].push_back(r.mean_disc_src);
        disc_tgt[key].push_back(r.mean_disc_tgt);
    }

    std::vector<PlotPoint> points;
    for (const auto& [key, values] : acc) {
        points.push_back({"fig4", "run" + std::to_string(key.first),
                          static_cast<double>(key.second),
                          mean_std(values).first});
    }
    for (const auto& [key, values] : disc_src) {
        points.push_back({"fig5", "run" + std::to_string(key.first) + ":src",
                          static_cast<double>(key.second),
                          mean_std(values).first});
    }
    for (const auto& [key, values] : disc_tgt) {
        points.push_back({"fig5", "run" + std::to_string(key.first) + ":tgt",
                          static_cast<double>(key.second),
                          mean_std(values).first});
    }

    // Final accuracy per run, averaged over seeds.
    std::map<int, std::vector<double>> final_acc;
    for (const auto& r : summary_rows(rows)) {
        final_acc[r.run].push_back(r.target_accuracy);
    }
    for (const auto& [run, values] : final_acc) {
        points.push_back({"fig3c", "final_accuracy",
                          static_cast<double>(run), mean_std(values).first});
    }
    return points;
}

std::vector<PlotPoint> plotdata_from_sweep(const std::vector<SweepRow>& rows) {
    std::vector<PlotPoint> points;
    for (const auto& r : rows) {
        const std::string figure = r.axis == "bottlenecks" ? "fig3b" : "fig3a";
        points.push_back({figure, r.axis, r.value, r.mean_accuracy});
    }
    return points;
}

void write_plot_csv(const std::string& path,
                    const std::vector<PlotPoint>& points) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("write_plot_csv: cannot open '" + path + "'");
    out << "figure,series,x,y\n";
    for (const auto& p : points) {
        out << p.figure << ',' << p.series << ',' << num(p.x) << ','
            << num(p.y) << '\n';
    }
}

}  // namespace gsde
