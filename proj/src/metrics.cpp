#include "gsde/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace gsde {

std::string metrics_header() {
    return "experiment_id,seed,run,iteration,target_accuracy,"
           "per_class_accuracy,mean_disc_src,mean_disc_tgt,expansion_size,"
           "pseudo_accuracy";
}

void append_metrics_rows(std::ostream& out,
                         const std::vector<MetricsRow>& rows) {
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        out << r.experiment_id << ',' << r.seed << ',' << r.run << ','
            << r.iteration << ',' << num(r.target_accuracy) << ','
            << num(r.per_class_accuracy) << ',' << num(r.mean_disc_src) << ','
            << num(r.mean_disc_tgt) << ',' << r.expansion_size << ','
            << num(r.pseudo_accuracy) << '\n';
    }
}

std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_metrics_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) ||
        line.substr(0, line.find('\r')) != metrics_header()) {
        throw ParseError(path + ":1: unexpected metrics header");
    }
    std::vector<MetricsRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string field;
        MetricsRow r;
        try {
            std::getline(ss, r.experiment_id, ',');
            std::getline(ss, field, ',');
            r.seed = std::stoull(field);
            std::getline(ss, field, ',');
            r.run = std::stoi(field);
            std::getline(ss, field, ',');
            r.iteration = std::stoi(field);
            std::getline(ss, field, ',');
            r.target_accuracy = std::stod(field);
            std::getline(ss, field, ',');
            r.per_class_accuracy = std::stod(field);
            std::getline(ss, field, ',');
            r.mean_disc_src = std::stod(field);
            std::getline(ss, field, ',');
            r.mean_disc_tgt = std::stod(field);
            std::getline(ss, field, ',');
            r.expansion_size = std::stoi(field);
            if (!std::getline(ss, field)) throw std::invalid_argument("");
            r.pseudo_accuracy = std::stod(field);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": malformed metrics row");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricsRow> metrics_from_records(
    const std::string& experiment_id, uint64_t seed,
    const std::vector<RunRecord>& records) {
    std::vector<MetricsRow> rows;
    for (const auto& rec : records) {
        for (const auto& stats : rec.trace) {
            MetricsRow r;
            r.experiment_id = experiment_id;
            r.seed = seed;
            r.run = rec.run;
            r.iteration = stats.iteration;
            r.target_accuracy = stats.accuracy;
            r.per_class_accuracy = stats.per_class_accuracy;
            r.mean_disc_src = stats.mean_disc_src;
            r.mean_disc_tgt = stats.mean_disc_tgt;
            r.expansion_size = rec.expansion_size;
            r.pseudo_accuracy = rec.pseudo_accuracy;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

std::vector<MetricsRow> summary_rows(const std::vector<MetricsRow>& rows) {
    std::map<std::pair<uint64_t, int>, size_t> last;
    for (size_t i = 0; i < rows.size(); ++i) {
        last[{rows[i].seed, rows[i].run}] = i;
    }
    std::vector<MetricsRow> out;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (last[{rows[i].seed, rows[i].run}] == i) out.push_back(rows[i]);
    }
    return out;
}

}  // namespace gsde
