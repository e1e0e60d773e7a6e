#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsde/driver.hpp"

namespace gsde {

/// One line of the run metrics CSV: per-interval rows plus a final row per
/// run (the one whose iteration equals the run's last recorded step).
struct MetricsRow {
    std::string experiment_id;
    uint64_t seed = 0;
    int run = 0;
    int iteration = 0;
    double target_accuracy = 0.0;
    double per_class_accuracy = 0.0;
    double mean_disc_src = 0.0;
    double mean_disc_tgt = 0.0;
    int expansion_size = 0;
    double pseudo_accuracy = -1.0;
};

std::string metrics_header();
void append_metrics_rows(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> load_metrics_csv(const std::string& path);

/// Flattens one seed's run records into metrics rows.
std::vector<MetricsRow> metrics_from_records(const std::string& experiment_id,
                                             uint64_t seed,
                                             const std::vector<RunRecord>& records);

/// Last row of each (seed, run) group, in input order.
std::vector<MetricsRow> summary_rows(const std::vector<MetricsRow>& rows);

}  // namespace gsde
