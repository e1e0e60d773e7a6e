#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gsde/driver.hpp"

namespace gsde {

/// Declarative dataset choice for a run: either two CSV paths or a
/// synthetic generator spec.
struct DataSpec {
    std::string source_csv;
    std::string target_csv;
    std::string kind = "two-moons";  // two-moons | blobs
    int n = 1000;
    double noise = 0.15;
    uint64_t seed = 7;
    double shift_rotation = 30.0;
    std::vector<double> shift_translation;
    double shift_scale = 1.0;
    double shift_noise = 0.0;
    int classes = 3;          // blobs only
    double blob_spread = 0.5; // blobs only
};

std::pair<Dataset, Dataset> materialize_data(const DataSpec& spec);

struct LabConfig {
    ExperimentConfig experiment;
    DataSpec data;
};

/// Flat dotted-key config file: one `key = value` per line, '#' comments.
/// Unknown keys are errors.
LabConfig load_config_file(const std::string& path);

/// Applies one `key=value` override (the --set flag).
void apply_config_override(LabConfig& cfg, const std::string& assignment);

/// Serializes the effective configuration back out (run metadata).
void write_resolved_config(const LabConfig& cfg, const std::string& path);

}  // namespace gsde
