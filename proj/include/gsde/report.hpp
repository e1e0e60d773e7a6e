#pragma once

#include <string>
#include <vector>

#include "gsde/metrics.hpp"

namespace gsde {

/// One aggregated sweep point: mean and standard deviation of the final
/// accuracy over seeds at one axis value.
struct SweepRow {
    std::string axis;
    double value = 0.0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    int num_seeds = 0;
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> load_sweep_csv(const std::string& path);

/// Tidy long-format series for external plotting: figure,series,x,y.
struct PlotPoint {
    std::string figure;
    std::string series;
    double x = 0.0;
    double y = 0.0;
};

/// Accuracy-per-run, accuracy-within-run and discriminator-trace series
/// from run metrics. Per-iteration series aggregate the seed mean; the
/// per-run series carries one point per run.
std::vector<PlotPoint> plotdata_from_metrics(const std::vector<MetricsRow>& rows);

/// Accuracy-vs-axis series from an aggregated sweep file.
std::vector<PlotPoint> plotdata_from_sweep(const std::vector<SweepRow>& rows);

void write_plot_csv(const std::string& path, const std::vector<PlotPoint>& points);

/// Mean and (population) standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace gsde
