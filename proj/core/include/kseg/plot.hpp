#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kseg/evaluation.hpp"
#include "kseg/features.hpp"
#include "kseg/stats.hpp"

namespace kseg {

/// One plotted curve: points with an optional confidence band.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band_lo; // empty = no band
    std::vector<double> band_hi;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    double y_min = 0.0;
    double y_max = 1.0;
    std::vector<std::pair<double, std::string>> annotations; // (x, text) above the axis
};

/// Deterministic self-contained SVG line plot.
void write_line_plot_svg(const std::filesystem::path& path, const PlotSpec& spec,
                         const std::vector<PlotSeries>& series);

/// Mean Dice vs condition with 95% bootstrap bands per model; when
/// comparisons are given, significance asterisks are drawn at each condition
/// (* <0.05, ** <0.01, *** <0.001 on the Holm-adjusted p).
void figure_dice_curves(const std::filesystem::path& path, const MetricTable& table,
                        const std::string& condition_type,
                        const std::vector<ComparisonResult>& comparisons, uint64_t bootstrap_seed);

/// Catastrophic failure rate (Dice == 0) per model vs condition.
void figure_failure_rate(const std::filesystem::path& path, const MetricTable& table,
                         const std::string& condition_type);

/// Per-channel radial k-space energy profiles.
void figure_radial_profiles(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, RadialProfile>>& profiles,
                            bool normalize_per_channel);

} // namespace kseg
