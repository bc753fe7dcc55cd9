#pragma once

#include <filesystem>
#include <string>

#include "kseg/evaluation.hpp"
#include "kseg/stats.hpp"

namespace kseg {

/// Metric tables persist as CSV with leading '#' provenance comments and the
/// header model,condition_type,condition_value,patient,dice.
void write_metric_csv(const std::filesystem::path& path, const MetricTable& table,
                      const std::string& config_hash_hex, const std::string& tool_version);

struct MetricCsv {
    MetricTable table;
    std::string config_hash_hex;
    std::string tool_version;
};
MetricCsv read_metric_csv(const std::filesystem::path& path);

/// Comparison results persist as condition,p_raw,p_holm,significant.
void write_comparison_csv(const std::filesystem::path& path,
                          const std::vector<ComparisonResult>& results,
                          const std::string& config_hash_hex, const std::string& tool_version);

/// Canonical float formatting shared by all CSV writers.
std::string format_double(double v);

} // namespace kseg
