#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kseg/evaluation.hpp"

namespace kseg {

/// Percentile bootstrap confidence interval of the sample mean.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values, int n_resamples,
                                       double alpha, uint64_t seed);

/// Two-sided paired Wilcoxon signed-rank p-value. Zero differences are
/// dropped; |differences| are ranked with midranks for ties; the null
/// distribution is enumerated exactly for n <= 25 remaining pairs and
/// approximated normally (with tie and continuity corrections) above that.
/// All-zero differences give p = 1.
double wilcoxon_paired(const std::vector<double>& a, const std::vector<double>& b);

/// Holm step-down adjustment, returned in the input order.
std::vector<double> holm_adjust(const std::vector<double>& p_values);

struct ComparisonResult {
    double condition_value = 0.0;
    double raw_p = 1.0;
    double holm_adjusted_p = 1.0;
    int n_pairs_used = 0;
    double statistic = 0.0; // signed-rank sum W+
    bool significant = false;
};

/// Paired Wilcoxon of model_a vs model_b at every condition in the family,
/// Holm-corrected across the family; significance at adjusted p < 0.05.
/// Patients must match exactly between the two models at each condition.
std::vector<ComparisonResult> compare_models(const MetricTable& table, const std::string& model_a,
                                             const std::string& model_b,
                                             const std::string& condition_type,
                                             const std::vector<double>& family);

/// The signed-rank statistic W+ for diagnostics (zeros dropped, midranks).
double wilcoxon_statistic(const std::vector<double>& a, const std::vector<double>& b,
                          int* n_used = nullptr);

} // namespace kseg
