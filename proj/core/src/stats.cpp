#include "kseg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "kseg/errors.hpp"
#include "kseg/sampling.hpp"

namespace kseg {

std::pair<double, double> bootstrap_ci(const std::vector<double>& values, int n_resamples,
                                       double alpha, uint64_t seed) {
    if (values.empty()) throw validation_error("bootstrap_ci: empty input");
    if (n_resamples < 1) throw validation_error("bootstrap_ci: n_resamples must be >= 1");
    if (alpha <= 0.0 || alpha >= 1.0) throw validation_error("bootstrap_ci: alpha must be in (0,1)");

    const size_t n = values.size();
    SplitMix64 stream(seed);
    std::vector<double> means(n_resamples);
    for (int r = 0; r < n_resamples; ++r) {
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) sum += values[stream.next_below(n)];
        means[r] = sum / double(n);
    }
    std::sort(means.begin(), means.end());
    auto order_stat = [&](double q) {
        long rank = long(std::ceil(q * n_resamples));
        rank = std::clamp(rank, 1L, long(n_resamples));
        return means[rank - 1];
    };
    return {order_stat(alpha / 2.0), order_stat(1.0 - alpha / 2.0)};
}

namespace {

struct RankedDiffs {
    std::vector<double> ranks; // midranks of |d|, aligned with diffs
    std::vector<double> diffs; // nonzero differences
    double w_plus = 0.0;
    double tie_term = 0.0; // sum over tie groups of (t^3 - t)
};

RankedDiffs rank_differences(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw validation_error("wilcoxon_paired: length mismatch");
    RankedDiffs out;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d != 0.0) out.diffs.push_back(d);
    }
    const size_t n = out.diffs.size();
    out.ranks.assign(n, 0.0);
    if (n == 0) return out;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
        return std::abs(out.diffs[x]) < std::abs(out.diffs[y]);
    });

    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n &&
               std::abs(out.diffs[order[j + 1]]) == std::abs(out.diffs[order[i]]))
            ++j;
        double midrank = (double(i + 1) + double(j + 1)) / 2.0;
        size_t t = j - i + 1;
        out.tie_term += double(t) * t * t - double(t);
        for (size_t k = i; k <= j; ++k) out.ranks[order[k]] = midrank;
        i = j + 1;
    }
    for (size_t k = 0; k < n; ++k)
        if (out.diffs[k] > 0.0) out.w_plus += out.ranks[k];
    return out;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Exact two-sided p by dynamic programming over the 2^n sign assignments.
/// Ranks are doubled so midranks become integers.
double exact_two_sided_p(const std::vector<double>& ranks, double w_plus) {
    const size_t n = ranks.size();
    std::vector<long> r2(n);
    long total2 = 0;
    for (size_t i = 0; i < n; ++i) {
        r2[i] = std::lround(2.0 * ranks[i]);
        total2 += r2[i];
    }
    std::vector<uint64_t> ways(total2 + 1, 0);
    ways[0] = 1;
    long reach = 0;
    for (size_t i = 0; i < n; ++i) {
        reach += r2[i];
        for (long s = reach; s >= r2[i]; --s) ways[s] += ways[s - r2[i]];
    }
    // Two-sided: count sign patterns at least as far from the center
    // total2/2 as the observed doubled statistic.
    long w2 = std::lround(2.0 * w_plus);
    long obs_dev = std::llabs(2 * w2 - total2); // |2W - S| in doubled units
    uint64_t count = 0;
    for (long s = 0; s <= total2; ++s)
        if (std::llabs(2 * s - total2) >= obs_dev) count += ways[s];
    double p = double(count) / std::pow(2.0, double(n));
    return std::min(1.0, p);
}

} // namespace

double wilcoxon_statistic(const std::vector<double>& a, const std::vector<double>& b, int* n_used) {
    RankedDiffs rd = rank_differences(a, b);
    if (n_used) *n_used = int(rd.diffs.size());
    return rd.w_plus;
}

double wilcoxon_paired(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty()) throw validation_error("wilcoxon_paired: empty input");
    RankedDiffs rd = rank_differences(a, b);
    const size_t n = rd.diffs.size();
    if (n == 0) return 1.0;

    if (n <= 25) return exact_two_sided_p(rd.ranks, rd.w_plus);

    double nd = double(n);
    double mean = nd * (nd + 1.0) / 4.0;
    double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - rd.tie_term / 48.0;
    if (var <= 0.0) return 1.0;
    double dev = rd.w_plus - mean;
    double cc = dev > 0 ? -0.5 : (dev < 0 ? 0.5 : 0.0); // continuity toward the mean
    double z = (dev + cc) / std::sqrt(var);
    return std::min(1.0, 2.0 * normal_sf(std::abs(z)));
}

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
    const size_t m = p_values.size();
    for (double p : p_values)
        if (p < 0.0 || p > 1.0)
            throw validation_error("holm_adjust: p-values must lie in [0, 1]");
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return p_values[x] < p_values[y]; });

    std::vector<double> adjusted(m, 0.0);
    double running_max = 0.0;
    for (size_t i = 0; i < m; ++i) {
        double scaled = double(m - i) * p_values[order[i]];
        running_max = std::max(running_max, scaled);
        adjusted[order[i]] = std::min(1.0, running_max);
    }
    return adjusted;
}

std::vector<ComparisonResult> compare_models(const MetricTable& table, const std::string& model_a,
                                             const std::string& model_b,
                                             const std::string& condition_type,
                                             const std::vector<double>& family) {
    std::vector<ComparisonResult> results;
    std::vector<double> raw_ps;

    for (double condition : family) {
        std::map<int, double> dice_a, dice_b;
        for (const auto& r : table) {
            if (r.condition_type != condition_type || r.condition_value != condition) continue;
            if (r.model == model_a) dice_a[r.patient] = r.dice;
            if (r.model == model_b) dice_b[r.patient] = r.dice;
        }
        std::vector<int> missing;
        for (const auto& [p, d] : dice_a)
            if (!dice_b.count(p)) missing.push_back(p);
        for (const auto& [p, d] : dice_b)
            if (!dice_a.count(p)) missing.push_back(p);
        if (!missing.empty()) {
            std::ostringstream os;
            os << "compare_models: patient sets differ at " << condition_type << "=" << condition
               << "; unmatched patients:";
            for (int p : missing) os << ' ' << p;
            throw validation_error(os.str());
        }
        if (dice_a.empty())
            throw validation_error("compare_models: no records at " + condition_type + "=" +
                                   std::to_string(condition));

        std::vector<double> va, vb;
        for (const auto& [p, d] : dice_a) {
            va.push_back(d);
            vb.push_back(dice_b.at(p));
        }
        ComparisonResult res;
        res.condition_value = condition;
        int n_used = 0;
        res.statistic = wilcoxon_statistic(va, vb, &n_used);
        res.n_pairs_used = n_used;
        res.raw_p = wilcoxon_paired(va, vb);
        raw_ps.push_back(res.raw_p);
        results.push_back(res);
    }

    auto adjusted = holm_adjust(raw_ps);
    for (size_t i = 0; i < results.size(); ++i) {
        results[i].holm_adjusted_p = adjusted[i];
        results[i].significant = adjusted[i] < 0.05;
    }
    return results;
}

} // namespace kseg
