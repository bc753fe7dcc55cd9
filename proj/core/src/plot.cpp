#include "kseg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kseg/errors.hpp"

namespace kseg {

namespace {

constexpr int kWidth = 760, kHeight = 480;
constexpr int kLeft = 70, kRight = 30, kTop = 46, kBottom = 58;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Mapper {
    double x_lo, x_hi, y_lo, y_hi;
    bool log_x;
    double tx(double x) const {
        double u = log_x ? std::log10(std::max(x, 1e-12)) : x;
        double lo = log_x ? std::log10(std::max(x_lo, 1e-12)) : x_lo;
        double hi = log_x ? std::log10(std::max(x_hi, 1e-12)) : x_hi;
        if (hi == lo) return kLeft;
        return kLeft + (u - lo) / (hi - lo) * (kWidth - kLeft - kRight);
    }
    double ty(double y) const {
        if (y_hi == y_lo) return kHeight - kBottom;
        return (kHeight - kBottom) - (y - y_lo) / (y_hi - y_lo) * (kHeight - kTop - kBottom);
    }
};

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

void write_line_plot_svg(const std::filesystem::path& path, const PlotSpec& spec,
                         const std::vector<PlotSeries>& series) {
    if (series.empty()) throw validation_error("plot: no series to draw");

    double x_lo = 1e300, x_hi = -1e300;
    for (const auto& s : series)
        for (double x : s.x) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
        }
    if (!(x_lo <= x_hi)) throw validation_error("plot: series contain no points");

    Mapper m{x_lo, x_hi, spec.y_min, spec.y_max, spec.log_x};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\">"
       << escape_xml(spec.title) << "</text>\n";

    // Axes.
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
       << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    // Y ticks.
    for (int t = 0; t <= 5; ++t) {
        double y = spec.y_min + (spec.y_max - spec.y_min) * t / 5.0;
        double py = m.ty(y);
        os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt(py) << "\" x2=\"" << kLeft
           << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py + 4)
           << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(y)
           << "</text>\n";
    }
    // X ticks at data positions (unique).
    std::set<double> xticks;
    for (const auto& s : series)
        for (double x : s.x) xticks.insert(x);
    for (double x : xticks) {
        double px = m.tx(x);
        os << "<line x1=\"" << fmt(px) << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << fmt(px)
           << "\" y2=\"" << kHeight - kBottom + 4 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fmt(px) << "\" y=\"" << kHeight - kBottom + 18
           << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" << fmt(x)
           << "</text>\n";
    }
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 16
       << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
       << escape_xml(spec.x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << (kTop + kHeight - kBottom) / 2
       << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "transform=\"rotate(-90 18 "
       << (kTop + kHeight - kBottom) / 2 << ")\">" << escape_xml(spec.y_label) << "</text>\n";

    // Confidence bands first so curves draw on top.
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.band_lo.size() != s.x.size() || s.band_hi.size() != s.x.size()) continue;
        std::ostringstream pts;
        for (size_t i = 0; i < s.x.size(); ++i)
            pts << fmt(m.tx(s.x[i])) << ',' << fmt(m.ty(std::clamp(s.band_hi[i], spec.y_min, spec.y_max))) << ' ';
        for (size_t i = s.x.size(); i-- > 0;)
            pts << fmt(m.tx(s.x[i])) << ',' << fmt(m.ty(std::clamp(s.band_lo[i], spec.y_min, spec.y_max))) << ' ';
        os << "<polygon points=\"" << pts.str() << "\" fill=\""
           << kPalette[si % std::size(kPalette)] << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::ostringstream pts;
        for (size_t i = 0; i < s.x.size(); ++i)
            pts << fmt(m.tx(s.x[i])) << ',' << fmt(m.ty(std::clamp(s.y[i], spec.y_min, spec.y_max)))
                << ' ';
        os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx=\"" << fmt(m.tx(s.x[i])) << "\" cy=\""
               << fmt(m.ty(std::clamp(s.y[i], spec.y_min, spec.y_max)))
               << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        // Legend.
        double ly = kTop + 16.0 * double(si);
        os << "<line x1=\"" << kWidth - kRight - 150 << "\" y1=\"" << fmt(ly) << "\" x2=\""
           << kWidth - kRight - 126 << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 120 << "\" y=\"" << fmt(ly + 4)
           << "\" font-size=\"11\" font-family=\"sans-serif\">" << escape_xml(s.label)
           << "</text>\n";
    }

    for (const auto& [x, text] : spec.annotations)
        os << "<text x=\"" << fmt(m.tx(x)) << "\" y=\"" << kTop + 12
           << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
           << escape_xml(text) << "</text>\n";

    os << "</svg>\n";

    std::ofstream file(path, std::ios::trunc);
    if (!file) throw io_error("plot: cannot write " + path.string());
    file << os.str();
    if (!file) throw io_error("plot: write failed for " + path.string());
}

namespace {

std::vector<std::string> table_models(const MetricTable& table) {
    std::vector<std::string> models;
    for (const auto& r : table)
        if (std::find(models.begin(), models.end(), r.model) == models.end())
            models.push_back(r.model);
    std::sort(models.begin(), models.end());
    return models;
}

std::vector<double> table_conditions(const MetricTable& table, const std::string& type) {
    std::set<double> conds;
    for (const auto& r : table)
        if (r.condition_type == type) conds.insert(r.condition_value);
    return {conds.begin(), conds.end()};
}

} // namespace

void figure_dice_curves(const std::filesystem::path& path, const MetricTable& table,
                        const std::string& condition_type,
                        const std::vector<ComparisonResult>& comparisons, uint64_t bootstrap_seed) {
    auto models = table_models(table);
    auto conditions = table_conditions(table, condition_type);
    if (models.empty() || conditions.empty())
        throw validation_error("figure_dice_curves: table has no matching records");

    std::vector<PlotSeries> series;
    for (const auto& model : models) {
        PlotSeries s;
        s.label = model;
        for (double c : conditions) {
            auto values = table_dice_values(table, model, condition_type, c);
            if (values.empty()) continue;
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= double(values.size());
            auto [lo, hi] = bootstrap_ci(values, 10000, 0.05,
                                         bootstrap_seed ^ fnv1a64(model + "|" + fmt(c)));
            s.x.push_back(c);
            s.y.push_back(mean);
            s.band_lo.push_back(lo);
            s.band_hi.push_back(hi);
        }
        series.push_back(std::move(s));
    }

    PlotSpec spec;
    spec.title = condition_type == "snr" ? "Dice vs k-space SNR" : "Dice vs acceleration";
    spec.x_label = condition_type == "snr" ? "SNR (dB)" : "Acceleration factor";
    spec.y_label = "Mean Dice (95% bootstrap CI)";
    spec.log_x = condition_type != "snr";
    for (const auto& cmp : comparisons) {
        if (!cmp.significant) continue;
        std::string stars = cmp.holm_adjusted_p < 0.001 ? "***"
                            : cmp.holm_adjusted_p < 0.01 ? "**"
                                                         : "*";
        spec.annotations.push_back({cmp.condition_value, stars});
    }
    write_line_plot_svg(path, spec, series);
}

void figure_failure_rate(const std::filesystem::path& path, const MetricTable& table,
                         const std::string& condition_type) {
    auto models = table_models(table);
    auto conditions = table_conditions(table, condition_type);
    if (models.empty() || conditions.empty())
        throw validation_error("figure_failure_rate: table has no matching records");

    std::vector<PlotSeries> series;
    for (const auto& model : models) {
        PlotSeries s;
        s.label = model;
        for (double c : conditions) {
            auto values = table_dice_values(table, model, condition_type, c);
            if (values.empty()) continue;
            s.x.push_back(c);
            s.y.push_back(failure_rate(values));
        }
        series.push_back(std::move(s));
    }

    PlotSpec spec;
    spec.title = "Catastrophic failure rate (Dice = 0)";
    spec.x_label = condition_type == "snr" ? "SNR (dB)" : "Acceleration factor";
    spec.y_label = "Failure rate";
    spec.log_x = condition_type != "snr";
    write_line_plot_svg(path, spec, series);
}

void figure_radial_profiles(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, RadialProfile>>& profiles,
                            bool normalize_per_channel) {
    if (profiles.empty()) throw validation_error("figure_radial_profiles: no profiles");
    std::vector<PlotSeries> series;
    double y_max = 0.0;
    for (const auto& [label, profile] : profiles) {
        PlotSeries s;
        s.label = label;
        double peak = 0.0;
        for (double e : profile.energy) peak = std::max(peak, e);
        double denom = normalize_per_channel && peak > 0.0 ? peak : 1.0;
        for (int b = 0; b < profile.n_bins; ++b) {
            double center = 0.5 * (profile.bin_edges[b] + profile.bin_edges[b + 1]);
            s.x.push_back(center);
            s.y.push_back(profile.energy[b] / denom);
            y_max = std::max(y_max, s.y.back());
        }
        series.push_back(std::move(s));
    }
    PlotSpec spec;
    spec.title = "Radial k-space energy profiles";
    spec.x_label = "Normalized spatial frequency";
    spec.y_label = normalize_per_channel ? "Energy (per-channel normalized)" : "Mean |k|^2";
    spec.y_max = std::max(1e-12, y_max * 1.05);
    write_line_plot_svg(path, spec, series);
}

} // namespace kseg
