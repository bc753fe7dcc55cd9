#include "kseg/io/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kseg/errors.hpp"

namespace kseg {

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_metric_csv(const std::filesystem::path& path, const MetricTable& table,
                      const std::string& config_hash_hex, const std::string& tool_version) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("metrics: cannot write " + path.string());
    os << "# config_hash=" << config_hash_hex << "\n";
    os << "# tool_version=" << tool_version << "\n";
    os << "model,condition_type,condition_value,patient,dice\n";
    for (const auto& r : table)
        os << r.model << ',' << r.condition_type << ',' << format_double(r.condition_value) << ','
           << r.patient << ',' << format_double(r.dice) << '\n';
    if (!os) throw io_error("metrics: write failed for " + path.string());
}

MetricCsv read_metric_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("metrics: cannot open " + path.string());

    MetricCsv out;
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto grab = [&](const std::string& key) -> std::string {
                auto pos = line.find(key + "=");
                return pos == std::string::npos ? "" : line.substr(pos + key.size() + 1);
            };
            if (line.find("config_hash=") != std::string::npos)
                out.config_hash_hex = grab("config_hash");
            if (line.find("tool_version=") != std::string::npos)
                out.tool_version = grab("tool_version");
            continue;
        }
        if (!header_seen) {
            if (line != "model,condition_type,condition_value,patient,dice")
                throw io_error("metrics: unexpected header in " + path.string() + ": " + line);
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        MetricRecord rec;
        std::string field;
        if (!std::getline(ls, rec.model, ',') || !std::getline(ls, rec.condition_type, ','))
            throw io_error("metrics: malformed line " + std::to_string(lineno));
        try {
            std::getline(ls, field, ',');
            rec.condition_value = std::stod(field);
            std::getline(ls, field, ',');
            rec.patient = std::stoi(field);
            std::getline(ls, field, ',');
            rec.dice = std::stod(field);
        } catch (const std::logic_error&) {
            throw io_error("metrics: malformed line " + std::to_string(lineno) + " in " +
                           path.string());
        }
        out.table.push_back(std::move(rec));
    }
    if (!header_seen) throw io_error("metrics: missing header in " + path.string());
    return out;
}

void write_comparison_csv(const std::filesystem::path& path,
                          const std::vector<ComparisonResult>& results,
                          const std::string& config_hash_hex, const std::string& tool_version) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("comparisons: cannot write " + path.string());
    os << "# config_hash=" << config_hash_hex << "\n";
    os << "# tool_version=" << tool_version << "\n";
    os << "condition,p_raw,p_holm,significant\n";
    for (const auto& r : results)
        os << format_double(r.condition_value) << ',' << format_double(r.raw_p) << ','
           << format_double(r.holm_adjusted_p) << ',' << (r.significant ? 1 : 0) << '\n';
    if (!os) throw io_error("comparisons: write failed for " + path.string());
}

} // namespace kseg
