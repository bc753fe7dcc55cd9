#include "kseg/io/config_tree.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kseg/errors.hpp"
#include "kseg/sampling.hpp"

namespace kseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

ConfigTree ConfigTree::parse(const std::string& text) {
    ConfigTree tree;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw validation_error("config: missing '=' on line " + std::to_string(lineno) + ": " +
                                   t);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw validation_error("config: empty key on line " + std::to_string(lineno));
        tree.values_[key] = value;
    }
    return tree;
}

ConfigTree ConfigTree::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("config: cannot open " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse(buffer.str());
}

std::string ConfigTree::serialize() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
    return os.str();
}

void ConfigTree::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("config: cannot write " + path);
    os << serialize();
    if (!os) throw io_error("config: write failed for " + path);
}

uint64_t ConfigTree::hash() const { return fnv1a64(serialize()); }

std::string ConfigTree::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

void ConfigTree::set_int(const std::string& key, long long v) { values_[key] = std::to_string(v); }
void ConfigTree::set_uint(const std::string& key, uint64_t v) { values_[key] = std::to_string(v); }

void ConfigTree::set_double(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    values_[key] = buf;
}

void ConfigTree::set_bool(const std::string& key, bool v) { values_[key] = v ? "true" : "false"; }

const std::string& ConfigTree::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw validation_error("config: missing key '" + key + "'");
    return it->second;
}

std::string ConfigTree::get_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long ConfigTree::get_int(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::logic_error&) {
        throw validation_error("config: key '" + key + "' is not an integer: " + get(key));
    }
}

uint64_t ConfigTree::get_uint(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::logic_error&) {
        throw validation_error("config: key '" + key + "' is not an unsigned integer: " + get(key));
    }
}

double ConfigTree::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::logic_error&) {
        throw validation_error("config: key '" + key + "' is not a number: " + get(key));
    }
}

bool ConfigTree::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw validation_error("config: key '" + key + "' is not a boolean: " + v);
}

} // namespace kseg
