#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kseg {

/// Flat key/value configuration with dotted paths, serialized as sorted
/// "key = value" lines. The serialization doubles as the canonical form
/// hashed into every output artifact.
class ConfigTree {
public:
    ConfigTree() = default;

    static ConfigTree parse(const std::string& text);
    static ConfigTree load(const std::string& path);

    std::string serialize() const;
    void save(const std::string& path) const;

    /// FNV-1a hash of the canonical serialization.
    uint64_t hash() const;
    std::string hash_hex() const;

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set_int(const std::string& key, long long v);
    void set_uint(const std::string& key, uint64_t v);
    void set_double(const std::string& key, double v);
    void set_bool(const std::string& key, bool v);

    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key) const;
    uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace kseg
