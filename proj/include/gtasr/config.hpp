#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace gtasr {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` store. Blank lines and `#` comments are ignored; later
/// assignments override earlier ones.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    /// Applies every entry of `other` on top of this one.
    void merge(const Config& other);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }
    /// Sorted `key = value` lines.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace gtasr
