#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace headgan {

/// Plain `key = value` text file with '#' comments. Keys keep insertion
/// order so files regenerate byte-identically. Used for train configs and
/// for the manifests written next to datasets, checkpoints and outputs.
class KeyValueFile {
public:
    static KeyValueFile parse_string(const std::string& text, const std::string& origin = "<string>");
    static KeyValueFile parse_file(const std::string& path);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;  // throws ConfigError
    std::string get_or(const std::string& key, const std::string& fallback) const;

    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;

    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, std::int64_t value);
    void set_double(const std::string& key, double value);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_string() const;
    void save(const std::string& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_double(double v);

}  // namespace headgan
