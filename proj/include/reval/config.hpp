#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace reval {

// Flat `key = value` text file, '#' comments, one declarative experiment per
// file. Canonical form = every effective key written, sorted, numbers in
// shortest round-trip form; the manifest hashes that canonical text, so no
// implicit default survives into a run record.
class Config {
public:
    Config() = default;

    static Config parse(std::istream& in);
    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set_double(const std::string& key, double value);

    // getters consume keys from the unknown-key set; call check_consumed()
    // after reading a config to reject typos
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    // keys present in the file but never read
    std::vector<std::string> unconsumed() const;
    void check_consumed() const; // throws config_error listing unknown keys

    const std::map<std::string, std::string>& entries() const { return entries_; }
    std::string canonical_text() const;

private:
    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> consumed_;
};

} // namespace reval
