#include "reval/config.hpp"

#include <fstream>
#include <sstream>

#include "reval/errors.hpp"
#include "reval/util.hpp"

namespace reval {

Config Config::parse(std::istream& in) {
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v = trim(line);
        if (v.empty() || v.front() == '#') continue;
        std::size_t eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key(trim(v.substr(0, eq)));
        std::string value(trim(v.substr(eq + 1)));
        if (key.empty()) {
            throw config_error("config line " + std::to_string(line_no) + ": empty key");
        }
        if (cfg.entries_.count(key)) {
            throw config_error("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        cfg.entries_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    return parse(in);
}

Config Config::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

void Config::set_double(const std::string& key, double value) {
    entries_[key] = format_double(value);
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) throw config_error("missing required config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return parse_double(it->second, 0);
    } catch (const data_error&) {
        throw config_error("config key '" + key + "': not a number: '" + it->second + "'");
    }
}

long long Config::get_int(const std::string& key, long long fallback) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return parse_int(it->second, 0);
    } catch (const data_error&) {
        throw config_error("config key '" + key + "': not an integer: '" + it->second + "'");
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw config_error("config key '" + key + "': expected true or false, got '" + it->second + "'");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
    consumed_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<std::string> out;
    for (std::string_view part : split_view(it->second, ',')) {
        std::string_view t = trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::vector<std::string> Config::unconsumed() const {
    std::vector<std::string> out;
    for (const auto& [key, _] : entries_) {
        if (!consumed_.count(key)) out.push_back(key);
    }
    return out;
}

void Config::check_consumed() const {
    std::vector<std::string> unknown = unconsumed();
    if (unknown.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const std::string& k : unknown) msg += " '" + k + "'";
    throw config_error(msg);
}

std::string Config::canonical_text() const {
    std::ostringstream out;
    for (const auto& [key, value] : entries_) {
        out << key << " = " << value << "\n";
    }
    return out.str();
}

} // namespace reval
