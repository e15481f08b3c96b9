#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"

namespace bnnlab::exp {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) {
            out.push_back(cur);
        }
    }
    return out;
}

/**
 * Flat key = value configuration. '#' starts a comment, blank lines are
 * skipped, keys are unique. Relative paths are resolved against the
 * directory of the file the config came from.
 */
class KvConfig {
public:
    static KvConfig parse(std::istream& in, const std::string& source = "<input>",
                          std::filesystem::path base_dir = {}) {
        KvConfig cfg;
        cfg.source_ = source;
        cfg.base_dir_ = std::move(base_dir);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw FormatError(source + ":" + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw FormatError(source + ":" + std::to_string(lineno) + ": empty key");
            }
            if (!cfg.values_.emplace(key, value).second) {
                throw FormatError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            }
        }
        return cfg;
    }

    static KvConfig parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KvConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open config " + path.string());
        }
        return parse(in, path.string(), path.parent_path());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }
    const std::string& source() const noexcept { return source_; }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            throw FormatError(source_ + ": missing key '" + key + "'");
        }
        return it->second;
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    double get_double(const std::string& key) const { return to_double(key, get(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key) const { return to_u64(key, get(key)); }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_u64(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const std::string v = get(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw FormatError(source_ + ": key '" + key + "' expects a boolean, got '" + v + "'");
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(get(key), ',')) {
            out.push_back(to_double(key, item));
        }
        return out;
    }

    std::vector<std::uint64_t> get_u64s(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (const auto& item : split(get(key), ',')) {
            out.push_back(to_u64(key, item));
        }
        return out;
    }

    std::vector<std::string> get_strings(const std::string& key) const { return split(get(key), ','); }

    /// Path value, resolved against the config file's directory when relative.
    std::filesystem::path get_path(const std::string& key) const { return resolve(get(key)); }

    std::vector<std::filesystem::path> get_paths(const std::string& key) const {
        std::vector<std::filesystem::path> out;
        for (const auto& item : get_strings(key)) {
            out.push_back(resolve(item));
        }
        return out;
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_relative() && !base_dir_.empty() ? base_dir_ / p : p;
    }

    /// Rejects keys outside `known` so a typo cannot silently fall back to a default.
    void require_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_) {
            if (!known.count(k)) {
                throw FormatError(source_ + ": unknown key '" + k + "'");
            }
        }
    }

private:
    double to_double(const std::string& key, const std::string& v) const {
        double out = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
            throw FormatError(source_ + ": key '" + key + "' expects a number, got '" + v + "'");
        }
        return out;
    }

    std::uint64_t to_u64(const std::string& key, const std::string& v) const {
        std::uint64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
            throw FormatError(source_ + ": key '" + key + "' expects a non-negative integer, got '" + v + "'");
        }
        return out;
    }

    std::map<std::string, std::string> values_;
    std::string source_;
    std::filesystem::path base_dir_;
};

}  // namespace bnnlab::exp
