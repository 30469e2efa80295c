#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmelab {

/// Configuration error: the message names the offending section and key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// INI-style key=value configuration with [section] headers. No nesting,
/// no repeated keys; '#' and ';' start comments. Every key is validated
/// against the task's schema before any compute; unknown keys are errors.
class RunConfig {
public:
    static RunConfig parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("config: cannot open " + path);
        std::stringstream ss;
        ss << is.rdbuf();
        return parse(ss.str());
    }

    static RunConfig parse(const std::string& text) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.erase(comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw ConfigError("config line " + std::to_string(lineno) + ": empty section");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
            const std::string full = section + "." + key;
            if (cfg.values_.count(full))
                throw ConfigError("config: repeated key " + full);
            cfg.values_[full] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config: missing required key " + key);
        mark_used(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_real(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key " + key + " is not a real number: '" + s + "'");
        }
    }

    double get_real(const std::string& key, double fallback) const {
        return has(key) ? get_real(key) : fallback;
    }

    long get_int(const std::string& key) const {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key " + key + " is not an integer: '" + s + "'");
        }
    }

    long get_int(const std::string& key, long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::vector<double> get_real_list(const std::string& key) const {
        std::vector<double> out;
        std::istringstream ss(get_string(key));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stod(trim(tok)));
            } catch (const std::exception&) {
                throw ConfigError("config: key " + key + " holds a malformed list");
            }
        }
        return out;
    }

    /// Every present key must have been consumed by a get_* call.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_)
            if (!used_.count(key)) throw ConfigError("config: unknown key " + key);
    }

    /// Raw view for the manifest echo.
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    }

    void mark_used(const std::string& key) const { used_.insert(key); }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

} // namespace pmelab
