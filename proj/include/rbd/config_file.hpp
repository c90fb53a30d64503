#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rbd/common.hpp"

namespace rbd {

// `key = value` per line, '#' comments, blank lines ignored.
// Order and repeated keys are preserved (scene files use repeated blocks).
using key_values = std::vector<std::pair<std::string, std::string>>;

namespace detail {
inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace detail

inline key_values parse_key_values(std::istream& in, const std::string& source = "<stream>") {
    key_values out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = detail::trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(source + ":" + std::to_string(lineno) + ": expected `key = value`");
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw config_error(source + ":" + std::to_string(lineno) + ": empty key or value");
        out.emplace_back(key, value);
    }
    return out;
}

inline key_values parse_key_values_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    return parse_key_values(f, path);
}

inline double kv_double(const std::string& key, const std::string& value) {
    const char* s = value.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw config_error("key `" + key + "`: not a number: " + value);
    return v;
}

inline long kv_long(const std::string& key, const std::string& value) {
    double v = kv_double(key, value);
    long l = static_cast<long>(v);
    if (static_cast<double>(l) != v)
        throw config_error("key `" + key + "`: not an integer: " + value);
    return l;
}

}  // namespace rbd
