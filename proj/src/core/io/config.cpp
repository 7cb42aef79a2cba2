#include "config.hpp"

#include <cstdlib>
#include <fstream>

#include "../error.hpp"

namespace fe2e {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void KeyValueConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw_io("config: cannot open: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw_usage("config: expected key=value at " + path + ":" + std::to_string(lineno));
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw_usage("config: empty key at " + path + ":" + std::to_string(lineno));
        entries_[key] = value;
    }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw_usage("config: '" + key + "' is not a number: " + it->second);
    }
    return v;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    char* end = nullptr;
    long v = std::strtol(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw_usage("config: '" + key + "' is not an integer: " + it->second);
    }
    return static_cast<int>(v);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    char* end = nullptr;
    unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw_usage("config: '" + key + "' is not an unsigned integer: " + it->second);
    }
    return static_cast<std::uint64_t>(v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw_usage("config: '" + key + "' is not a boolean: " + v);
}

double parse_fraction(const std::string& text) {
    std::size_t slash = text.find('/');
    char* end = nullptr;
    if (slash == std::string::npos) {
        double v = std::strtod(text.c_str(), &end);
        if (end == text.c_str() || *end != '\0') throw_usage("bad numeric value: " + text);
        return v;
    }
    std::string num = text.substr(0, slash);
    std::string den = text.substr(slash + 1);
    double n = std::strtod(num.c_str(), &end);
    if (end == num.c_str() || *end != '\0') throw_usage("bad fraction numerator: " + text);
    double d = std::strtod(den.c_str(), &end);
    if (end == den.c_str() || *end != '\0' || d == 0.0) throw_usage("bad fraction denominator: " + text);
    return n / d;
}

}  // namespace fe2e
