#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace fe2e {

// Flat key=value configuration with '#' comments. Later assignments win, so
// loading a file first and applying flags afterwards gives flag precedence.
class KeyValueConfig {
public:
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

// Parses "1/256" or a plain decimal.
double parse_fraction(const std::string& text);

}  // namespace fe2e
