#pragma once
// Plain "key = value" configuration with [section] headers and a fixed schema.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace critdiff::cli {

enum class KeyType { real, integer, seed, boolean, text, choice, real_list, int_list };

struct KeySpec {
    std::string section;
    std::string key;
    KeyType type;
    double lo = 0.0, hi = 0.0;  // inclusive numeric range (each element for lists)
    bool required = false;
    std::string fallback;       // canonical default when not required
    std::vector<std::string> choices;
};

const std::vector<KeySpec>& schema();

class RunConfig {
  public:
    // Parses config text. Unknown sections or keys, malformed values and
    // out-of-range numbers throw ValidationError naming section, key and value.
    static RunConfig parse(std::string_view text);
    // Reads a file; the name "default" selects the built-in configuration.
    static RunConfig load(const std::string& path);
    static std::string default_text();

    // Canonical text: sections and keys sorted, numbers with 17 significant digits.
    std::string serialize() const;
    // FNV-1a hash of serialize(), as 16 hex digits.
    std::string hash() const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    bool has(const std::string& section, const std::string& key) const;

    // Getters fall back to the schema default and throw ValidationError for
    // a missing required key.
    double real(const std::string& section, const std::string& key) const;
    std::int64_t integer(const std::string& section, const std::string& key) const;
    std::uint64_t seed(const std::string& section, const std::string& key) const;
    bool boolean(const std::string& section, const std::string& key) const;
    std::string text(const std::string& section, const std::string& key) const;
    std::vector<double> reals(const std::string& section, const std::string& key) const;
    std::vector<std::int64_t> integers(const std::string& section, const std::string& key) const;

    const std::map<std::string, std::map<std::string, std::string>>& values() const { return values_; }
    bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  private:
    const std::string& raw(const std::string& section, const std::string& key) const;
    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace critdiff::cli
