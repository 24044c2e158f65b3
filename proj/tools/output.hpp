#pragma once
// Atomic CSV and JSON emission.

#include <json.hpp>

#include <string>
#include <vector>

namespace critdiff::cli {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row);
    // Comma separated, '.' decimal, 17 significant digits.
    std::string to_csv() const;
};

// Writes to a temporary file in the same directory and renames it into place.
void write_atomic(const std::string& path, const std::string& content);

// Writes <dir>/<name>.csv and its sidecar <dir>/<name>.csv.json holding
// \p meta. Returns the CSV path.
std::string emit_table(const std::string& dir, const std::string& name, const Table& t, const nlohmann::json& meta);

}  // namespace critdiff::cli
