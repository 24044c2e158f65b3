#include "output.hpp"

#include "critdiff/errors.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

namespace critdiff::cli {

void Table::add(std::vector<double> row) {
    if (row.size() != header.size()) throw ValidationError("output: row width does not match the header");
    rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
    out += '\n';
    char buf[40];
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", row[j]);
            if (j) out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.flush();
        if (!out) throw ValidationError("output: cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw ValidationError("output: cannot rename into '" + path + "': " + ec.message());
    }
}

std::string emit_table(const std::string& dir, const std::string& name, const Table& t, const nlohmann::json& meta) {
    const std::string path = (std::filesystem::path(dir) / (name + ".csv")).string();
    write_atomic(path, t.to_csv());
    nlohmann::json m = meta;
    m["file"] = name + ".csv";
    m["rows"] = t.rows.size();
    m["columns"] = t.header;
    write_atomic(path + ".json", m.dump(2) + "\n");
    return path;
}

}  // namespace critdiff::cli
