#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pmd {

/// Numeric table with a fixed header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Shortest-round-trip-safe decimal form: 17 significant digits.
std::string format_real(double value);

/// Writes to a sibling temporary file, then renames over `path`, so readers
/// never observe a partially written table.
void write_csv_atomic(const std::filesystem::path& path, const CsvTable& table);
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);

CsvTable read_csv(const std::filesystem::path& path);

} // namespace pmd
