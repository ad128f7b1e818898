#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rarecast {

// Minimal delimited-text table. Our file formats never embed the delimiter
// inside a field, so no quoting is needed.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; throws SchemaError when absent.
    std::size_t col(const std::string& name, const std::string& file) const;
};

CsvTable read_csv(const std::filesystem::path& path, char delim = ',');

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows,
               char delim = ',');

}  // namespace rarecast
