#include "rarecast/csv.hpp"

#include <fstream>
#include <sstream>

#include "rarecast/errors.hpp"

namespace rarecast {

std::size_t CsvTable::col(const std::string& name, const std::string& file) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw SchemaError(file + ": missing column '" + name + "'");
}

static std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

CsvTable read_csv(const std::filesystem::path& path, char delim) {
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open " + path.string());
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            t.header = split_line(line, delim);
            if (t.header.empty() || (t.header.size() == 1 && t.header[0].empty()))
                throw ParseError(path.string() + ":1: empty header row");
            continue;
        }
        if (line.empty()) continue;
        auto fields = split_line(line, delim);
        if (fields.size() != t.header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected " + std::to_string(t.header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (lineno == 0) throw ParseError(path.string() + ": missing header row");
    return t;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows, char delim) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    auto emit = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << delim;
            out << fields[i];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
}

}  // namespace rarecast
