#include "rarecast/util.hpp"

#include <fstream>
#include <sstream>

#include "rarecast/errors.hpp"

namespace rarecast {

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out.write(text.data(), std::streamsize(text.size()));
    if (!out) throw ParseError("short write to " + path.string());
}

}  // namespace rarecast
