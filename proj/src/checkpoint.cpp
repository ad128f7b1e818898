#include "rarecast/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "rarecast/errors.hpp"

namespace rarecast {

namespace {

constexpr char kMagic[4] = {'K', 'N', 'W', 'R'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T value) {
    // Serialized on little-endian hosts; the format is little-endian by
    // definition, so raw byte copies are the on-disk representation.
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw ParseError(path + ": truncated checkpoint");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    for (const auto& [name, tensor] : tensors) {
        put<std::uint32_t>(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        put<std::uint8_t>(out, 0);  // float64
        put<std::uint8_t>(out, std::uint8_t(tensor->shape.size()));
        for (auto d : tensor->shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(tensor->v.data()),
                  std::streamsize(tensor->v.size() * sizeof(double)));
    }
    if (!out) throw ParseError("short write to " + path.string());
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError(path.string() + ": bad magic, not a checkpoint");
    const auto version = get<std::uint32_t>(in, path.string());
    if (version != kVersion)
        throw ParseError(path.string() + ": unsupported version " + std::to_string(version));

    std::map<std::string, Tensor> out;
    while (true) {
        char probe;
        if (!in.get(probe)) break;
        in.unget();
        const auto name_len = get<std::uint32_t>(in, path.string());
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw ParseError(path.string() + ": truncated name");
        const auto dtype = get<std::uint8_t>(in, path.string());
        if (dtype != 0)
            throw ParseError(path.string() + ": unknown dtype tag " + std::to_string(dtype));
        const auto rank = get<std::uint8_t>(in, path.string());
        Tensor t;
        std::size_t count = 1;
        for (int i = 0; i < rank; ++i) {
            const auto d = std::size_t(get<std::uint64_t>(in, path.string()));
            t.shape.push_back(d);
            count *= d;
        }
        t.v.resize(count);
        in.read(reinterpret_cast<char*>(t.v.data()),
                std::streamsize(count * sizeof(double)));
        if (!in) throw ParseError(path.string() + ": truncated payload for " + name);
        if (out.count(name))
            throw ParseError(path.string() + ": duplicate tensor " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace rarecast
