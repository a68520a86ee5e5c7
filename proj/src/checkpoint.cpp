#include "lsa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lsa/error.hpp"

namespace lsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'S', 'A', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const fs::path& file) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(file.string() + ": truncated checkpoint");
    return v;
}

}  // namespace

const Tensor& CheckpointContainer::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw FormatError("checkpoint '" + kind + "' has no tensor '" + name + "'");
}

void write_checkpoint(const CheckpointContainer& c, const fs::path& file) {
    json header;
    header["kind"] = c.kind;
    header["meta"] = c.meta;
    header["tensors"] = json::array();
    for (const auto& [name, t] : c.tensors) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
    const std::string hs = header.dump();

    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write checkpoint " + file.string());
        os.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(os, kCheckpointFormatVersion);
        put<std::uint64_t>(os, hs.size());
        os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& [name, t] : c.tensors) {
            os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
        if (!os) throw IoError("failed writing checkpoint " + file.string());
    }
    fs::rename(tmp, file);
}

CheckpointContainer read_checkpoint(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + file.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw FormatError(file.string() + ": not a checkpoint file");
    }
    const auto version = get<std::uint32_t>(is, file);
    if (version != kCheckpointFormatVersion) {
        throw SpecMismatchError(file.string() + ": checkpoint format version " + std::to_string(version) + ", expected " +
                                std::to_string(kCheckpointFormatVersion));
    }
    const auto hlen = get<std::uint64_t>(is, file);
    if (hlen > (1u << 28)) throw FormatError(file.string() + ": implausible header length");
    std::string hs(hlen, '\0');
    if (!is.read(hs.data(), static_cast<std::streamsize>(hlen))) throw FormatError(file.string() + ": truncated header");
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": corrupt header (" + e.what() + ")");
    }
    CheckpointContainer c;
    try {
        c.kind = header.at("kind").get<std::string>();
        c.meta = header.at("meta");
        for (const auto& jt : header.at("tensors")) {
            Shape shape = jt.at("shape").get<Shape>();
            Tensor t(shape);
            if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)))) {
                throw FormatError(file.string() + ": truncated tensor payload");
            }
            c.tensors.emplace_back(jt.at("name").get<std::string>(), std::move(t));
        }
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": malformed header (" + e.what() + ")");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError(file.string() + ": trailing bytes after payload");
    return c;
}

void write_text_file(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + file.string());
        os << text;
        if (!os) throw IoError("failed writing " + file.string());
    }
    fs::rename(tmp, file);
}

std::string read_text_file(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace lsa
