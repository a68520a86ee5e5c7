#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "lsa/tensor.hpp"

namespace lsa {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Self-describing checkpoint container.
///
/// Layout: 8-byte magic "LSACKPT\0", u32 format version, u64 header length,
/// a JSON header {"kind", "meta", "tensors": [{"name", "shape"}]}, then the
/// tensor payloads as little-endian IEEE-754 doubles in header order.
struct CheckpointContainer {
    std::string kind;
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
};

void write_checkpoint(const CheckpointContainer& c, const std::filesystem::path& file);
/// FormatError on corrupt data, SpecMismatchError on a version mismatch.
CheckpointContainer read_checkpoint(const std::filesystem::path& file);

/// Writes `text` to `file` atomically enough for our purposes (temp + rename).
void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

}  // namespace lsa
