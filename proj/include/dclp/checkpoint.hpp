#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dclp {

// Binary layout, all integers little-endian:
//   "DCLP" | u32 version | u64 config length | config bytes
//   u64 array count, then per array:
//   u32 name length | name | u8 dtype (0 = f64, 1 = u64) | u32 rank | u64 dims[rank] | 8-byte values

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    enum class DType : std::uint8_t { F64 = 0, U64 = 1 };

    std::string name;
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<double> f64;
    std::vector<std::uint64_t> u64;

    static NamedArray real(std::string name, std::vector<std::uint64_t> dims, std::vector<double> values);
    static NamedArray integer(std::string name, std::vector<std::uint64_t> values);
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
    const NamedArray& at(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagicError, TruncatedError or VersionMismatchError.
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dclp
