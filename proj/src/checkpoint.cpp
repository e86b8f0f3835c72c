#include "dclp/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dclp/error.hpp"

namespace dclp {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'L', 'P'};

void put_uint(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint64_t uint(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::string str(std::uint64_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void need(std::uint64_t n) const {
        if (n > bytes_.size() - pos_) {
            throw TruncatedError("file ends at byte " + std::to_string(bytes_.size()) + ", needed " + std::to_string(n) +
                                 " more after byte " + std::to_string(pos_));
        }
    }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

NamedArray NamedArray::real(std::string name, std::vector<std::uint64_t> dims, std::vector<double> values) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = DType::F64;
    a.dims = std::move(dims);
    a.f64 = std::move(values);
    return a;
}

NamedArray NamedArray::integer(std::string name, std::vector<std::uint64_t> values) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = DType::U64;
    a.dims = {values.size()};
    a.u64 = std::move(values);
    return a;
}

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& Checkpoint::at(const std::string& name) const {
    if (const NamedArray* a = find(name)) return *a;
    throw CheckpointError("missing array '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, 4);
    put_uint(out, ckpt.version, 4);
    put_uint(out, ckpt.config_text.size(), 8);
    out += ckpt.config_text;
    put_uint(out, ckpt.arrays.size(), 8);
    for (const auto& a : ckpt.arrays) {
        put_uint(out, a.name.size(), 4);
        out += a.name;
        put_uint(out, static_cast<std::uint8_t>(a.dtype), 1);
        put_uint(out, a.dims.size(), 4);
        for (auto d : a.dims) put_uint(out, d, 8);
        if (a.dtype == NamedArray::DType::F64) {
            for (double v : a.f64) put_uint(out, std::bit_cast<std::uint64_t>(v), 8);
        } else {
            for (auto v : a.u64) put_uint(out, v, 8);
        }
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    const std::size_t head = std::min<std::size_t>(bytes.size(), 4);
    if (bytes.compare(0, head, kMagic, head) != 0) throw BadMagicError("not a DCLP checkpoint");
    if (head < 4) throw TruncatedError("checkpoint ends inside the magic bytes");
    in.str(4);
    Checkpoint ckpt;
    ckpt.version = static_cast<std::uint32_t>(in.uint(4));
    if (ckpt.version != kCheckpointVersion) {
        throw VersionMismatchError("format version " + std::to_string(ckpt.version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
    }
    ckpt.config_text = in.str(in.uint(8));
    const std::uint64_t count = in.uint(8);
    for (std::uint64_t k = 0; k < count; ++k) {
        NamedArray a;
        a.name = in.str(in.uint(4));
        const auto tag = in.uint(1);
        if (tag > 1) throw CheckpointError("array '" + a.name + "' has unknown dtype " + std::to_string(tag));
        a.dtype = static_cast<NamedArray::DType>(tag);
        const auto rank = in.uint(4);
        std::uint64_t n = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            a.dims.push_back(in.uint(8));
            n *= a.dims.back();
        }
        in.need(n * 8);
        if (a.dtype == NamedArray::DType::F64) {
            a.f64.resize(n);
            for (auto& v : a.f64) v = std::bit_cast<double>(in.uint(8));
        } else {
            a.u64.resize(n);
            for (auto& v : a.u64) v = in.uint(8);
        }
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace dclp
