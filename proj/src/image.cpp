#include "dclp/image.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dclp/error.hpp"

namespace dclp {

namespace {

// Reads one unsigned decimal header field, skipping whitespace and comments.
std::size_t ppm_field(const std::string& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const auto ch = static_cast<unsigned char>(bytes[pos]);
        if (std::isspace(ch)) {
            ++pos;
        } else if (ch == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        throw DecodeError("malformed PPM header");
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
        v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
        if (v > (1u << 24)) throw DecodeError("PPM dimension too large");
        ++pos;
    }
    return v;
}

std::uint64_t get_le(const std::string& bytes, std::size_t pos, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    return v;
}

void put_le(std::string& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DecodeError("not a binary PPM (P6) file");
    std::size_t pos = 2;
    const std::size_t width = ppm_field(bytes, pos);
    const std::size_t height = ppm_field(bytes, pos);
    const std::size_t maxval = ppm_field(bytes, pos);
    if (width == 0 || height == 0) throw DecodeError("PPM has zero size");
    if (maxval != 255) throw DecodeError("PPM maxval " + std::to_string(maxval) + " unsupported, need 255");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw DecodeError("malformed PPM header");
    ++pos;
    const std::size_t n = width * height * 3;
    if (bytes.size() - pos < n) {
        throw DecodeError("truncated PPM payload: " + std::to_string(bytes.size() - pos) + " of " + std::to_string(n) + " bytes");
    }
    Tensor out(Shape{height, width, 3});
    for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
    return out;
}

std::string encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.shape[2] != 3) throw ShapeError("PPM needs H x W x 3, got " + shape_string(image.shape));
    std::string out = "P6\n" + std::to_string(image.shape[1]) + " " + std::to_string(image.shape[0]) + "\n255\n";
    out.reserve(out.size() + image.size());
    for (double v : image.data) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        out.push_back(static_cast<char>(q));
    }
    return out;
}

std::string encode_tnsr(const Tensor& t) {
    std::string out = "TNSR";
    put_le(out, t.rank(), 4);
    for (auto d : t.shape) put_le(out, d, 4);
    for (double v : t.data) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

Tensor decode_tnsr(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "TNSR") != 0) throw DecodeError("not a TNSR file");
    if (bytes.size() < 8) throw DecodeError("truncated TNSR header");
    const std::size_t rank = get_le(bytes, 4, 4);
    if (rank == 0 || rank > 8) throw DecodeError("TNSR rank " + std::to_string(rank) + " unsupported");
    if (bytes.size() < 8 + 4 * rank) throw DecodeError("truncated TNSR header");
    Shape shape(rank);
    std::size_t n = 1;
    for (std::size_t r = 0; r < rank; ++r) {
        shape[r] = get_le(bytes, 8 + 4 * r, 4);
        if (shape[r] == 0) throw DecodeError("TNSR has a zero dimension");
        n *= shape[r];
    }
    const std::size_t offset = 8 + 4 * rank;
    if ((bytes.size() - offset) / 8 < n) throw DecodeError("truncated TNSR payload");
    Tensor out(shape);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = std::bit_cast<double>(get_le(bytes, offset + 8 * i, 8));
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

Tensor load_image(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "TNSR") == 0) {
        Tensor t = decode_tnsr(bytes);
        if (t.rank() != 3 || t.shape[2] != 3) throw DecodeError("raw image must be H x W x 3, got " + shape_string(t.shape));
        if (!t.all_finite()) throw DecodeError("raw image holds non-finite values");
        return t;
    }
    throw DecodeError("unknown image format in '" + path + "'");
}

void save_ppm(const std::string& path, const Tensor& image) { write_file(path, encode_ppm(image)); }
void save_tnsr(const std::string& path, const Tensor& t) { write_file(path, encode_tnsr(t)); }

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw ShapeError("resize expects H x W x C, got " + shape_string(image.shape));
    const std::size_t in_h = image.shape[0], in_w = image.shape[1], c = image.shape[2];
    if (in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0) throw ShapeError("resize with a zero dimension");
    if (in_h == out_h && in_w == out_w) return Tensor(image.shape, image.data);

    auto axis = [](std::size_t out_i, std::size_t in_n, std::size_t out_n, std::size_t& lo, std::size_t& hi, double& frac) {
        double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
        lo = static_cast<std::size_t>(std::floor(src));
        hi = std::min(lo + 1, in_n - 1);
        frac = src - static_cast<double>(lo);
    };

    Tensor out(Shape{out_h, out_w, c});
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double fy;
        axis(y, in_h, out_h, y0, y1, fy);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double fx;
            axis(x, in_w, out_w, x0, x1, fx);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double p00 = image.data[(y0 * in_w + x0) * c + ch];
                const double p01 = image.data[(y0 * in_w + x1) * c + ch];
                const double p10 = image.data[(y1 * in_w + x0) * c + ch];
                const double p11 = image.data[(y1 * in_w + x1) * c + ch];
                const double top = p00 + (p01 - p00) * fx;
                const double bottom = p10 + (p11 - p10) * fx;
                out.data[(y * out_w + x) * c + ch] = top + (bottom - top) * fy;
            }
        }
    }
    return out;
}

Tensor preprocess(const Tensor& raw, std::size_t target) {
    Tensor out = resize_bilinear(raw, target, target);
    for (double& v : out.data) v = (v - 0.5) / 0.5;
    return out;
}

}  // namespace dclp
