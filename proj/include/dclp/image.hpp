#pragma once

#include <cstddef>
#include <string>

#include "dclp/tensor.hpp"

namespace dclp {

/// Binary PPM (P6, maxval 255) -> H x W x 3 in [0, 1].
Tensor decode_ppm(const std::string& bytes);
/// H x W x 3 in [0, 1] -> P6 bytes, values rounded and clamped to 0..255.
std::string encode_ppm(const Tensor& image);

/// Raw tensor: "TNSR" | u32 rank | u32 dims[rank] | little-endian f64 values.
std::string encode_tnsr(const Tensor& t);
Tensor decode_tnsr(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

/// Loads a P6 or TNSR image, dispatching on the magic bytes.
Tensor load_image(const std::string& path);
void save_ppm(const std::string& path, const Tensor& image);
void save_tnsr(const std::string& path, const Tensor& t);

/// Bilinear resize with half-pixel sample centres and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Resize to target x target, then (x - 0.5) / 0.5 per channel.
Tensor preprocess(const Tensor& raw, std::size_t target);

}  // namespace dclp
