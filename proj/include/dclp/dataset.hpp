#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dclp/tensor.hpp"

namespace dclp {

struct ManifestRecord {
    std::string id;     // `id` field, or the image path when absent
    std::string image;  // relative to the manifest's directory unless absolute
    std::string text;
    std::size_t label = 0;
};

struct Manifest {
    std::vector<ManifestRecord> records;
    std::string base_dir;

    std::string resolve(const ManifestRecord& r) const;
};

/// One JSON object per line with `image`, `text`, `label` and optional `id`.
/// Blank lines are skipped.
Manifest parse_manifest(const std::string& text, const std::string& base_dir);
Manifest load_manifest(const std::string& path);
std::string format_manifest(const Manifest& m);
void save_manifest(const Manifest& m, const std::string& path);

/// Stratified split: within each label a seeded shuffle, then the first
/// ceil(fraction * n_label) records go to train. Both halves keep file order.
std::pair<Manifest, Manifest> split(const Manifest& m, double train_fraction, std::uint64_t seed);

struct Example {
    std::string id;
    Tensor image;  // target x target x 3 in [-1, 1]
    std::string text;
    std::size_t label = 0;
};

/// Decodes and preprocesses every record, in manifest order. Failures name the record.
std::vector<Example> load_examples(const Manifest& m, std::size_t image_size);

struct SynthOptions {
    std::size_t n_per_class = 40;
    std::size_t image_size = 32;
    std::uint64_t seed = 0;
    double noise = 0.05;
    /// Ratio between the first and last class counts; 1 keeps classes balanced.
    double imbalance = 1.0;
};

/// Writes `images/*.ppm` and `manifest.jsonl` under `dir`. Class c gets a
/// class-specific hue and shape plus Gaussian pixel noise, and texts built
/// from class keywords mixed with filler words.
Manifest generate_synthetic(const std::string& dir, const SynthOptions& options);

/// In-memory synthetic examples (labels cycle 0..9), already preprocessed.
std::vector<Example> make_synthetic_examples(std::size_t count, std::size_t image_size, std::uint64_t seed,
                                             double noise = 0.05);

/// Keywords used by the synthetic text templates for a label.
const std::vector<std::string>& synthetic_keywords(std::size_t label);

}  // namespace dclp
