#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dclp {

inline constexpr std::size_t kNumClasses = 10;

struct VisualConfig {
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t patch_size = 8;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t mlp_ratio = 4;
    std::size_t proj_dim = 32;
    double dropout_rate = 0.2;

    std::size_t patch_count() const { return (image_size / patch_size) * (image_size / patch_size); }
    std::size_t seq_len() const { return patch_count() + 1; }
    std::size_t patch_width() const { return patch_size * patch_size * channels; }
    void validate() const;
};

struct TextConfig {
    std::size_t max_len = 16;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t mlp_ratio = 4;
    std::size_t proj_dim = 32;
    std::size_t max_relative_distance = 16;
    double dropout_rate = 0.2;

    void validate() const;
};

struct ContrastiveConfig {
    double temperature = 0.1;
    bool learnable_scale = false;

    void validate() const;
};

struct ModelConfig {
    VisualConfig visual;
    TextConfig text;
    ContrastiveConfig contrastive;
    std::size_t classifier_hidden = 128;
    double classifier_dropout = 0.2;

    void validate() const;
};

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;

    void validate() const;
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double contrastive_weight = 1.0;
    double classification_weight = 1.0;
    std::size_t min_freq = 1;
    AdamHyper adam;

    void validate() const;
};

/// Every setting of a run: built-in profile defaults, then the config file,
/// then command-line overrides.
struct RunConfig {
    std::string profile = "desk";
    ModelConfig model;
    TrainConfig train;

    double train_fraction = 0.8;
    std::string manifest;
    std::string test_manifest;
    std::string out = "out";
    std::string checkpoint;
    std::string image;
    std::string text;
    bool keep_epoch_checkpoints = false;

    std::size_t synth_per_class = 40;
    double synth_noise = 0.05;

    double gradcheck_h = 1e-6;
    double gradcheck_tol = 1e-5;
    std::size_t gradcheck_entries = 8;
    std::size_t gradcheck_batch = 2;
    double gradcheck_perturb = 0.1;

    void validate() const;
    /// `key = value` lines for every setting; parse_config_text() inverts it.
    std::string to_text() const;
};

RunConfig profile_defaults(const std::string& profile);

/// Applies one `key=value` assignment. Throws UsageError on unknown keys or
/// unparsable values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines with '#' comments.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& origin);

RunConfig parse_config_text(const std::string& text);

/// Merges defaults, the file at `path` (skipped when empty), and `flags`
/// (each `key=value`); later sources win. A `profile` in the flags or file
/// selects the defaults that the rest are applied on top of.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& flags);

std::vector<std::string> config_keys();

}  // namespace dclp
