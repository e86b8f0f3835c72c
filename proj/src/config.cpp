#include "dclp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "dclp/error.hpp"

namespace dclp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("key '" + key + "' expects a count, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw UsageError("key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw UsageError("key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("key '" + key + "' expects a boolean, got '" + v + "'");
}

struct Setting {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define DCLP_SIZE(name, field)                                                                     \
    Setting {                                                                                      \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_size(name, v); },           \
            [](const RunConfig& c) { return std::to_string(c.field); }                             \
    }
#define DCLP_REAL(name, field)                                                                     \
    Setting {                                                                                      \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); },           \
            [](const RunConfig& c) { return format_double(c.field); }                              \
    }
#define DCLP_BOOL(name, field)                                                                     \
    Setting {                                                                                      \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); },           \
            [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }             \
    }
#define DCLP_STRING(name, field)                                                                   \
    Setting {                                                                                      \
        name, [](RunConfig& c, const std::string& v) { c.field = v; },                             \
            [](const RunConfig& c) { return c.field; }                                             \
    }

const std::vector<Setting>& settings() {
    static const std::vector<Setting> table = {
        Setting{"profile",
                [](RunConfig& c, const std::string& v) {
                    if (v != "desk" && v != "paper") throw UsageError("key 'profile' must be desk or paper, got '" + v + "'");
                    c.profile = v;
                },
                [](const RunConfig& c) { return c.profile; }},
        Setting{"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); },
                [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        DCLP_SIZE("epochs", train.epochs),
        DCLP_SIZE("batch_size", train.batch_size),
        DCLP_BOOL("shuffle", train.shuffle),
        DCLP_REAL("learning_rate", train.adam.learning_rate),
        DCLP_REAL("beta1", train.adam.beta1),
        DCLP_REAL("beta2", train.adam.beta2),
        DCLP_REAL("adam_eps", train.adam.eps),
        DCLP_REAL("contrastive_weight", train.contrastive_weight),
        DCLP_REAL("classification_weight", train.classification_weight),
        DCLP_SIZE("min_freq", train.min_freq),
        DCLP_REAL("temperature", model.contrastive.temperature),
        DCLP_BOOL("learnable_scale", model.contrastive.learnable_scale),
        Setting{"dropout",
                [](RunConfig& c, const std::string& v) {
                    const double r = parse_real("dropout", v);
                    c.model.visual.dropout_rate = c.model.text.dropout_rate = c.model.classifier_dropout = r;
                },
                [](const RunConfig& c) { return format_double(c.model.visual.dropout_rate); }},
        DCLP_SIZE("image_size", model.visual.image_size),
        DCLP_SIZE("channels", model.visual.channels),
        DCLP_SIZE("patch_size", model.visual.patch_size),
        DCLP_SIZE("vision_dim", model.visual.model_dim),
        DCLP_SIZE("vision_heads", model.visual.heads),
        DCLP_SIZE("vision_layers", model.visual.layers),
        DCLP_SIZE("vision_mlp_ratio", model.visual.mlp_ratio),
        DCLP_SIZE("max_len", model.text.max_len),
        DCLP_SIZE("text_dim", model.text.model_dim),
        DCLP_SIZE("text_heads", model.text.heads),
        DCLP_SIZE("text_layers", model.text.layers),
        DCLP_SIZE("text_mlp_ratio", model.text.mlp_ratio),
        DCLP_SIZE("max_relative_distance", model.text.max_relative_distance),
        Setting{"proj_dim",
                [](RunConfig& c, const std::string& v) {
                    c.model.visual.proj_dim = c.model.text.proj_dim = parse_size("proj_dim", v);
                },
                [](const RunConfig& c) { return std::to_string(c.model.visual.proj_dim); }},
        DCLP_SIZE("classifier_hidden", model.classifier_hidden),
        DCLP_REAL("train_fraction", train_fraction),
        DCLP_STRING("manifest", manifest),
        DCLP_STRING("test_manifest", test_manifest),
        DCLP_STRING("out", out),
        DCLP_STRING("checkpoint", checkpoint),
        DCLP_STRING("image", image),
        DCLP_STRING("text", text),
        DCLP_BOOL("keep_epoch_checkpoints", keep_epoch_checkpoints),
        DCLP_SIZE("synth_per_class", synth_per_class),
        DCLP_REAL("synth_noise", synth_noise),
        DCLP_REAL("gradcheck_h", gradcheck_h),
        DCLP_REAL("gradcheck_tol", gradcheck_tol),
        DCLP_SIZE("gradcheck_entries", gradcheck_entries),
        DCLP_SIZE("gradcheck_batch", gradcheck_batch),
        DCLP_REAL("gradcheck_perturb", gradcheck_perturb),
    };
    return table;
}

#undef DCLP_SIZE
#undef DCLP_REAL
#undef DCLP_BOOL
#undef DCLP_STRING

const Setting* find_setting(const std::string& key) {
    for (const auto& s : settings())
        if (s.key == key) return &s;
    return nullptr;
}

std::pair<std::string, std::string> split_assignment(const std::string& flag) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos) throw UsageError("expected key=value, got '" + flag + "'");
    return {trim(flag.substr(0, eq)), trim(flag.substr(eq + 1))};
}

}  // namespace

void VisualConfig::validate() const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (heads == 0 || model_dim % heads != 0) throw ConfigError("vision_dim must be divisible by vision_heads");
    if (channels == 0 || proj_dim == 0 || mlp_ratio == 0) throw ConfigError("visual widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

void TextConfig::validate() const {
    if (max_len == 0) throw ConfigError("max_len must be >= 1");
    if (heads == 0 || model_dim % heads != 0) throw ConfigError("text_dim must be divisible by text_heads");
    if (max_relative_distance == 0) throw ConfigError("max_relative_distance must be >= 1");
    if (proj_dim == 0 || mlp_ratio == 0) throw ConfigError("text widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

void ContrastiveConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

void ModelConfig::validate() const {
    visual.validate();
    text.validate();
    contrastive.validate();
    if (visual.proj_dim != text.proj_dim) throw ConfigError("visual and text proj_dim differ");
    if (classifier_hidden == 0) throw ConfigError("classifier_hidden must be positive");
    if (!(classifier_dropout >= 0.0 && classifier_dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

void AdamHyper::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

void TrainConfig::validate() const {
    adam.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (batch_size < 2 && contrastive_weight != 0.0) {
        throw ConfigError("batch_size 1 leaves the contrastive loss without negatives");
    }
    if (contrastive_weight < 0.0 || classification_weight < 0.0) throw ConfigError("loss weights must be non-negative");
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& s : settings()) out += s.key + " = " + s.get(*this) + "\n";
    return out;
}

RunConfig profile_defaults(const std::string& profile) {
    RunConfig cfg;
    if (profile == "desk") return cfg;
    if (profile != "paper") throw UsageError("unknown profile '" + profile + "'");
    cfg.profile = "paper";
    cfg.model.visual = VisualConfig{224, 3, 32, 768, 12, 12, 4, 256, 0.2};
    cfg.model.text = TextConfig{64, 768, 12, 12, 4, 256, 16, 0.2};
    cfg.train.epochs = 20;
    cfg.train.batch_size = 32;
    cfg.train_fraction = 16.0 / 21.0;
    return cfg;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    const Setting* s = find_setting(key);
    if (!s) throw UsageError("unknown config key '" + key + "'");
    s->set(cfg, value);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

RunConfig parse_config_text(const std::string& text) {
    const auto entries = parse_key_values(text, "<config>");
    std::string profile = "desk";
    for (const auto& [k, v] : entries)
        if (k == "profile") profile = v;
    RunConfig cfg = profile_defaults(profile);
    for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
    return cfg;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& flags) {
    std::vector<std::pair<std::string, std::string>> file_entries;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw UsageError("cannot read config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        file_entries = parse_key_values(ss.str(), path);
    }
    std::vector<std::pair<std::string, std::string>> flag_entries;
    for (const auto& f : flags) flag_entries.push_back(split_assignment(f));

    std::string profile = "desk";
    for (const auto& [k, v] : file_entries)
        if (k == "profile") profile = v;
    for (const auto& [k, v] : flag_entries)
        if (k == "profile") profile = v;

    RunConfig cfg = profile_defaults(profile);
    for (const auto& [k, v] : file_entries) apply_setting(cfg, k, v);
    for (const auto& [k, v] : flag_entries) apply_setting(cfg, k, v);
    cfg.profile = profile;
    return cfg;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& s : settings()) keys.push_back(s.key);
    return keys;
}

}  // namespace dclp
