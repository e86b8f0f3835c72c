#include "dclp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "dclp/config.hpp"
#include "dclp/error.hpp"
#include "dclp/image.hpp"
#include "dclp/rng.hpp"

namespace dclp {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string Manifest::resolve(const ManifestRecord& r) const {
    fs::path p(r.image);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (fs::path(base_dir) / p).string();
}

Manifest parse_manifest(const std::string& text, const std::string& base_dir) {
    Manifest m;
    m.base_dir = base_dir;
    std::set<std::string> ids;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(lineno);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (!obj.is_object()) throw ParseError(where + ": expected an object");
        ManifestRecord r;
        try {
            r.image = obj.at("image").get<std::string>();
            r.text = obj.at("text").get<std::string>();
            const auto& label = obj.at("label");
            if (!label.is_number_integer()) throw ParseError(where + ": label must be an integer");
            const auto value = label.get<long long>();
            if (value < 0 || value >= static_cast<long long>(kNumClasses)) {
                throw ValidationError(where + ": label " + std::to_string(value) + " outside 0-9");
            }
            r.label = static_cast<std::size_t>(value);
            r.id = obj.contains("id") ? obj.at("id").get<std::string>() : r.image;
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (!ids.insert(r.id).second) throw ValidationError(where + ": duplicate id '" + r.id + "'");
        m.records.push_back(std::move(r));
    }
    return m;
}

Manifest load_manifest(const std::string& path) {
    const std::string text = read_file(path);
    return parse_manifest(text, fs::path(path).parent_path().string());
}

std::string format_manifest(const Manifest& m) {
    std::string out;
    for (const auto& r : m.records) {
        json obj = {{"id", r.id}, {"image", r.image}, {"text", r.text}, {"label", r.label}};
        out += obj.dump() + "\n";
    }
    return out;
}

void save_manifest(const Manifest& m, const std::string& path) { write_file(path, format_manifest(m)); }

std::pair<Manifest, Manifest> split(const Manifest& m, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
    std::vector<std::vector<std::size_t>> strata(kNumClasses);
    for (std::size_t i = 0; i < m.records.size(); ++i) strata[m.records[i].label].push_back(i);

    Rng rng(seed);
    std::vector<bool> to_train(m.records.size(), false);
    for (auto& stratum : strata) {
        for (std::size_t i = stratum.size(); i > 1; --i) std::swap(stratum[i - 1], stratum[rng.below(i)]);
        // the slack keeps e.g. 0.28 * 25 = 7.000000000000001 from rounding up to 8
        const auto n_train =
            static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(stratum.size()) - 1e-9));
        for (std::size_t i = 0; i < n_train && i < stratum.size(); ++i) to_train[stratum[i]] = true;
    }
    Manifest train{{}, m.base_dir}, test{{}, m.base_dir};
    for (std::size_t i = 0; i < m.records.size(); ++i) (to_train[i] ? train : test).records.push_back(m.records[i]);
    return {std::move(train), std::move(test)};
}

std::vector<Example> load_examples(const Manifest& m, std::size_t image_size) {
    std::vector<Example> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) {
        const std::string path = m.resolve(r);
        if (!fs::exists(path)) throw DataError("record '" + r.id + "': image '" + path + "' does not exist");
        Tensor raw;
        try {
            raw = load_image(path);
        } catch (const DataError& e) {
            throw DataError("record '" + r.id + "': " + e.what());
        }
        out.push_back(Example{r.id, preprocess(raw, image_size), r.text, r.label});
    }
    return out;
}

namespace {

const std::vector<std::vector<std::string>> kKeywords = {
    {"hmm", "wonder", "puzzled"},   {"lol", "hilarious", "laughing"}, {"love", "adore", "heart"},
    {"gorgeous", "stunning", "wow"}, {"crying", "sobbing", "tears"},  {"fire", "lit", "hot"},
    {"smile", "grateful", "sweet"}, {"pray", "blessed", "hope"},     {"facts", "hundred", "truth"},
    {"agree", "approve", "nice"},
};

const std::vector<std::string> kFiller = {"the", "today", "just", "really", "so",   "my",   "this",
                                          "what", "a",    "day",  "with",   "friends", "again", "time",
                                          "now", "we",    "you",  "it",     "is",   "all"};

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

Tensor synth_image(std::size_t label, std::size_t size, double noise, Rng& rng) {
    const Rgb base = hsv_to_rgb(static_cast<double>(label) / kNumClasses, 0.75, 0.85);
    const Rgb mark = hsv_to_rgb(std::fmod(static_cast<double>(label) / kNumClasses + 0.5, 1.0), 0.4, 0.25);
    // Even labels draw a horizontal bar, odd labels a disk; the row/position
    // moves with the label.
    const double s = static_cast<double>(size);
    const double slot = (static_cast<double>(label / 2) + 0.5) / 5.0;
    Tensor img(Shape{size, size, 3});
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double fy = (static_cast<double>(y) + 0.5) / s, fx = (static_cast<double>(x) + 0.5) / s;
            bool on;
            if (label % 2 == 0) {
                on = std::abs(fy - slot) < 0.1;
            } else {
                const double dx = fx - slot, dy = fy - 0.5;
                on = dx * dx + dy * dy < 0.04;
            }
            const Rgb c = on ? mark : base;
            double* px = img.data.data() + (y * size + x) * 3;
            px[0] = std::clamp(c.r + noise * rng.normal(), 0.0, 1.0);
            px[1] = std::clamp(c.g + noise * rng.normal(), 0.0, 1.0);
            px[2] = std::clamp(c.b + noise * rng.normal(), 0.0, 1.0);
        }
    }
    return img;
}

std::string synth_text(std::size_t label, Rng& rng) {
    const auto& keys = kKeywords[label];
    const std::size_t n_words = 5 + rng.below(5);
    const std::size_t n_keys = 1 + rng.below(2);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_words; ++i) words.push_back(kFiller[rng.below(kFiller.size())]);
    for (std::size_t k = 0; k < n_keys; ++k) words[rng.below(n_words)] = keys[rng.below(keys.size())];
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    return text;
}

}  // namespace

std::vector<Example> make_synthetic_examples(std::size_t count, std::size_t image_size, std::uint64_t seed,
                                             double noise) {
    Rng rng(seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % kNumClasses;
        Tensor raw = synth_image(label, image_size, noise, rng);
        out.push_back({"mem_" + std::to_string(i), preprocess(raw, image_size), synth_text(label, rng), label});
    }
    return out;
}

const std::vector<std::string>& synthetic_keywords(std::size_t label) { return kKeywords.at(label); }

Manifest generate_synthetic(const std::string& dir, const SynthOptions& options) {
    if (options.n_per_class < 1) throw ConfigError("synthetic generation needs n_per_class >= 1");
    if (options.image_size < 1) throw ConfigError("synthetic image size must be positive");
    if (!(options.imbalance >= 1.0)) throw ConfigError("imbalance ratio must be >= 1");
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());

    Rng rng(options.seed);
    Manifest m;
    m.base_dir = dir;
    for (std::size_t label = 0; label < kNumClasses; ++label) {
        const double decay = std::pow(options.imbalance, -static_cast<double>(label) / (kNumClasses - 1));
        const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.n_per_class * decay)));
        for (std::size_t k = 0; k < count; ++k) {
            char id[32];
            std::snprintf(id, sizeof id, "synth_%zu_%04zu", label, k);
            const std::string rel = std::string("images/") + id + ".ppm";
            save_ppm((fs::path(dir) / rel).string(), synth_image(label, options.image_size, options.noise, rng));
            m.records.push_back({id, rel, synth_text(label, rng), label});
        }
    }
    save_manifest(m, (fs::path(dir) / "manifest.jsonl").string());
    return m;
}

}  // namespace dclp
