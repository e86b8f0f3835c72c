#include "dclp/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "dclp/error.hpp"
#include "dclp/image.hpp"
#include "dclp/ops.hpp"

namespace dclp {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVocabMarker = "[vocab]";

std::string format_real(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::vector<Sample> make_samples(const std::vector<Example>& data, const Model& model) {
    std::vector<Sample> samples;
    samples.reserve(data.size());
    for (const auto& ex : data) {
        samples.push_back({&ex.image, tokenize(ex.text, model.vocab, model.config.model.text.max_len), ex.label});
    }
    return samples;
}

std::string model_config_text(const Model& model) {
    std::string text = model.config.to_text();
    text += kVocabMarker;
    text += "\n";
    for (const auto& w : model.vocab.words()) text += w + "\n";
    return text;
}

std::pair<RunConfig, Vocabulary> parse_model_config_text(const std::string& text) {
    const auto marker = text.find(kVocabMarker);
    if (marker == std::string::npos) throw CheckpointError("config section has no vocabulary");
    RunConfig cfg = parse_config_text(text.substr(0, marker));
    std::vector<std::string> words;
    std::istringstream in(text.substr(marker + std::string(kVocabMarker).size()));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) words.push_back(line);
    return {cfg, Vocabulary(words)};
}

void write_epoch_outputs(const TrainState& state, const RunConfig& cfg, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    const Checkpoint ckpt = make_checkpoint(state);
    save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint.dclp").string());
    if (cfg.keep_epoch_checkpoints) {
        char name[48];
        std::snprintf(name, sizeof name, "checkpoint_epoch_%03zu.dclp", state.epoch);
        save_checkpoint(ckpt, (fs::path(out_dir) / name).string());
    }
    write_file((fs::path(out_dir) / "epochs.tsv").string(), format_history(state.history));
}

}  // namespace

TrainState init_training(const std::vector<Example>& train_set, const RunConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    std::vector<std::string> corpus;
    corpus.reserve(train_set.size());
    for (const auto& ex : train_set) corpus.push_back(ex.text);
    Rng rng(cfg.train.seed);
    Model model = init_model(cfg, build_vocab(corpus, cfg.train.min_freq), rng);
    return TrainState{std::move(model), AdamState{}, rng, 0, {}};
}

void run_epochs(TrainState& state, const std::vector<Example>& train_set, std::size_t until_epoch,
                const TrainOptions& options) {
    const RunConfig& cfg = state.model.config;
    const ModelConfig& mcfg = cfg.model;
    const LossWeights weights{cfg.train.contrastive_weight, cfg.train.classification_weight};
    const std::size_t min_batch = weights.contrastive != 0.0 ? 2 : 1;
    const std::vector<Sample> samples = make_samples(train_set, state.model);
    const std::vector<NamedTensor> trainable = named_params(state.model.params);

    std::vector<std::size_t> order(samples.size());
    while (state.epoch < until_epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        if (cfg.train.shuffle) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);
        }
        double loss_sum = 0.0;
        std::size_t batches = 0, correct = 0, seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
            if (end - start < min_batch) break;
            std::vector<Sample> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

            Graph g;
            BatchForward fwd = forward_batch(g, mcfg, state.model.params, batch, weights, true, state.rng);
            const GradMap grads = g.backward(fwd.loss);
            zero_grads(state.model.params);
            accumulate_gradients(state.model.params, grads);
            adam_step(trainable, state.adam, cfg.train.adam);

            const double loss = fwd.loss.item();
            if (!std::isfinite(loss)) throw DegenerateVectorError("non-finite loss at epoch " + std::to_string(state.epoch + 1));
            loss_sum += loss;
            ++batches;
            const Tensor& logits = fwd.class_logits.value();
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const std::span<const double> row(logits.data.data() + i * kNumClasses, kNumClasses);
                correct += predict_label(row) == batch[i].label ? 1 : 0;
            }
            seen += batch.size();
        }
        if (batches == 0) throw DataError("no batch of at least " + std::to_string(min_batch) + " examples in the training set");
        ++state.epoch;
        EpochRecord rec{state.epoch, loss_sum / static_cast<double>(batches),
                        static_cast<double>(correct) / static_cast<double>(seen)};
        state.history.push_back(rec);
        if (!options.out_dir.empty()) write_epoch_outputs(state, cfg, options.out_dir);
        if (options.on_epoch) options.on_epoch(rec);
    }
}

TrainState train(const std::vector<Example>& train_set, const RunConfig& cfg, const TrainOptions& options) {
    TrainState state = init_training(train_set, cfg);
    run_epochs(state, train_set, cfg.train.epochs, options);
    return state;
}

std::string format_history(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const auto& r : history) {
        out += std::to_string(r.epoch) + "\t" + format_real(r.mean_loss) + "\t" + format_real(r.train_accuracy) + "\n";
    }
    return out;
}

Checkpoint make_checkpoint(const TrainState& state) {
    Checkpoint ckpt;
    ckpt.config_text = model_config_text(state.model);
    visit_params(state.model.params, [&](const std::string& name, const Tensor& t) {
        ckpt.arrays.push_back(NamedArray::real("param." + name, {t.shape.begin(), t.shape.end()}, t.data));
    });
    for (const auto& [name, m] : state.adam.first) ckpt.arrays.push_back(NamedArray::real("adam.m." + name, {m.size()}, m));
    for (const auto& [name, v] : state.adam.second) ckpt.arrays.push_back(NamedArray::real("adam.v." + name, {v.size()}, v));
    ckpt.arrays.push_back(NamedArray::integer("meta.adam_step", {state.adam.step}));
    ckpt.arrays.push_back(NamedArray::integer("meta.epoch", {state.epoch}));
    const auto& rs = state.rng.state();
    ckpt.arrays.push_back(NamedArray::integer("meta.rng_state", {rs.begin(), rs.end()}));
    std::vector<double> hist;
    for (const auto& r : state.history) {
        hist.insert(hist.end(), {static_cast<double>(r.epoch), r.mean_loss, r.train_accuracy});
    }
    ckpt.arrays.push_back(NamedArray::real("meta.history", {state.history.size(), 3}, hist));
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    auto [cfg, vocab] = parse_model_config_text(ckpt.config_text);
    Rng scratch(cfg.train.seed);
    Model model = init_model(cfg, std::move(vocab), scratch);
    visit_params(model.params, [&](const std::string& name, Tensor& t) {
        const NamedArray& a = ckpt.at("param." + name);
        if (a.dtype != NamedArray::DType::F64 || a.f64.size() != t.size()) {
            throw CheckpointError("array 'param." + name + "' does not match the configured shape " + shape_string(t.shape));
        }
        t.data = a.f64;
    });
    return model;
}

TrainState restore_checkpoint(const Checkpoint& ckpt) {
    TrainState state{model_from_checkpoint(ckpt), AdamState{}, Rng(0), 0, {}};
    const std::string m_prefix = "adam.m.", v_prefix = "adam.v.";
    for (const auto& a : ckpt.arrays) {
        if (a.name.rfind(m_prefix, 0) == 0) state.adam.first[a.name.substr(m_prefix.size())] = a.f64;
        if (a.name.rfind(v_prefix, 0) == 0) state.adam.second[a.name.substr(v_prefix.size())] = a.f64;
    }
    auto scalar_u64 = [&](const std::string& name) {
        const NamedArray& a = ckpt.at(name);
        if (a.dtype != NamedArray::DType::U64 || a.u64.size() != 1) throw CheckpointError("malformed '" + name + "'");
        return a.u64[0];
    };
    state.adam.step = scalar_u64("meta.adam_step");
    state.epoch = scalar_u64("meta.epoch");
    const NamedArray& rs = ckpt.at("meta.rng_state");
    if (rs.dtype != NamedArray::DType::U64 || rs.u64.size() != 4) throw CheckpointError("malformed 'meta.rng_state'");
    state.rng.set_state({rs.u64[0], rs.u64[1], rs.u64[2], rs.u64[3]});
    const NamedArray& hist = ckpt.at("meta.history");
    for (std::size_t i = 0; i + 2 < hist.f64.size(); i += 3) {
        state.history.push_back({static_cast<std::size_t>(hist.f64[i]), hist.f64[i + 1], hist.f64[i + 2]});
    }
    return state;
}

Prediction predict(const Model& model, const Tensor& image, const std::string& text) {
    const ModelConfig& cfg = model.config.model;
    Rng unused(0);
    Graph g;
    Var y = encode_image(g, image, cfg.visual, model.params.visual, false, unused);
    Var z = encode_text(g, tokenize(text, model.vocab, cfg.text.max_len), cfg.text, model.params.text, false, unused);
    Var probs = classify(y, z, model.params.classifier, cfg.classifier_dropout, false, unused);
    Prediction p;
    p.probs = probs.value().data;
    p.label = predict_label(p.probs);
    p.image_embedding = y.value().data;
    p.text_embedding = z.value().data;
    return p;
}

double EvalResult::accuracy() const {
    if (gold.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == predicted[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(gold.size());
}

EvalResult evaluate(const Model& model, const std::vector<Example>& dataset) {
    EvalResult out;
    for (const auto& ex : dataset) {
        Prediction p = predict(model, ex.image, ex.text);
        out.ids.push_back(ex.id);
        out.gold.push_back(ex.label);
        out.predicted.push_back(p.label);
        out.probs.push_back(std::move(p.probs));
        out.image_embeddings.push_back(std::move(p.image_embedding));
        out.text_embeddings.push_back(std::move(p.text_embedding));
    }
    return out;
}

}  // namespace dclp
