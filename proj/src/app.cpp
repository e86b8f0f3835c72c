#include "dclp/app.hpp"

#include <charconv>
#include <filesystem>
#include <iostream>

#include "dclp/dataset.hpp"
#include "dclp/image.hpp"
#include "dclp/metrics.hpp"
#include "dclp/trainer.hpp"

namespace dclp {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string real(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

std::string checkpoint_path(const RunConfig& cfg) {
    return cfg.checkpoint.empty() ? join(cfg.out, "checkpoint.dclp") : cfg.checkpoint;
}

/// Dataset for eval/embed: test_manifest, else manifest, else the split
/// written by a previous train run into the output directory.
std::string evaluation_manifest(const RunConfig& cfg) {
    if (!cfg.test_manifest.empty()) return cfg.test_manifest;
    if (!cfg.manifest.empty()) return cfg.manifest;
    const std::string fallback = join(cfg.out, "test_manifest.jsonl");
    if (fs::exists(fallback)) return fallback;
    throw UsageError("missing required path: set test_manifest or manifest");
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    SynthOptions opt;
    opt.n_per_class = cfg.synth_per_class;
    opt.image_size = cfg.model.visual.image_size;
    opt.seed = cfg.train.seed;
    opt.noise = cfg.synth_noise;
    const Manifest m = generate_synthetic(cfg.out, opt);
    out << "wrote " << m.records.size() << " records to " << join(cfg.out, "manifest.jsonl") << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.manifest.empty()) throw UsageError("missing required path: manifest");
    const Manifest all = load_manifest(cfg.manifest);
    Manifest train_manifest = all;
    if (cfg.test_manifest.empty()) {
        auto [train_part, test_part] = split(all, cfg.train_fraction, cfg.train.seed);
        // Written with paths resolved against the original manifest location.
        for (auto* part : {&train_part, &test_part})
            for (auto& r : part->records) r.image = fs::relative(fs::absolute(all.resolve(r)), fs::absolute(cfg.out)).string();
        save_manifest(train_part, join(cfg.out, "train_manifest.jsonl"));
        save_manifest(test_part, join(cfg.out, "test_manifest.jsonl"));
        train_part.base_dir = cfg.out;
        train_manifest = std::move(train_part);
    }
    const std::vector<Example> train_set = load_examples(train_manifest, cfg.model.visual.image_size);

    TrainState state = cfg.checkpoint.empty() ? init_training(train_set, cfg)
                                              : restore_checkpoint(load_checkpoint(cfg.checkpoint));
    state.model.config.train.epochs = cfg.train.epochs;
    state.model.config.out = cfg.out;
    state.model.config.checkpoint.clear();
    TrainOptions options;
    options.out_dir = cfg.out;
    options.on_epoch = [&out](const EpochRecord& r) {
        out << "epoch " << r.epoch << "\tloss " << real(r.mean_loss) << "\ttrain_accuracy " << real(r.train_accuracy) << "\n";
    };
    run_epochs(state, train_set, cfg.train.epochs, options);
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const Model model = model_from_checkpoint(load_checkpoint(checkpoint_path(cfg)));
    const Manifest m = load_manifest(evaluation_manifest(cfg));
    const EvalResult result = evaluate(model, load_examples(m, model.config.model.visual.image_size));
    if (result.gold.empty()) throw DataError("evaluation set is empty");

    const ConfusionMatrix cm = confusion_matrix(result.gold, result.predicted, kNumClasses);
    ClassReport report = class_report(cm);
    report.auc = roc_auc_ovr(result.gold, result.probs);

    std::string predictions = "id\tgold\tpredicted";
    for (std::size_t c = 0; c < kNumClasses; ++c) predictions += "\tp" + std::to_string(c);
    predictions += "\n";
    for (std::size_t i = 0; i < result.ids.size(); ++i) {
        predictions += result.ids[i] + "\t" + std::to_string(result.gold[i]) + "\t" + std::to_string(result.predicted[i]);
        for (double p : result.probs[i]) predictions += "\t" + real(p);
        predictions += "\n";
    }
    const std::string table = render_report(report, "table");
    write_file(join(cfg.out, "report.json"), render_report(report, "json"));
    write_file(join(cfg.out, "report.txt"), table);
    write_file(join(cfg.out, "confusion.csv"), cm.to_csv());
    write_file(join(cfg.out, "predictions.tsv"), predictions);
    out << table;
    return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
    if (cfg.image.empty()) throw UsageError("missing required path: image");
    if (!fs::exists(cfg.image)) throw DataError("image '" + cfg.image + "' does not exist");
    const Model model = model_from_checkpoint(load_checkpoint(checkpoint_path(cfg)));
    const Tensor image = preprocess(load_image(cfg.image), model.config.model.visual.image_size);
    const Prediction p = predict(model, image, cfg.text);
    out << "label\t" << p.label << "\nprobabilities";
    for (double v : p.probs) out << "\t" << real(v);
    out << "\n";
    return kExitOk;
}

int cmd_embed(const RunConfig& cfg, std::ostream& out) {
    const Model model = model_from_checkpoint(load_checkpoint(checkpoint_path(cfg)));
    const Manifest m = load_manifest(evaluation_manifest(cfg));
    const EvalResult result = evaluate(model, load_examples(m, model.config.model.visual.image_size));
    if (result.ids.empty()) throw DataError("nothing to embed");
    const std::size_t dim = model.config.model.visual.proj_dim;
    Tensor images(Shape{result.ids.size(), dim}), texts(Shape{result.ids.size(), dim});
    std::string index = "id\tlabel\n";
    for (std::size_t i = 0; i < result.ids.size(); ++i) {
        std::copy(result.image_embeddings[i].begin(), result.image_embeddings[i].end(), images.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
        std::copy(result.text_embeddings[i].begin(), result.text_embeddings[i].end(), texts.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
        index += result.ids[i] + "\t" + std::to_string(result.gold[i]) + "\n";
    }
    save_tnsr(join(cfg.out, "image_embeddings.tnsr"), images);
    save_tnsr(join(cfg.out, "text_embeddings.tnsr"), texts);
    write_file(join(cfg.out, "embedding_index.tsv"), index);
    out << "wrote " << result.ids.size() << " image and text embeddings to " << cfg.out << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
    const GradCheckReport report = run_gradcheck(cfg);
    const std::string text = report.to_text();
    write_file(join(cfg.out, "gradcheck.txt"), text);
    out << text;
    return report.passed ? kExitOk : kExitNumeric;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return kExitUsage;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Io: return kExitIo;
        case ErrorKind::Numeric: return kExitNumeric;
        default: return kExitInternal;
    }
}

const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = {"train", "eval", "predict", "embed", "synth", "gradcheck"};
    return names;
}

GradCheckReport run_gradcheck(const RunConfig& cfg) {
    RunConfig c = cfg;
    apply_setting(c, "dropout", "0");
    c.validate();
    const std::vector<Example> batch_examples =
        make_synthetic_examples(std::max<std::size_t>(2, c.gradcheck_batch), c.model.visual.image_size, c.train.seed);
    std::vector<std::string> corpus;
    for (const auto& ex : batch_examples) corpus.push_back(ex.text);
    Rng rng(c.train.seed);
    Model model = init_model(c, build_vocab(corpus, 1), rng);
    // Move off the near-degenerate initial point (near-uniform attention
    // makes query/key gradients vanish below finite-difference resolution).
    Rng perturb(c.train.seed ^ 0x5eedULL);
    visit_params(model.params, [&](const std::string&, Tensor& t) {
        for (double& v : t.data) v += c.gradcheck_perturb * perturb.normal();
    });
    // Exercise the learnable scale path too.
    model.params.logit_scale.requires_grad = true;
    c.model.contrastive.learnable_scale = true;

    std::vector<Sample> samples;
    for (const auto& ex : batch_examples) samples.push_back({&ex.image, tokenize(ex.text, model.vocab, c.model.text.max_len), ex.label});
    const LossWeights weights{c.train.contrastive_weight == 0.0 ? 1.0 : c.train.contrastive_weight,
                              c.train.classification_weight};
    ScalarFn fn = [&](Graph& g) {
        Rng unused(0);
        return forward_batch(g, c.model, model.params, samples, weights, false, unused).loss;
    };
    GradCheckOptions options;
    options.h = c.gradcheck_h;
    options.tol = c.gradcheck_tol;
    options.max_entries = c.gradcheck_entries;
    return grad_check(fn, named_params(model.params), options);
}

int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        cfg.validate();
        ensure_dir(cfg.out);
        write_file(join(cfg.out, "config.txt"), cfg.to_text());
        if (subcommand == "synth") return cmd_synth(cfg, out);
        if (subcommand == "train") return cmd_train(cfg, out);
        if (subcommand == "eval") return cmd_eval(cfg, out);
        if (subcommand == "predict") return cmd_predict(cfg, out);
        if (subcommand == "embed") return cmd_embed(cfg, out);
        if (subcommand == "gradcheck") return cmd_gradcheck(cfg, out);
        throw UsageError("unknown subcommand '" + subcommand + "'");
    } catch (const Error& e) {
        err << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace dclp
