#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"

#include "dclp/adam.hpp"
#include "dclp/checkpoint.hpp"
#include "dclp/dataset.hpp"
#include "dclp/error.hpp"
#include "dclp/image.hpp"
#include "dclp/model.hpp"
#include "dclp/trainer.hpp"

using namespace dclp;

namespace {

RunConfig small_config(std::size_t epochs) {
    RunConfig cfg = profile_defaults("desk");
    cfg.model.visual.model_dim = cfg.model.text.model_dim = 16;
    cfg.model.visual.heads = cfg.model.text.heads = 2;
    cfg.model.visual.layers = cfg.model.text.layers = 1;
    cfg.model.visual.proj_dim = cfg.model.text.proj_dim = 8;
    cfg.model.classifier_hidden = 16;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 8;
    cfg.train.seed = 17;
    return cfg;
}

std::vector<Example> subset_labels(std::vector<Example> all, std::size_t classes) {
    all.erase(std::remove_if(all.begin(), all.end(), [&](const Example& e) { return e.label >= classes; }), all.end());
    return all;
}

bool same_params(const ModelParams& a, const ModelParams& b) {
    std::vector<std::vector<double>> da, db;
    visit_params(a, [&](const std::string&, const Tensor& t) { da.push_back(t.data); });
    visit_params(b, [&](const std::string&, const Tensor& t) { db.push_back(t.data); });
    return da == db;
}

}  // namespace

TEST_CASE("adam_step") {
    AdamHyper hyper;
    SUBCASE("zero gradient leaves parameters unchanged") {
        Tensor p(Shape{3}, std::vector<double>{1, -2, 3});
        p.requires_grad = true;
        p.zero_grad();
        AdamState st;
        adam_step({{"p", &p}}, st, hyper);
        CHECK(p.data == std::vector<double>{1, -2, 3});
        CHECK(st.step == 1);
        adam_step({{"p", &p}}, st, hyper);
        CHECK(st.step == 2);
    }
    SUBCASE("first step moves by lr") {
        Tensor p = Tensor::scalar(0.5);
        p.requires_grad = true;
        p.grad = {1.0};
        AdamState st;
        adam_step({{"p", &p}}, st, hyper);
        // m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
        CHECK(p.data[0] == doctest::Approx(0.5 - 0.001 / (1.0 + 1e-8)).epsilon(1e-15));
        CHECK(std::abs((0.5 - p.data[0]) - 0.001) < 1e-10);
    }
    SUBCASE("quadratic converges") {
        Tensor p = Tensor::scalar(1.0);
        p.requires_grad = true;
        AdamState st;
        AdamHyper fast = hyper;
        fast.learning_rate = 0.01;
        for (int i = 0; i < 500; ++i) {
            p.grad = {2.0 * p.data[0]};
            adam_step({{"p", &p}}, st, fast);
        }
        CHECK(std::abs(p.data[0]) < 0.01);
    }
    SUBCASE("state errors") {
        Tensor p(Shape{2}, 1.0);
        p.requires_grad = true;
        AdamState st;
        CHECK_THROWS_AS(adam_step({{"p", &p}}, st, hyper), StateError);  // no grad
        p.zero_grad();
        adam_step({{"p", &p}}, st, hyper);
        Tensor q(Shape{3}, 1.0);
        q.requires_grad = true;
        q.zero_grad();
        CHECK_THROWS_AS(adam_step({{"p", &q}}, st, hyper), StateError);
    }
}

TEST_CASE("adam matches a hand-rolled reference over many steps") {
    Rng rng(3);
    Tensor p = testing::random_tensor({4}, rng);
    p.requires_grad = true;
    std::vector<double> ref = p.data, m(4, 0.0), v(4, 0.0);
    AdamHyper hyper;
    AdamState st;
    for (int t = 1; t <= 30; ++t) {
        std::vector<double> g(4);
        for (double& x : g) x = rng.normal();
        p.grad = g;
        adam_step({{"p", &p}}, st, hyper);
        for (std::size_t i = 0; i < 4; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.99 * v[i] + 0.01 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.99, t));
            ref[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.data[i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("checkpoint encoding") {
    Checkpoint c;
    c.config_text = "epochs = 3\n[vocab]\nhello\n";
    c.arrays.push_back(NamedArray::real("param.w", {2, 2}, {1.5, -0.0, 1e-300, std::nextafter(1.0, 2.0)}));
    c.arrays.push_back(NamedArray::integer("meta.rng_state", {1, 2, 3, ~0ull}));
    const std::string bytes = encode_checkpoint(c);
    CHECK(bytes.substr(0, 4) == "DCLP");
    const Checkpoint d = decode_checkpoint(bytes);
    CHECK(d.config_text == c.config_text);
    REQUIRE(d.arrays.size() == 2);
    CHECK(std::memcmp(d.at("param.w").f64.data(), c.arrays[0].f64.data(), 4 * sizeof(double)) == 0);
    CHECK(std::signbit(d.at("param.w").f64[1]));
    CHECK(d.at("meta.rng_state").u64 == c.arrays[1].u64);
    CHECK(d.find("nope") == nullptr);

    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), TruncatedError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), BadMagicError);
    std::string version = bytes;
    version[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(version), VersionMismatchError);

    const auto dir = testing::scratch_dir("ckpt_encoding");
    const auto path = (dir / "a.dclp").string();
    save_checkpoint(c, path);
    CHECK(read_file(path) == bytes);
    CHECK(load_checkpoint(path).config_text == c.config_text);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.dclp").string()), IoError);
}

TEST_CASE("forward_batch refuses contrastive loss on a single pair") {
    RunConfig cfg = small_config(1);
    auto data = make_synthetic_examples(2, cfg.model.visual.image_size, 1);
    TrainState st = init_training(data, cfg);
    std::vector<Sample> one{{&data[0].image, tokenize(data[0].text, st.model.vocab, 16), data[0].label}};
    Graph g;
    CHECK_THROWS_AS(forward_batch(g, cfg.model, st.model.params, one, {1.0, 1.0}, true, st.rng), ContractError);
    Graph g2;
    auto fwd = forward_batch(g2, cfg.model, st.model.params, one, {0.0, 1.0}, true, st.rng);
    CHECK_FALSE(fwd.contrastive.has_value());
}

TEST_CASE("training loop bookkeeping") {
    RunConfig cfg = small_config(0);
    auto data = make_synthetic_examples(20, cfg.model.visual.image_size, 2);
    TrainState init = init_training(data, cfg);
    TrainState zero = train(data, cfg);
    CHECK(zero.history.empty());
    CHECK(zero.epoch == 0);
    CHECK(same_params(zero.model.params, init.model.params));

    // 20 examples, batch 8 -> 8, 8, 4 (short batch kept)
    cfg.train.epochs = 1;
    cfg.train.batch_size = 8;
    TrainState one = train(data, cfg);
    CHECK(one.adam.step == 3);
    // 17 examples, batch 8 -> 8, 8, and a lone example that is dropped
    std::vector<Example> odd(data.begin(), data.begin() + 17);
    TrainState two = train(odd, cfg);
    CHECK(two.adam.step == 2);
    // a single example can only train the classifier alone
    std::vector<Example> single(data.begin(), data.begin() + 1);
    CHECK_THROWS_AS(train(single, cfg), DataError);
    cfg.train.contrastive_weight = 0.0;
    CHECK(train(single, cfg).adam.step == 1);
}

TEST_CASE("training is deterministic and resumable") {
    RunConfig cfg = small_config(4);
    auto data = make_synthetic_examples(24, cfg.model.visual.image_size, 3);
    const auto dir = testing::scratch_dir("resume");
    cfg.keep_epoch_checkpoints = true;

    TrainState a = train(data, cfg, {(dir / "a").string(), nullptr});
    TrainState b = train(data, cfg, {(dir / "b").string(), nullptr});
    CHECK(same_params(a.model.params, b.model.params));
    CHECK(read_file((dir / "a" / "checkpoint.dclp").string()) == read_file((dir / "b" / "checkpoint.dclp").string()));
    CHECK(read_file((dir / "a" / "epochs.tsv").string()) == format_history(a.history));
    CHECK(a.history.size() == 4);

    for (std::size_t k = 1; k < 4; ++k) {
        const auto path = dir / "a" / ("checkpoint_epoch_00" + std::to_string(k) + ".dclp");
        TrainState resumed = restore_checkpoint(load_checkpoint(path.string()));
        CHECK(resumed.epoch == k);
        run_epochs(resumed, data, k + 1);
        CHECK(resumed.history.back().mean_loss == a.history[k].mean_loss);
        run_epochs(resumed, data, 4);
        CHECK(same_params(resumed.model.params, a.model.params));
        CHECK(encode_checkpoint(make_checkpoint(resumed)) == encode_checkpoint(make_checkpoint(a)));
    }

    // round-trip of every array through the file
    const Checkpoint ck = make_checkpoint(a);
    const TrainState back = restore_checkpoint(decode_checkpoint(encode_checkpoint(ck)));
    CHECK(same_params(back.model.params, a.model.params));
    CHECK(back.adam.step == a.adam.step);
    CHECK(back.adam.first == a.adam.first);
    CHECK(back.adam.second == a.adam.second);
    CHECK(back.rng == a.rng);
    CHECK(back.model.vocab.words() == a.model.vocab.words());
    CHECK(back.model.config.to_text() == a.model.config.to_text());

    RunConfig other = cfg;
    other.train.seed = 18;
    CHECK_FALSE(same_params(train(data, other).model.params, a.model.params));
}

TEST_CASE("evaluate") {
    RunConfig cfg = small_config(0);
    auto data = make_synthetic_examples(30, cfg.model.visual.image_size, 4);
    TrainState st = init_training(data, cfg);
    const EvalResult r1 = evaluate(st.model, data);
    const EvalResult r2 = evaluate(st.model, data);
    CHECK(r1.predicted == r2.predicted);
    CHECK(r1.probs == r2.probs);
    CHECK(r1.gold.size() == 30);
    for (const auto& p : r1.probs) {
        double s = 0;
        for (double v : p) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    for (const auto& y : r1.image_embeddings) CHECK(std::abs(testing::norm2(y) - 1.0) <= 1e-9);
    for (const auto& z : r1.text_embeddings) CHECK(std::abs(testing::norm2(z) - 1.0) <= 1e-9);
    std::vector<Example> one(data.begin(), data.begin() + 1);
    const EvalResult single = evaluate(st.model, one);
    CHECK(single.predicted.size() == 1);
    CHECK(single.probs.size() == 1);
    CHECK(single.ids.size() == 1);
    const Prediction p = predict(st.model, data[0].image, data[0].text);
    CHECK(p.probs == r1.probs[0]);
}

TEST_CASE("random initialization scores near chance") {
    RunConfig cfg = profile_defaults("desk");
    auto data = make_synthetic_examples(1000, cfg.model.visual.image_size, 5);
    TrainState st = init_training(data, cfg);
    const double acc = evaluate(st.model, data).accuracy();
    // 0.1 +- 3 sd of a binomial at n = 1000 is [0.072, 0.128], inside [0.05, 0.20]
    CHECK(acc >= 0.05);
    CHECK(acc <= 0.20);
}

TEST_CASE("a small four-class set is memorized") {
    RunConfig cfg = profile_defaults("desk");
    cfg.train.epochs = 200;
    auto data = subset_labels(make_synthetic_examples(80, cfg.model.visual.image_size, 6), 4);
    REQUIRE(data.size() == 32);
    TrainState st = train(data, cfg);
    CHECK(st.history.back().train_accuracy >= 0.95);
}

TEST_CASE("desk-scale loss trends down over ten-epoch windows") {
    RunConfig cfg = profile_defaults("desk");
    cfg.train.epochs = 50;
    auto data = make_synthetic_examples(320, cfg.model.visual.image_size, 7);
    TrainState st = train(data, cfg);
    std::vector<double> windows;
    for (std::size_t w = 0; w < 5; ++w) {
        double s = 0;
        for (std::size_t e = w * 10; e < w * 10 + 10; ++e) s += st.history[e].mean_loss;
        windows.push_back(s / 10);
    }
    int violations = 0;
    for (std::size_t i = 1; i < windows.size(); ++i) violations += windows[i] > windows[i - 1] ? 1 : 0;
    CAPTURE(windows);
    CHECK(violations <= 1);
}
