#include "dclp/model.hpp"

#include <cmath>

#include "dclp/error.hpp"
#include "dclp/ops.hpp"

namespace dclp {

ModelParams init_params(const ModelConfig& cfg, std::size_t vocab_size, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.visual = init_visual(cfg.visual, rng);
    p.text = init_text(cfg.text, vocab_size, rng);
    p.classifier = init_classifier(cfg.visual.proj_dim, cfg.classifier_hidden, rng);
    p.logit_scale = Tensor::scalar(std::log(1.0 / cfg.contrastive.temperature));
    p.logit_scale.requires_grad = cfg.contrastive.learnable_scale;
    return p;
}

std::vector<NamedTensor> named_params(ModelParams& params) {
    std::vector<NamedTensor> out;
    visit_params(params, [&out](const std::string& name, Tensor& t) {
        if (t.requires_grad) out.push_back({name, &t});
    });
    return out;
}

std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    visit_params(params, [&n](const std::string&, const Tensor& t) {
        if (t.requires_grad) n += t.size();
    });
    return n;
}

void zero_grads(ModelParams& params) {
    visit_params(params, [](const std::string&, Tensor& t) {
        if (t.requires_grad) t.zero_grad();
    });
}

void accumulate_gradients(ModelParams& params, const GradMap& grads) {
    visit_params(params, [&grads](const std::string&, Tensor& t) {
        if (!t.requires_grad) return;
        if (t.grad.size() != t.size()) t.zero_grad();
        auto it = grads.find(&t);
        if (it == grads.end()) return;
        for (std::size_t i = 0; i < t.size(); ++i) t.grad[i] += it->second[i];
    });
}

BatchForward forward_batch(Graph& g, const ModelConfig& cfg, const ModelParams& params, std::span<const Sample> batch,
                           const LossWeights& weights, bool training, Rng& rng) {
    if (batch.empty()) throw ContractError("empty batch");
    std::vector<Var> images, texts;
    std::vector<std::size_t> labels;
    for (const Sample& s : batch) {
        images.push_back(encode_image(g, *s.image, cfg.visual, params.visual, training, rng));
        texts.push_back(encode_text(g, s.tokens, cfg.text, params.text, training, rng));
        if (s.label >= kNumClasses) throw ValidationError("label " + std::to_string(s.label) + " out of range");
        labels.push_back(s.label);
    }
    BatchForward out;
    out.image_embeddings = ops::concat_rows(images);
    out.text_embeddings = ops::concat_rows(texts);
    out.class_logits = classify_logits(out.image_embeddings, out.text_embeddings, params.classifier,
                                       cfg.classifier_dropout, training, rng);
    out.classification = ops::cross_entropy_rows(out.class_logits, labels);
    out.loss = ops::scale(out.classification, weights.classification);

    if (weights.contrastive != 0.0) {
        if (batch.size() < 2) throw ContractError("contrastive loss needs a batch of at least 2 pairs");
        Var scale = cfg.contrastive.learnable_scale
                        ? ops::exp(g.param(params.logit_scale))
                        : g.constant(Tensor::scalar(1.0 / cfg.contrastive.temperature));
        out.contrastive = contrastive_loss(similarity_logits(out.image_embeddings, out.text_embeddings, scale));
        out.loss = ops::add(out.loss, ops::scale(*out.contrastive, weights.contrastive));
    }
    return out;
}

Model init_model(const RunConfig& cfg, Vocabulary vocab, Rng& rng) {
    cfg.validate();
    Model m{cfg, std::move(vocab), {}};
    m.params = init_params(cfg.model, m.vocab.size(), rng);
    return m;
}

}  // namespace dclp
