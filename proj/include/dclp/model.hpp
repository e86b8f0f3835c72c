#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dclp/config.hpp"
#include "dclp/contrastive.hpp"
#include "dclp/encoders.hpp"
#include "dclp/grad_check.hpp"
#include "dclp/vocab.hpp"

namespace dclp {

/// Every learnable tensor of the dual encoder and its classification head.
struct ModelParams {
    VisualParams visual;
    TextParams text;
    ClassifierHead classifier;
    /// log of the similarity scale; trained only when learnable_scale is set.
    Tensor logit_scale;
};

template <class Params, class F>
void visit_params(Params& p, F&& f) {
    visit_visual(p.visual, "visual.", f);
    visit_text(p.text, "text.", f);
    visit_classifier(p.classifier, "classifier.", f);
    f(std::string("logit_scale"), p.logit_scale);
}

ModelParams init_params(const ModelConfig& cfg, std::size_t vocab_size, Rng& rng);
std::vector<NamedTensor> named_params(ModelParams& params);
std::size_t parameter_count(const ModelParams& params);
void zero_grads(ModelParams& params);
/// Adds the graph gradients into each trainable tensor's `grad`.
void accumulate_gradients(ModelParams& params, const GradMap& grads);

/// One (image, text, label) triple ready for the encoders.
struct Sample {
    const Tensor* image = nullptr;
    TokenSequence tokens;
    std::size_t label = 0;
};

struct LossWeights {
    double contrastive = 1.0;
    double classification = 1.0;
};

struct BatchForward {
    Var loss;
    std::optional<Var> contrastive;
    Var classification;
    Var class_logits;       // m x 10
    Var image_embeddings;   // m x proj
    Var text_embeddings;    // m x proj
};

/// Encodes a batch, then combines the weighted contrastive loss (skipped when
/// its weight is zero) with the classification cross-entropy.
BatchForward forward_batch(Graph& g, const ModelConfig& cfg, const ModelParams& params, std::span<const Sample> batch,
                           const LossWeights& weights, bool training, Rng& rng);

/// A trained or initialized model with the vocabulary it was built against.
struct Model {
    RunConfig config;
    Vocabulary vocab;
    ModelParams params;
};

Model init_model(const RunConfig& cfg, Vocabulary vocab, Rng& rng);

}  // namespace dclp
