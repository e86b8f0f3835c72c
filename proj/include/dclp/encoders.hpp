#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dclp/config.hpp"
#include "dclp/graph.hpp"
#include "dclp/rng.hpp"
#include "dclp/vocab.hpp"

namespace dclp {

/// One pre-norm transformer layer: attention and MLP sublayers, each with
/// its own LayerNorm and residual connection.
struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct VisualParams {
    Tensor patch_projection;     // (P*P*C) x D
    Tensor class_token;          // D
    Tensor position_embedding;   // (N+1) x D
    std::vector<BlockParams> blocks;
    Tensor head_w;               // D x proj
    Tensor head_b;               // proj
};

struct TextParams {
    Tensor token_embedding;      // V x D
    Tensor relative_bias_table;  // heads x (2k+1), shared by all layers
    std::vector<BlockParams> blocks;
    Tensor head_w;
    Tensor head_b;
};

template <class Block, class F>
void visit_block(Block& b, const std::string& p, F&& f) {
    f(p + "ln1.gain", b.ln1_gain);
    f(p + "ln1.bias", b.ln1_bias);
    f(p + "attn.wq", b.wq);
    f(p + "attn.bq", b.bq);
    f(p + "attn.wk", b.wk);
    f(p + "attn.bk", b.bk);
    f(p + "attn.wv", b.wv);
    f(p + "attn.bv", b.bv);
    f(p + "attn.wo", b.wo);
    f(p + "attn.bo", b.bo);
    f(p + "ln2.gain", b.ln2_gain);
    f(p + "ln2.bias", b.ln2_bias);
    f(p + "mlp.fc1.w", b.fc1_w);
    f(p + "mlp.fc1.b", b.fc1_b);
    f(p + "mlp.fc2.w", b.fc2_w);
    f(p + "mlp.fc2.b", b.fc2_b);
}

template <class Params, class F>
void visit_visual(Params& v, const std::string& p, F&& f) {
    f(p + "patch_projection", v.patch_projection);
    f(p + "class_token", v.class_token);
    f(p + "position_embedding", v.position_embedding);
    for (std::size_t i = 0; i < v.blocks.size(); ++i) visit_block(v.blocks[i], p + "block" + std::to_string(i) + ".", f);
    f(p + "head.w", v.head_w);
    f(p + "head.b", v.head_b);
}

template <class Params, class F>
void visit_text(Params& t, const std::string& p, F&& f) {
    f(p + "token_embedding", t.token_embedding);
    f(p + "relative_bias_table", t.relative_bias_table);
    for (std::size_t i = 0; i < t.blocks.size(); ++i) visit_block(t.blocks[i], p + "block" + std::to_string(i) + ".", f);
    f(p + "head.w", t.head_w);
    f(p + "head.b", t.head_b);
}

/// Weight matrices ~ N(0, 0.02^2); biases, class token and position
/// embeddings zero; LayerNorm gains one.
BlockParams init_block(std::size_t dim, std::size_t mlp_ratio, Rng& rng);
VisualParams init_visual(const VisualConfig& cfg, Rng& rng);
TextParams init_text(const TextConfig& cfg, std::size_t vocab_size, Rng& rng);

/// H x W x C image -> N x (P*P*C); patches in row-major grid order, each the
/// row-major flattening of its P x P x C block.
Tensor patchify(const Tensor& image, std::size_t patch_size);

/// concat(class_token; patches * E) + position_embedding.
Var embed_sequence(Graph& g, const Tensor& patches, const VisualParams& params);

struct BlockContext {
    std::size_t heads = 1;
    std::optional<Var> bias;             // heads x (L*L), added to attention logits
    std::size_t valid_len = 0;           // keys >= valid_len are masked
    double dropout_rate = 0.0;
    bool training = false;
};

Var encoder_block(Graph& g, Var x, const BlockParams& params, const BlockContext& ctx, Rng& rng);

/// Unit-norm image embedding, 1 x proj_dim.
Var encode_image(Graph& g, const Tensor& image, const VisualConfig& cfg, const VisualParams& params, bool training,
                 Rng& rng);

/// Unit-norm text embedding, 1 x proj_dim. PAD positions are masked out of
/// attention and pooling.
Var encode_text(Graph& g, const TokenSequence& tokens, const TextConfig& cfg, const TextParams& params, bool training,
                Rng& rng);

}  // namespace dclp
