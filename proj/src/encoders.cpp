#include "dclp/encoders.hpp"

#include "dclp/error.hpp"
#include "dclp/ops.hpp"

namespace dclp {

namespace {

constexpr double kInitStd = 0.02;

Tensor param_normal(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal(0.0, kInitStd);
    t.requires_grad = true;
    return t;
}

Tensor param_fill(Shape shape, double value) {
    Tensor t(std::move(shape), value);
    t.requires_grad = true;
    return t;
}

}  // namespace

BlockParams init_block(std::size_t dim, std::size_t mlp_ratio, Rng& rng) {
    const std::size_t hidden = dim * mlp_ratio;
    BlockParams b;
    b.ln1_gain = param_fill({dim}, 1.0);
    b.ln1_bias = param_fill({dim}, 0.0);
    b.wq = param_normal({dim, dim}, rng);
    b.bq = param_fill({dim}, 0.0);
    b.wk = param_normal({dim, dim}, rng);
    b.bk = param_fill({dim}, 0.0);
    b.wv = param_normal({dim, dim}, rng);
    b.bv = param_fill({dim}, 0.0);
    b.wo = param_normal({dim, dim}, rng);
    b.bo = param_fill({dim}, 0.0);
    b.ln2_gain = param_fill({dim}, 1.0);
    b.ln2_bias = param_fill({dim}, 0.0);
    b.fc1_w = param_normal({dim, hidden}, rng);
    b.fc1_b = param_fill({hidden}, 0.0);
    b.fc2_w = param_normal({hidden, dim}, rng);
    b.fc2_b = param_fill({dim}, 0.0);
    return b;
}

VisualParams init_visual(const VisualConfig& cfg, Rng& rng) {
    cfg.validate();
    VisualParams p;
    p.patch_projection = param_normal({cfg.patch_width(), cfg.model_dim}, rng);
    p.class_token = param_fill({cfg.model_dim}, 0.0);
    p.position_embedding = param_fill({cfg.seq_len(), cfg.model_dim}, 0.0);
    for (std::size_t i = 0; i < cfg.layers; ++i) p.blocks.push_back(init_block(cfg.model_dim, cfg.mlp_ratio, rng));
    p.head_w = param_normal({cfg.model_dim, cfg.proj_dim}, rng);
    p.head_b = param_fill({cfg.proj_dim}, 0.0);
    return p;
}

TextParams init_text(const TextConfig& cfg, std::size_t vocab_size, Rng& rng) {
    cfg.validate();
    TextParams p;
    p.token_embedding = param_normal({vocab_size, cfg.model_dim}, rng);
    p.relative_bias_table = param_normal({cfg.heads, 2 * cfg.max_relative_distance + 1}, rng);
    for (std::size_t i = 0; i < cfg.layers; ++i) p.blocks.push_back(init_block(cfg.model_dim, cfg.mlp_ratio, rng));
    p.head_w = param_normal({cfg.model_dim, cfg.proj_dim}, rng);
    p.head_b = param_fill({cfg.proj_dim}, 0.0);
    return p;
}

Tensor patchify(const Tensor& image, std::size_t patch_size) {
    if (image.rank() != 3) throw ShapeError("patchify expects H x W x C, got " + shape_string(image.shape));
    const std::size_t h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
        throw ShapeError("image " + shape_string(image.shape) + " not divisible into " + std::to_string(patch_size) +
                         "-pixel patches");
    }
    const std::size_t gh = h / patch_size, gw = w / patch_size;
    const std::size_t width = patch_size * patch_size * c;
    Tensor out(Shape{gh * gw, width});
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            double* row = out.data.data() + (py * gw + px) * width;
            for (std::size_t y = 0; y < patch_size; ++y) {
                const double* src = image.data.data() + ((py * patch_size + y) * w + px * patch_size) * c;
                std::copy_n(src, patch_size * c, row + y * patch_size * c);
            }
        }
    }
    return out;
}

Var embed_sequence(Graph& g, const Tensor& patches, const VisualParams& params) {
    if (patches.rank() != 2 || patches.cols() != params.patch_projection.rows()) {
        throw ShapeError("patches " + shape_string(patches.shape) + " for projection " +
                         shape_string(params.patch_projection.shape));
    }
    if (patches.rows() + 1 != params.position_embedding.rows()) {
        throw ShapeError(std::to_string(patches.rows()) + " patches for position table " +
                         shape_string(params.position_embedding.shape));
    }
    Var projected = ops::matmul(g.constant(patches), g.param(params.patch_projection));
    Var sequence = ops::concat_rows({g.param(params.class_token), projected});
    return ops::add(sequence, g.param(params.position_embedding));
}

Var encoder_block(Graph& g, Var x, const BlockParams& p, const BlockContext& ctx, Rng& rng) {
    Var h = ops::layer_norm(x, g.param(p.ln1_gain), g.param(p.ln1_bias));
    Var q = ops::affine(h, g.param(p.wq), g.param(p.bq));
    Var k = ops::affine(h, g.param(p.wk), g.param(p.bk));
    Var v = ops::affine(h, g.param(p.wv), g.param(p.bv));
    Var attended = ops::attention(q, k, v, ctx.heads, ctx.bias, ctx.valid_len);
    attended = ops::affine(attended, g.param(p.wo), g.param(p.bo));
    attended = ops::dropout(attended, ctx.dropout_rate, rng, ctx.training);
    Var mid = ops::add(x, attended);

    Var h2 = ops::layer_norm(mid, g.param(p.ln2_gain), g.param(p.ln2_bias));
    Var mlp = ops::gelu(ops::affine(h2, g.param(p.fc1_w), g.param(p.fc1_b)));
    mlp = ops::affine(mlp, g.param(p.fc2_w), g.param(p.fc2_b));
    mlp = ops::dropout(mlp, ctx.dropout_rate, rng, ctx.training);
    return ops::add(mid, mlp);
}

Var encode_image(Graph& g, const Tensor& image, const VisualConfig& cfg, const VisualParams& params, bool training,
                 Rng& rng) {
    if (image.shape != Shape{cfg.image_size, cfg.image_size, cfg.channels}) {
        throw ShapeError("image " + shape_string(image.shape) + " does not match configured " +
                         shape_string({cfg.image_size, cfg.image_size, cfg.channels}));
    }
    Var x = embed_sequence(g, patchify(image, cfg.patch_size), params);
    BlockContext ctx{cfg.heads, std::nullopt, cfg.seq_len(), cfg.dropout_rate, training};
    for (const auto& block : params.blocks) x = encoder_block(g, x, block, ctx, rng);
    Var cls = ops::slice_rows(x, 0, 1);
    return ops::l2_normalize_rows(ops::affine(cls, g.param(params.head_w), g.param(params.head_b)));
}

Var encode_text(Graph& g, const TokenSequence& tokens, const TextConfig& cfg, const TextParams& params, bool training,
                Rng& rng) {
    const std::size_t vocab = params.token_embedding.rows();
    for (std::size_t id : tokens.ids) {
        if (id >= vocab) {
            throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
        }
    }
    if (tokens.ids.empty() || tokens.valid_len > tokens.ids.size()) {
        throw ShapeError("token sequence of length " + std::to_string(tokens.ids.size()) + " with valid length " +
                         std::to_string(tokens.valid_len));
    }
    Var x = ops::gather_rows(g.param(params.token_embedding), tokens.ids);
    Var bias = ops::relative_bias(g.param(params.relative_bias_table), tokens.ids.size(), cfg.max_relative_distance);
    BlockContext ctx{cfg.heads, bias, tokens.valid_len, cfg.dropout_rate, training};
    for (const auto& block : params.blocks) x = encoder_block(g, x, block, ctx, rng);
    Var pooled = ops::mean_rows(x, tokens.valid_len);
    return ops::l2_normalize_rows(ops::affine(pooled, g.param(params.head_w), g.param(params.head_b)));
}

}  // namespace dclp
