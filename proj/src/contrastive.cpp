#include "dclp/contrastive.hpp"

#include <cmath>
#include <numeric>

#include "dclp/error.hpp"
#include "dclp/ops.hpp"

namespace dclp {

ClassifierHead init_classifier(std::size_t proj_dim, std::size_t hidden, Rng& rng) {
    auto normal = [&rng](Shape s) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = rng.normal(0.0, 0.02);
        t.requires_grad = true;
        return t;
    };
    auto zeros = [](Shape s) {
        Tensor t(std::move(s));
        t.requires_grad = true;
        return t;
    };
    ClassifierHead h;
    h.fc1_w = normal({2 * proj_dim, hidden});
    h.fc1_b = zeros({hidden});
    h.fc2_w = normal({hidden, kNumClasses});
    h.fc2_b = zeros({kNumClasses});
    return h;
}

std::vector<double> l2_normalize(std::span<const double> v) {
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (!(norm >= ops::kMinNorm)) throw DegenerateVectorError("norm " + std::to_string(norm));
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= norm;
    return out;
}

double cosine_similarity(std::span<const double> y, std::span<const double> z) {
    if (y.size() != z.size()) {
        throw ShapeError("cosine_similarity of lengths " + std::to_string(y.size()) + " and " + std::to_string(z.size()));
    }
    const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    const double nz = std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0));
    if (!(ny >= ops::kMinNorm) || !(nz >= ops::kMinNorm)) throw DegenerateVectorError("zero vector in cosine similarity");
    return std::inner_product(y.begin(), y.end(), z.begin(), 0.0) / (ny * nz);
}

Var similarity_logits(Var y, Var z, Var scale) {
    if (y.rows() != z.rows()) {
        throw ShapeError("batch mismatch: " + std::to_string(y.rows()) + " images vs " + std::to_string(z.rows()) + " texts");
    }
    return ops::scale_by(ops::matmul(y, ops::transpose(z)), scale);
}

Tensor similarity_logits(const Tensor& y, const Tensor& z, const ContrastiveConfig& cfg) {
    cfg.validate();
    Graph g;
    return similarity_logits(g.constant(y), g.constant(z), g.constant(Tensor::scalar(1.0 / cfg.temperature))).value();
}

Var contrastive_loss(Var logits) {
    const std::size_t m = logits.rows();
    if (m == 0 || logits.cols() != m) throw ShapeError("similarity logits must be square, got " + shape_string(logits.shape()));
    std::vector<std::size_t> targets(m);
    std::iota(targets.begin(), targets.end(), std::size_t{0});
    Var image_side = ops::cross_entropy_rows(logits, targets);
    Var text_side = ops::cross_entropy_rows(ops::transpose(logits), targets);
    return ops::scale(ops::add(image_side, text_side), 0.5);
}

double contrastive_loss(const Tensor& logits) {
    Graph g;
    return contrastive_loss(g.constant(logits)).item();
}

Var classify_logits(Var y, Var z, const ClassifierHead& head, double dropout_rate, bool training, Rng& rng) {
    Graph& g = *y.graph();
    if (y.cols() + z.cols() != head.fc1_w.rows()) {
        throw ShapeError("classifier expects width " + std::to_string(head.fc1_w.rows()) + ", got " +
                         std::to_string(y.cols() + z.cols()));
    }
    Var hidden = ops::gelu(ops::affine(ops::concat_cols(y, z), g.param(head.fc1_w), g.param(head.fc1_b)));
    hidden = ops::dropout(hidden, dropout_rate, rng, training);
    return ops::affine(hidden, g.param(head.fc2_w), g.param(head.fc2_b));
}

Var classify(Var y, Var z, const ClassifierHead& head, double dropout_rate, bool training, Rng& rng) {
    return ops::softmax_rows(classify_logits(y, z, head, dropout_rate, training, rng));
}

std::size_t predict_label(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

}  // namespace dclp
