#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dclp/config.hpp"
#include "dclp/graph.hpp"
#include "dclp/rng.hpp"

namespace dclp {

/// Two-layer MLP over the concatenated pair embedding [y; z].
struct ClassifierHead {
    Tensor fc1_w;  // 2*proj x hidden
    Tensor fc1_b;
    Tensor fc2_w;  // hidden x 10
    Tensor fc2_b;
};

template <class Head, class F>
void visit_classifier(Head& h, const std::string& p, F&& f) {
    f(p + "fc1.w", h.fc1_w);
    f(p + "fc1.b", h.fc1_b);
    f(p + "fc2.w", h.fc2_w);
    f(p + "fc2.b", h.fc2_b);
}

ClassifierHead init_classifier(std::size_t proj_dim, std::size_t hidden, Rng& rng);

std::vector<double> l2_normalize(std::span<const double> v);

/// (y . z) / (|y| |z|); throws DegenerateVectorError on a zero vector.
double cosine_similarity(std::span<const double> y, std::span<const double> z);

/// logits[i][j] = scale * (Y_i . Z_j). Y and Z are m x d with unit rows.
Var similarity_logits(Var y, Var z, Var scale);
Tensor similarity_logits(const Tensor& y, const Tensor& z, const ContrastiveConfig& cfg);

/// Symmetric InfoNCE: mean of the row-wise and column-wise cross-entropies
/// with the diagonal as targets.
Var contrastive_loss(Var logits);
double contrastive_loss(const Tensor& logits);

/// Pre-softmax classifier scores, m x 10, for row-aligned pairs (Y_i, Z_i).
Var classify_logits(Var y, Var z, const ClassifierHead& head, double dropout_rate, bool training, Rng& rng);
/// Softmax of classify_logits.
Var classify(Var y, Var z, const ClassifierHead& head, double dropout_rate, bool training, Rng& rng);

/// Argmax with ties going to the lowest index.
std::size_t predict_label(std::span<const double> probs);

}  // namespace dclp
