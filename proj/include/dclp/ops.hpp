#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dclp/graph.hpp"
#include "dclp/rng.hpp"

// Differentiable operations. Every function records one node on the operands'
// graph together with its backward rule. Matrices are rank-2 row-major;
// rank-1 tensors act as a single row wherever a row is expected.
namespace dclp::ops {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMinNorm = 1e-12;

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// a * s for a one-element s.
Var scale_by(Var a, Var s);
Var exp(Var a);
/// x[m x n] + b broadcast over rows, b has n entries.
Var add_row(Var x, Var b);
/// x * W + b.
Var affine(Var x, Var weight, Var bias);

Var sum(Var a);
Var mean(Var a);

Var softmax_rows(Var x);
/// Mean over rows of -log softmax(row)[target].
Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets);

Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
/// Exact erf form x * Phi(x).
Var gelu(Var x);
/// Inverted dropout; identity when !training or rate == 0.
Var dropout(Var x, double rate, Rng& rng, bool training);
/// Divides each row by its L2 norm; throws DegenerateVectorError below kMinNorm.
Var l2_normalize_rows(Var x);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(Var a, Var b);
Var slice_rows(Var x, std::size_t start, std::size_t count);
/// Mean of the first `count` rows as a 1 x n row; zeros when count == 0.
Var mean_rows(Var x, std::size_t count);
/// Rows of `table` selected by `ids`.
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// heads x (L*L) bias with bias[h][i*L+j] = table[h][clip(j-i, -k, k) + k],
/// where table is heads x (2k+1).
Var relative_bias(Var table, std::size_t seq_len, std::size_t max_distance);

/// Row-softmax attention weights for every head: heads x (L*L).
/// Keys at positions >= valid_len are masked out; when valid_len == 0 every
/// weight is zero.
Tensor attention_probabilities(const Tensor& q, const Tensor& k, const Tensor* bias, std::size_t heads,
                               std::size_t valid_len);

/// Multi-head scaled dot-product attention over projected q, k, v (L x D).
/// Logits per head are q_h k_h^T / sqrt(D/heads) + bias[h]; output is the
/// head-concatenated L x D result.
Var attention(Var q, Var k, Var v, std::size_t heads, std::optional<Var> bias, std::size_t valid_len);

}  // namespace dclp::ops
