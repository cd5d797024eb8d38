#pragma once

#include <cstddef>
#include <span>

#include "linklearn/tensor.hpp"

// Differentiable operations. Every op checks shapes, computes its forward
// value eagerly, and records a backward closure only when some input requires
// a gradient.
namespace linklearn::ops {

// [m x k] x [k x n] -> [m x n]
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
// x [rows x c] + b [c] broadcast over rows.
Var add_bias(Var x, Var bias);
// x * v[index], differentiable in both x and the selected element of v.
Var scale_by(Var x, Var v, std::size_t index);
Var relu(Var x);
// Exact (erf) GELU.
Var gelu(Var x);
// Normalizes each row over the last dimension, then applies gain/bias.
Var layernorm(Var x, Var gain, Var bias, double eps = 1e-5);
// [r x c1] ++ [r x c2] -> [r x (c1 + c2)]
Var concat_cols(Var a, Var b);
Var sum(Var x);
// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
// sum_j fi_j * (anchor_j - theta_j)^2; anchor and fi are constants.
Var weighted_sq_diff(Var theta, const Tensor& anchor, const Tensor& fi);

// Multi-head scaled dot-product attention core for a batch of sequences laid
// out as [batch * tokens x d_model]. Heads split d_model into equal slices.
Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads);
// Attention probabilities [batch * heads * tokens x tokens] (no tape).
Tensor attention_probs(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads);

// Builds the token matrix [batch * (patches + 1) x d]: the classification token
// first, then the projected patches, each sequence shifted by the positional
// embeddings pos [(patches + 1) x d].
Var assemble_tokens(Var patch_tokens, Var cls, Var pos, std::size_t batch);
// Rows offset, offset + stride, offset + 2 * stride, ...
Var select_rows(Var x, std::size_t stride, std::size_t offset);

}  // namespace linklearn::ops
