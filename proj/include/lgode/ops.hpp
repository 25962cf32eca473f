#pragma once

// Differentiable primitives. Binary elementwise ops accept equal shapes or a
// 1 x c operand expanded along the leading axis; anything else is a ShapeError.

#include <memory>
#include <span>
#include <vector>

#include "lgode/autodiff.hpp"
#include "lgode/kernels.hpp"

namespace lgode::ad {

enum class Axis { rows, cols };

/// Shared, immutable row-index list used by gather/segment ops.
using Index = std::shared_ptr<const std::vector<std::uint32_t>>;
Index make_index(std::vector<std::uint32_t> idx);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var broadcast_rows(Var a, std::size_t rows);

/// Sum of all entries, 1x1.
Var sum(Var a);
/// Reduce over `axis`: Axis::rows gives 1 x c, Axis::cols gives r x 1.
Var sum(Var a, Axis axis);
Var mean(Var a);
Var mean(Var a, Axis axis);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var square(Var a);
/// Max-subtracted softmax; Axis::cols normalizes each row, Axis::rows each column.
Var softmax(Var a, Axis axis);

/// out[k] = a[idx[k]].
Var gather_rows(Var a, const Index& idx);
/// out[s] = sum of a[k] with seg[k] == s, for s < n_segments.
Var segment_sum(Var a, const Index& seg, std::size_t n_segments);
/// Softmax of an E x 1 score column within each segment.
Var segment_softmax(Var scores, const Index& seg, std::size_t n_segments);
/// Row-wise inner product of two E x c matrices, E x 1.
Var row_dot(Var a, Var b);
/// Each row of a (E x c) multiplied by the matching entry of s (E x 1).
Var scale_rows(Var a, Var s);

/// out_i = sum over (i, j) in pairs of relu(p_i + q_j). Fused so the per-pair
/// activations never materialize.
Var pair_relu_sum(Var p, Var q, std::shared_ptr<const kernels::PairList> pairs);

}  // namespace lgode::ad
