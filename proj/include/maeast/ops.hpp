#pragma once

#include <span>

#include "maeast/autodiff.hpp"

namespace maeast::nn {

/// y = x W + b for x [R x in], W [in x out], b [out] (b may be undefined).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Elementwise a + b, shapes equal.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

/// Row-wise layer normalization with affine gamma/beta of shape [d].
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6));

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

/// Multi-head scaled dot-product self-attention applied independently to
/// every segment. `qkv` is [R x 3d] holding Q | K | V column blocks; head h
/// owns columns [h*d/heads, (h+1)*d/heads) of each block. Returns the
/// concatenated per-head outputs, [R x d].
template <typename T>
Var<T> attention(const Var<T>& qkv, const Segments& segments, Index heads);

/// Selects rows of x in the given order.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const Index> rows);

/// Builds a matrix whose row r is visible[source[r]] when source[r] >= 0 and
/// the shared vector `fill` ([d]) otherwise.
template <typename T>
Var<T> assemble_rows(const Var<T>& visible, const Var<T>& fill, std::span<const Index> source);

/// Mean of each segment's rows: [R x d] -> [segments x d].
template <typename T>
Var<T> segment_mean(const Var<T>& x, const Segments& segments);

/// Mean softmax cross-entropy of logits [B x classes] against labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const Index> labels);

/// In-place row softmax of a [rows x cols] block with leading dimension ld.
template <typename T>
void softmax_rows(T* data, Index rows, Index cols, Index ld);

}  // namespace maeast::nn
