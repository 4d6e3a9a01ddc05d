#pragma once

#include <vector>

#include "cobra/tensor.hpp"

namespace cobra::ops {

// Differentiable primitives. Gradients flow to inputs with
// requires_grad set (directly or transitively); constant inputs are skipped.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // hadamard
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // row is 1xN, broadcast
Tensor mul_rowvec(const Tensor& a, const Tensor& row);

// scale * a + shift, elementwise with scalar constants.
Tensor affine(const Tensor& a, float scale, float shift);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);   // caller guarantees positivity (clamp first)
Tensor sqrt(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);  // zero grad outside range

// Row-wise softmax of a / temperature, max-subtracted. temperature > 0.
Tensor softmax_rows(const Tensor& a, float temperature);
Tensor log_softmax_rows(const Tensor& a);

// Per-row normalization to mean 0, variance 1 (no learned affine).
Tensor layer_norm_rows(const Tensor& a, float eps = 1e-6f);

Tensor mean_pool_rows(const Tensor& a);   // RxC -> 1xC
Tensor sum_all(const Tensor& a);          // -> 1x1
Tensor mean_all(const Tensor& a);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int start, int len);

// Selects rows by index; backward scatters grads to selected rows only.
// Indices are data, not differentiable. Out-of-range index -> IndexError.
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

Tensor reshape(const Tensor& a, std::vector<int> shape);

// a / s where s is a 1x1 tensor; both sides receive gradients.
Tensor div_scalar(const Tensor& a, const Tensor& s);

// Flattened L2 normalization: a / ||a||_F, as one 1xN row.
Tensor l2_normalize_flat(const Tensor& a);

}  // namespace cobra::ops
