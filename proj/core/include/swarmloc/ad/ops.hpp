#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "swarmloc/ad/tape.hpp"

namespace swarmloc::ad {

// Shape-checked differentiable primitives. Each throws ShapeError on
// non-conforming inputs.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

/// `a` (r x c) plus a 1 x c row broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// `a` (r x c) plus an r x 1 column broadcast over columns.
Var add_col(const Var& a, const Var& col);
/// Broadcasts a 1x1, 1 x c or r x 1 tensor to r x c.
Var broadcast(const Var& a, std::size_t rows, std::size_t cols);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice(const Var& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols);
Var transpose(const Var& a);
/// out.flat[k] = a.flat[index[k]], or 0 where index[k] < 0.
Var take(const Var& a, const std::vector<long>& index, std::size_t rows, std::size_t cols);

Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Elementwise clamp; gradient is zero where the bound is active.
Var clamp(const Var& a, double lo, double hi);

Var softmax_rows(const Var& a);
/// r x c -> r x 1.
Var logsumexp_rows(const Var& a);
/// r x c -> 1 x c.
Var logsumexp_cols(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// r x c -> 1 x c.
Var sum_over_rows(const Var& a);
/// r x c -> r x 1.
Var sum_over_cols(const Var& a);
/// Frobenius norm; gradient is zero at the origin.
Var l2norm(const Var& a);

/// Key index range [first, second) visible to one query row.
using KeyRange = std::pair<std::size_t, std::size_t>;

/// Softmax attention where query row i attends only to keys in ranges[i]:
/// out_i = sum_j softmax_j(scale * q_i . k_j) v_j. Empty ranges give zeros.
Var range_attention(const Var& q, const Var& k, const Var& v, const std::vector<KeyRange>& ranges,
                    double scale);

/// Escape hatch for fused computations with a hand-written vector-Jacobian
/// product. `vjp(grad_out, grads_in)` receives one accumulator per input.
using CustomVjp = std::function<void(const Tensor& grad_out, std::vector<Tensor*>& grads_in)>;
Var custom(const std::vector<Var>& inputs, Tensor value, CustomVjp vjp);

}  // namespace swarmloc::ad
