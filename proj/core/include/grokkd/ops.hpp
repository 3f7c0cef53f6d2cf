#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "grokkd/tape.hpp"
#include "grokkd/tensor.hpp"

namespace grokkd::ops {

// All operations record their backward rule on `tape` when it is non-null and
// at least one input is gradient-tracked. Passing tape = nullptr evaluates in
// inference mode. Elementwise binary ops accept equal shapes or a scalar on
// either side; no other broadcasting exists.

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);
Tensor scale(const Tensor& a, double factor, Tape* tape);
Tensor neg(const Tensor& a, Tape* tape);
Tensor exp(const Tensor& a, Tape* tape);
Tensor log1p(const Tensor& a, Tape* tape);  // domain: a > -1
// g(x) = log(1+x) for x >= 0, -log(1-x) for x < 0. Odd, monotone, g(0) = 0.
Tensor signed_log1p(const Tensor& a, Tape* tape);
Tensor relu(const Tensor& a, Tape* tape);

// Softmax over the last axis with max-subtraction; temperature > 0.
Tensor row_softmax(const Tensor& logits, double temperature, Tape* tape);
// log(softmax(x / t)); finite for any finite input.
Tensor row_log_softmax(const Tensor& logits, double temperature, Tape* tape);
// scores [N,T,T]: row i is a softmax over columns 0..i, zero above the
// diagonal. Masked weights are never computed, so causality is exact.
Tensor causal_row_softmax(const Tensor& scores, Tape* tape);

Tensor sum(const Tensor& a, Tape* tape);   // -> scalar, f64 accumulation
Tensor mean(const Tensor& a, Tape* tape);  // -> scalar

// y[b] = x[b, index[b]]
Tensor select_index(const Tensor& x, std::span<const std::int32_t> index, Tape* tape);
// y[b,:] = x[b, position, :] for x of shape [B,T,K]
Tensor select_position(const Tensor& x, std::int64_t position, Tape* tape);
// y[g,:] = x[rows[g], :]
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows, Tape* tape);
// table [V,D], ids [R] -> [R,D]; backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids, Tape* tape);

// [B,T,H*dh] -> [B*H,T,dh] and back; pure index permutations.
Tensor split_heads(const Tensor& x, std::int64_t n_heads, Tape* tape);
Tensor merge_heads(const Tensor& x, std::int64_t n_heads, Tape* tape);

// Batched products over tiny matrices (attention): a [N,R,S] x b [N,S,C].
Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape);
// a [N,R,C] x b [N,S,C]^T -> [N,R,S]
Tensor bmm_nt(const Tensor& a, const Tensor& b, Tape* tape);

// x [R,D], gain [D], bias [D]; normalizes each row.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tape* tape);

// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-8)
// where central is the (f(x+eps) - f(x-eps)) / 2eps finite difference. `f`
// must build a fresh graph on the given tape each call. Unreliable when f is
// non-differentiable at the point; it will simply report a large value.
double finite_difference_check(const std::function<Tensor(const Tensor&, Tape*)>& f,
                               const Tensor& point, double eps);

}  // namespace grokkd::ops
