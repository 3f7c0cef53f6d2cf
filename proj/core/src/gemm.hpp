#pragma once

#include <cstdint>

namespace grokkd::detail {

// C[m x n] = op(A) * op(B) with 64-bit accumulation, optionally adding into
// the existing contents of C. A and B are row-major f32 in their stored
// shapes: A is [m x k] ([k x m] when trans_a), B is [k x n] ([n x k] when
// trans_b). Uses thread-local scratch; safe for concurrent independent runs.
void gemm_acc64(const float* a, const float* b, float* c,
                std::int64_t m, std::int64_t k, std::int64_t n,
                bool trans_a, bool trans_b, bool accumulate);

}  // namespace grokkd::detail
