#pragma once

namespace timecast {

// Row-major sgemm: C = alpha * op(A) * op(B) + beta * C.
// The underlying BLAS is pinned to a single thread; parallelism lives at the
// op level (per-sample tasks with disjoint outputs) so results do not depend
// on thread count.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc);

}  // namespace timecast
