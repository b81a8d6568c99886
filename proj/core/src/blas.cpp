#include "timecast/blas.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace timecast {

namespace {
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
}  // namespace

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc) {
  static BlasInit init;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace timecast
