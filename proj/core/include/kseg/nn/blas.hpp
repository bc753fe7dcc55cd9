#pragma once

namespace kseg::nn {

/// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C with op(A) m x k,
/// op(B) k x n. Leading dimensions are the row strides of the stored
/// (untransposed) matrices.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

} // namespace kseg::nn
