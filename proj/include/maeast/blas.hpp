#pragma once

#include "maeast/common.hpp"

namespace maeast::nn {

enum class Trans { No, Yes };

/// C = alpha * op(A) * op(B) + beta * C, row-major, with explicit leading
/// dimensions so strided sub-blocks (attention heads) need no copies.
template <typename T>
void gemm(Trans ta, Trans tb, Index m, Index n, Index k, T alpha, const T* a, Index lda,
          const T* b, Index ldb, T beta, T* c, Index ldc);

/// Pins the BLAS worker count. Results are bitwise reproducible for a fixed
/// count; the count in effect is recorded by the benchmark.
void set_thread_count(int threads);
int thread_count();

}  // namespace maeast::nn
