#pragma once

// Dense products for the convolution kernels.
//
// Every output element is formed as c = c0 + sum_k a(i,k) * b(k,j) with the
// terms added one at a time in increasing k (fused when the target has FMA),
// whatever the matrix sizes or buffer alignment. Results therefore depend
// only on the operand values.

#include <cstddef>

namespace msihist::nn::detail {

/// C[M x N] (+)= A * B.
/// A element (i, k) is read at a[i * a_row + k * a_col] (covers A and A^T);
/// B and C are dense row-major with N columns.
void gemm(int M, int N, int K, const double *a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double *b,
          double *c, bool accumulate);

// out[N x M] = in[M x N]^T, both dense row-major.
void transpose(int M, int N, const double *in, double *out);

} // namespace msihist::nn::detail
