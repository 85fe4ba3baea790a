#include "gemm.hpp"

#include <cmath>
#include <cstring>

#if defined(__AVX512F__) && defined(__FMA__)
#include <immintrin.h>
#define MSIHIST_GEMM_FMA 1
#endif

namespace msihist::nn::detail {

namespace {

constexpr int MR = 4;
constexpr int NR = 16;

#ifdef MSIHIST_GEMM_FMA
// Fused multiply-add everywhere, including the scalar edges, so that tile
// shape never changes the rounding of an element.
using v8 = __m512d;
inline v8 load(const double *p) { return _mm512_loadu_pd(p); }
inline void store(double *p, v8 v) { _mm512_storeu_pd(p, v); }
inline v8 madd(double a, v8 b, v8 c) { return _mm512_fmadd_pd(_mm512_set1_pd(a), b, c); }
inline v8 vadd(v8 a, v8 b) { return _mm512_add_pd(a, b); }
inline v8 vzero() { return _mm512_setzero_pd(); }
inline double madd(double a, double b, double c) { return std::fma(a, b, c); }
#else
typedef double v8 __attribute__((vector_size(64), aligned(8)));
inline v8 load(const double *p) { return *reinterpret_cast<const v8 *>(p); }
inline void store(double *p, v8 v) { *reinterpret_cast<v8 *>(p) = v; }
inline v8 madd(double a, v8 b, v8 c) { return c + a * b; }
inline v8 vadd(v8 a, v8 b) { return a + b; }
inline v8 vzero() { return v8{}; }
inline double madd(double a, double b, double c) { return c + a * b; }
#endif

// Full MR x NR tile held in registers across the whole k loop.
void tile_4x16(int K, const double *a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double *b, int N,
               double *c, bool accumulate) {
    v8 acc[MR][2];
    for (int r = 0; r < MR; ++r) acc[r][0] = acc[r][1] = vzero();
    for (int k = 0; k < K; ++k) {
        const double *bk = b + static_cast<std::ptrdiff_t>(k) * N;
        const v8 b0 = load(bk), b1 = load(bk + 8);
        for (int r = 0; r < MR; ++r) {
            const double av = a[r * a_row + k * a_col];
            acc[r][0] = madd(av, b0, acc[r][0]);
            acc[r][1] = madd(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        double *cr = c + static_cast<std::ptrdiff_t>(r) * N;
        if (accumulate) {
            store(cr, vadd(load(cr), acc[r][0]));
            store(cr + 8, vadd(load(cr + 8), acc[r][1]));
        } else {
            store(cr, acc[r][0]);
            store(cr + 8, acc[r][1]);
        }
    }
}

// One row, eight columns.
void tile_1x8(int K, const double *a, std::ptrdiff_t a_col, const double *b, int N, double *c, bool accumulate) {
    v8 acc = vzero();
    for (int k = 0; k < K; ++k) acc = madd(a[k * a_col], load(b + static_cast<std::ptrdiff_t>(k) * N), acc);
    store(c, accumulate ? vadd(load(c), acc) : acc);
}

// Scalar fallback for ragged edges; same operation order as the tiles.
void tile_scalar(int rows, int cols, int K, const double *a, std::ptrdiff_t a_row, std::ptrdiff_t a_col,
                 const double *b, int N, double *c, bool accumulate) {
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc = madd(a[r * a_row + k * a_col], b[static_cast<std::ptrdiff_t>(k) * N + j], acc);
            double &dst = c[static_cast<std::ptrdiff_t>(r) * N + j];
            dst = accumulate ? dst + acc : acc;
        }
}

} // namespace

void gemm(int M, int N, int K, const double *a, std::ptrdiff_t a_row, std::ptrdiff_t a_col, const double *b,
          double *c, bool accumulate) {
    if (M <= 0 || N <= 0) return;
    if (K <= 0) {
        if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(M) * N);
        return;
    }
    const int n16 = N - N % NR;
    const int m4 = M - M % MR;
    for (int i = 0; i < M; i += (i < m4 ? MR : 1)) {
        const double *ai = a + i * a_row;
        double *ci = c + static_cast<std::ptrdiff_t>(i) * N;
        int j = 0;
        if (i < m4) {
            for (; j < n16; j += NR) tile_4x16(K, ai, a_row, a_col, b + j, N, ci + j, accumulate);
            for (; j + 8 <= N; j += 8)
                for (int r = 0; r < MR; ++r)
                    tile_1x8(K, ai + r * a_row, a_col, b + j, N, ci + static_cast<std::ptrdiff_t>(r) * N + j,
                             accumulate);
            if (j < N) tile_scalar(MR, N - j, K, ai, a_row, a_col, b + j, N, ci + j, accumulate);
        } else {
            for (; j + 8 <= N; j += 8) tile_1x8(K, ai, a_col, b + j, N, ci + j, accumulate);
            if (j < N) tile_scalar(1, N - j, K, ai, a_row, a_col, b + j, N, ci + j, accumulate);
        }
    }
}

void transpose(int M, int N, const double *in, double *out) {
    constexpr int B = 32;
    for (int i0 = 0; i0 < M; i0 += B)
        for (int j0 = 0; j0 < N; j0 += B)
            for (int i = i0; i < i0 + B && i < M; ++i)
                for (int j = j0; j < j0 + B && j < N; ++j)
                    out[static_cast<std::ptrdiff_t>(j) * M + i] = in[static_cast<std::ptrdiff_t>(i) * N + j];
}

} // namespace msihist::nn::detail
