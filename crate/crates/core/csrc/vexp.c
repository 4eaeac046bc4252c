/* Vectorized exp(-x) over a slice, using glibc's libmvec kernels.
 * Selected at runtime from Rust based on CPU feature detection; the
 * scalar tail keeps results identical regardless of slice length. */
#include <immintrin.h>
#include <math.h>

__m256d _ZGVdN4v_exp(__m256d);
__m512d _ZGVeN8v_exp(__m512d);

__attribute__((target("avx2")))
void recon_vexp_neg_avx2(const double* x, double* out, long n) {
    long i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_sub_pd(_mm256_setzero_pd(), _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(out + i, _ZGVdN4v_exp(v));
    }
    for (; i < n; i++) out[i] = exp(-x[i]);
}

__attribute__((target("avx512f")))
void recon_vexp_neg_avx512(const double* x, double* out, long n) {
    long i = 0;
    for (; i + 8 <= n; i += 8) {
        __m512d v = _mm512_sub_pd(_mm512_setzero_pd(), _mm512_loadu_pd(x + i));
        _mm512_storeu_pd(out + i, _ZGVeN8v_exp(v));
    }
    for (; i < n; i++) out[i] = exp(-x[i]);
}
