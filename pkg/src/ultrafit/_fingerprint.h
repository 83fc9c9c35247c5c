/* Bucket fingerprints of quantised projections.
 *
 * out[i] = sum_j floor((proj[i, j] + ow[j]) * inv) * mult[j]  (mod 2^64)
 *
 * uf_hash_points computes proj on the fly as the sequential dot product
 * coords[i, 0] * dirs[j, 0] + coords[i, 1] * dirs[j, 1] + ... (no FMA), which
 * is exactly what lsh.project does in numpy.
 *
 * The integer results are exact, so every variant returns the same bits.  On
 * x86-64 GCC/clang builds an AVX-512 variant (packed double -> int64
 * conversion and 64-bit multiplies) is used when the CPU supports it.
 */
#ifndef ULTRAFIT_FINGERPRINT_H
#define ULTRAFIT_FINGERPRINT_H

#include <stdint.h>
#include <stddef.h>

#define UF_FINGERPRINT_BODY                                                   \
    for (ptrdiff_t i = 0; i < n; i++) {                                       \
        const double *row = proj + i * k;                                     \
        uint64_t h = 0;                                                       \
        for (ptrdiff_t j = 0; j < k; j++) {                                   \
            double t = (row[j] + ow[j]) * inv;                                \
            int64_t q = (int64_t)t;                                           \
            q -= (double)q > t;                                               \
            h += (uint64_t)q * mult[j];                                       \
        }                                                                     \
        out[i] = h;                                                           \
    }

static void uf_fingerprints_generic(const double *restrict proj, ptrdiff_t n, ptrdiff_t k,
                                    const double *restrict ow, double inv,
                                    const uint64_t *restrict mult, uint64_t *restrict out)
{
    UF_FINGERPRINT_BODY
}

#if (defined(__GNUC__) || defined(__clang__)) && defined(__x86_64__)
#define UF_HAVE_WIDE 1
__attribute__((target("avx2,avx512f,avx512dq,avx512vl")))
static void uf_fingerprints_wide(const double *restrict proj, ptrdiff_t n, ptrdiff_t k,
                                 const double *restrict ow, double inv,
                                 const uint64_t *restrict mult, uint64_t *restrict out)
{
    UF_FINGERPRINT_BODY
}
#endif

/* Directions are processed in fixed groups of 8 so the compiler keeps the
 * partial sums in vector registers; the tail group runs the same code. */
#define UF_HASH_BODY                                                          \
    for (ptrdiff_t i = 0; i < n; i++) {                                       \
        const double *c = coords + i * d;                                     \
        uint64_t h = 0;                                                       \
        for (ptrdiff_t j0 = 0; j0 < k; j0 += 8) {                             \
            double v[8];                                                      \
            const double *a0 = dirs_t + j0;                                   \
            if (k - j0 >= 8) {                                                \
                for (int jj = 0; jj < 8; jj++)                                \
                    v[jj] = c[0] * a0[jj];                                    \
                for (ptrdiff_t t = 1; t < d; t++) {                           \
                    const double ct = c[t];                                   \
                    const double *a = a0 + t * k;                             \
                    for (int jj = 0; jj < 8; jj++)                            \
                        v[jj] += ct * a[jj];                                  \
                }                                                             \
                for (int jj = 0; jj < 8; jj++) {                              \
                    double x = (v[jj] + ow[j0 + jj]) * inv;                   \
                    int64_t q = (int64_t)x;                                   \
                    q -= (double)q > x;                                       \
                    h += (uint64_t)q * mult[j0 + jj];                         \
                }                                                             \
            } else {                                                          \
                int w = (int)(k - j0);                                        \
                for (int jj = 0; jj < w; jj++)                                \
                    v[jj] = c[0] * a0[jj];                                    \
                for (ptrdiff_t t = 1; t < d; t++) {                           \
                    const double ct = c[t];                                   \
                    const double *a = a0 + t * k;                             \
                    for (int jj = 0; jj < w; jj++)                            \
                        v[jj] += ct * a[jj];                                  \
                }                                                             \
                for (int jj = 0; jj < w; jj++) {                              \
                    double x = (v[jj] + ow[j0 + jj]) * inv;                   \
                    int64_t q = (int64_t)x;                                   \
                    q -= (double)q > x;                                       \
                    h += (uint64_t)q * mult[j0 + jj];                         \
                }                                                             \
            }                                                                 \
        }                                                                     \
        out[i] = h;                                                           \
    }

/* dirs_t is the (d, k) transpose of the directions; acc is unused scratch. */
static void uf_hash_points_generic(const double *restrict coords, ptrdiff_t n, ptrdiff_t d,
                                   const double *restrict dirs_t, ptrdiff_t k,
                                   const double *restrict ow, double inv,
                                   const uint64_t *restrict mult, double *restrict acc,
                                   uint64_t *restrict out)
{
    UF_HASH_BODY
}

#ifdef UF_HAVE_WIDE
#include <immintrin.h>

/* Same arithmetic as UF_HASH_BODY, eight directions per vector: separate
 * multiply and add (no FMA), truncating conversion, then a -1 fix-up. */
__attribute__((target("avx2,avx512f,avx512dq,avx512vl")))
static void uf_hash_points_wide(const double *restrict coords, ptrdiff_t n, ptrdiff_t d,
                                const double *restrict dirs_t, ptrdiff_t k,
                                const double *restrict ow, double inv,
                                const uint64_t *restrict mult, double *restrict acc,
                                uint64_t *restrict out)
{
    (void)acc;
    const __m512d vinv = _mm512_set1_pd(inv);
    const __m512i one = _mm512_set1_epi64(1);
    for (ptrdiff_t i = 0; i < n; i++) {
        const double *c = coords + i * d;
        __m512i hv = _mm512_setzero_si512();
        for (ptrdiff_t j0 = 0; j0 < k; j0 += 8) {
            ptrdiff_t w = k - j0;
            __mmask8 m = w >= 8 ? (__mmask8)0xFF : (__mmask8)((1u << w) - 1u);
            const double *a0 = dirs_t + j0;
            __m512d v = _mm512_mul_pd(_mm512_set1_pd(c[0]), _mm512_maskz_loadu_pd(m, a0));
            for (ptrdiff_t t = 1; t < d; t++)
                v = _mm512_add_pd(v, _mm512_mul_pd(_mm512_set1_pd(c[t]),
                                                   _mm512_maskz_loadu_pd(m, a0 + t * k)));
            __m512d x = _mm512_mul_pd(_mm512_add_pd(v, _mm512_maskz_loadu_pd(m, ow + j0)), vinv);
            __m512i q = _mm512_cvttpd_epi64(x);
            __mmask8 over = _mm512_cmp_pd_mask(_mm512_cvtepi64_pd(q), x, _CMP_GT_OQ);
            q = _mm512_mask_sub_epi64(q, over, q, one);
            __m512i mv = _mm512_maskz_loadu_epi64(m, mult + j0);
            hv = _mm512_add_epi64(hv, _mm512_mullo_epi64(q, mv));
        }
        out[i] = (uint64_t)_mm512_reduce_add_epi64(hv);
    }
}
#endif

static int uf_use_wide(void)
{
#ifdef UF_HAVE_WIDE
    static int wide = -1;
    if (wide < 0) {
        __builtin_cpu_init();
        wide = __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq")
               && __builtin_cpu_supports("avx512vl");
    }
    return wide;
#else
    return 0;
#endif
}

static void uf_fingerprints(const double *proj, ptrdiff_t n, ptrdiff_t k, const double *ow,
                            double inv, const uint64_t *mult, uint64_t *out)
{
#ifdef UF_HAVE_WIDE
    if (uf_use_wide()) {
        uf_fingerprints_wide(proj, n, k, ow, inv, mult, out);
        return;
    }
#endif
    uf_fingerprints_generic(proj, n, k, ow, inv, mult, out);
}

static void uf_hash_points(const double *coords, ptrdiff_t n, ptrdiff_t d, const double *dirs_t,
                           ptrdiff_t k, const double *ow, double inv, const uint64_t *mult,
                           double *acc, uint64_t *out)
{
#ifdef UF_HAVE_WIDE
    if (uf_use_wide()) {
        uf_hash_points_wide(coords, n, d, dirs_t, k, ow, inv, mult, acc, out);
        return;
    }
#endif
    uf_hash_points_generic(coords, n, d, dirs_t, k, ow, inv, mult, acc, out);
}

#endif
