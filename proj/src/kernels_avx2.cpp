#include "setchoice/kernels.hpp"

// AVX2/FMA variants of the kernel table. This translation unit is compiled
// with -mavx2 -mfma; nothing here may run unless cpu_has_avx2() said yes.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace setchoice::kern {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

double v_dot(const double* a, const double* b, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void v_gemm_nt(double* c, const double* a, const double* b,
               size_t m, size_t n, size_t k, const double* bias) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            size_t t = 0;
            for (; t + 4 <= k; t += 4) {
                __m256d av = _mm256_loadu_pd(ai + t);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + t), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + t), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + t), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + t), s3);
            }
            double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
            for (; t < k; ++t) {
                double av = ai[t];
                r0 += av * b0[t];
                r1 += av * b1[t];
                r2 += av * b2[t];
                r3 += av * b3[t];
            }
            if (bias) {
                r0 += bias[j + 0];
                r1 += bias[j + 1];
                r2 += bias[j + 2];
                r3 += bias[j + 3];
            }
            ci[j + 0] = r0;
            ci[j + 1] = r1;
            ci[j + 2] = r2;
            ci[j + 3] = r3;
        }
        for (; j < n; ++j) {
            double r = v_dot(ai, b + j * k, k);
            ci[j] = bias ? r + bias[j] : r;
        }
    }
}

void v_gemm_nn_acc(double* c, const double* a, const double* b,
                   size_t m, size_t n, size_t k) {
    for (size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        size_t l = 0;
        for (; l + 4 <= k; l += 4) {
            __m256d a0 = _mm256_set1_pd(ai[l + 0]);
            __m256d a1 = _mm256_set1_pd(ai[l + 1]);
            __m256d a2 = _mm256_set1_pd(ai[l + 2]);
            __m256d a3 = _mm256_set1_pd(ai[l + 3]);
            const double* b0 = b + (l + 0) * n;
            const double* b1 = b + (l + 1) * n;
            const double* b2 = b + (l + 2) * n;
            const double* b3 = b + (l + 3) * n;
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(ci + j);
                cv = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), cv);
                cv = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), cv);
                cv = _mm256_fmadd_pd(a2, _mm256_loadu_pd(b2 + j), cv);
                cv = _mm256_fmadd_pd(a3, _mm256_loadu_pd(b3 + j), cv);
                _mm256_storeu_pd(ci + j, cv);
            }
            for (; j < n; ++j)
                ci[j] += ai[l] * b0[j] + ai[l + 1] * b1[j] + ai[l + 2] * b2[j] + ai[l + 3] * b3[j];
        }
        for (; l < k; ++l) {
            __m256d al = _mm256_set1_pd(ai[l]);
            const double* bl = b + l * n;
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(ci + j);
                cv = _mm256_fmadd_pd(al, _mm256_loadu_pd(bl + j), cv);
                _mm256_storeu_pd(ci + j, cv);
            }
            for (; j < n; ++j) ci[j] += ai[l] * bl[j];
        }
    }
}

void v_gemm_tn_acc(double* c, const double* a, const double* b,
                   size_t m, size_t k1, size_t k2) {
    for (size_t r = 0; r < m; ++r) {
        const double* ar = a + r * k1;
        const double* br = b + r * k2;
        size_t i = 0;
        for (; i + 4 <= k1; i += 4) {
            __m256d a0 = _mm256_set1_pd(ar[i + 0]);
            __m256d a1 = _mm256_set1_pd(ar[i + 1]);
            __m256d a2 = _mm256_set1_pd(ar[i + 2]);
            __m256d a3 = _mm256_set1_pd(ar[i + 3]);
            double* c0 = c + (i + 0) * k2;
            double* c1 = c + (i + 1) * k2;
            double* c2 = c + (i + 2) * k2;
            double* c3 = c + (i + 3) * k2;
            size_t j = 0;
            for (; j + 4 <= k2; j += 4) {
                __m256d bv = _mm256_loadu_pd(br + j);
                _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(a0, bv, _mm256_loadu_pd(c0 + j)));
                _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(a1, bv, _mm256_loadu_pd(c1 + j)));
                _mm256_storeu_pd(c2 + j, _mm256_fmadd_pd(a2, bv, _mm256_loadu_pd(c2 + j)));
                _mm256_storeu_pd(c3 + j, _mm256_fmadd_pd(a3, bv, _mm256_loadu_pd(c3 + j)));
            }
            for (; j < k2; ++j) {
                double bv = br[j];
                c0[j] += ar[i + 0] * bv;
                c1[j] += ar[i + 1] * bv;
                c2[j] += ar[i + 2] * bv;
                c3[j] += ar[i + 3] * bv;
            }
        }
        for (; i < k1; ++i) {
            __m256d av = _mm256_set1_pd(ar[i]);
            double* ci = c + i * k2;
            size_t j = 0;
            for (; j + 4 <= k2; j += 4) {
                __m256d cv = _mm256_loadu_pd(ci + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(br + j), cv);
                _mm256_storeu_pd(ci + j, cv);
            }
            for (; j < k2; ++j) ci[j] += ar[i] * br[j];
        }
    }
}

void v_col_sum_acc(double* out, const double* a, size_t m, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d ov = _mm256_add_pd(_mm256_loadu_pd(out + j), _mm256_loadu_pd(ai + j));
            _mm256_storeu_pd(out + j, ov);
        }
        for (; j < n; ++j) out[j] += ai[j];
    }
}

void v_axpy(double* y, double alpha, const double* x, size_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_relu(double* y, const double* x, size_t n) {
    __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_bwd(double* dx, const double* act, const double* dy, size_t n) {
    __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(act + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
    }
    for (; i < n; ++i) dx[i] = act[i] > 0.0 ? dy[i] : 0.0;
}

// exp via Cody-Waite range reduction and a degree-13 Taylor polynomial on
// r in [-ln2/2, ln2/2]; the clamp keeps 2^k inside the normal exponent range
// so the bit-shift scaling below never produces inf or subnormals.
inline __m256d exp_core(__m256d x) {
    x = _mm256_max_pd(_mm256_set1_pd(-708.0), _mm256_min_pd(_mm256_set1_pd(709.0), x));
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
    __m256d kf = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                 _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(kf, _mm256_set1_pd(6.93147180369123816490e-01), x);
    r = _mm256_fnmadd_pd(kf, _mm256_set1_pd(1.90821492927058770002e-10), r);

    __m256d p = _mm256_set1_pd(1.6059043836821614599e-10); // 1/13!
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.0876756987868098979e-09));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.5052108385441718775e-08));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985890653e-07));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985892510e-06));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.4801587301587301566e-05));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.9841269841269841253e-04));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889419e-03));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.3333333333333332177e-03));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664354e-02));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666665741e-01));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(5.0e-01));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

    __m128i k32 = _mm256_cvtpd_epi32(kf);
    __m256i k64 = _mm256_cvtepi32_epi64(k32);
    __m256i expo = _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(expo));
}

void v_expv(double* y, const double* x, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp_core(_mm256_loadu_pd(x + i)));
    if (i < n) {
        double tmp_in[4] = {0, 0, 0, 0};
        double tmp_out[4];
        for (size_t t = i; t < n; ++t) tmp_in[t - i] = x[t];
        _mm256_storeu_pd(tmp_out, exp_core(_mm256_loadu_pd(tmp_in)));
        for (size_t t = i; t < n; ++t) y[t] = tmp_out[t - i];
    }
}

void v_sigmoid(double* y, const double* x, size_t n) {
    // Same (0,1) clamp semantics as the scalar reference.
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d below_one = _mm256_set1_pd(0x1.fffffffffffffp-1);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d e = exp_core(_mm256_sub_pd(_mm256_setzero_pd(), _mm256_loadu_pd(x + i)));
        __m256d s = _mm256_div_pd(one, _mm256_add_pd(one, e));
        _mm256_storeu_pd(y + i, _mm256_min_pd(s, below_one));
    }
    for (; i < n; ++i) {
        double v = x[i] < -708.0 ? -708.0 : x[i];
        double s = 1.0 / (1.0 + std::exp(-v));
        y[i] = s < 0x1.fffffffffffffp-1 ? s : 0x1.fffffffffffffp-1;
    }
}

void v_sigmoid_bwd(double* dz, const double* act, const double* dy, size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d a = _mm256_loadu_pd(act + i);
        __m256d g = _mm256_mul_pd(_mm256_loadu_pd(dy + i),
                                  _mm256_mul_pd(a, _mm256_sub_pd(one, a)));
        _mm256_storeu_pd(dz + i, g);
    }
    for (; i < n; ++i) dz[i] = dy[i] * act[i] * (1.0 - act[i]);
}

void v_adam(double* w, double* m, double* v, const double* g, size_t n,
            double lr, double b1, double b2, double eps, double bc1, double bc2) {
    const __m256d b1v = _mm256_set1_pd(b1);
    const __m256d b2v = _mm256_set1_pd(b2);
    const __m256d ob1 = _mm256_set1_pd(1.0 - b1);
    const __m256d ob2 = _mm256_set1_pd(1.0 - b2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    const __m256d ibc1 = _mm256_set1_pd(1.0 / bc1);
    const __m256d ibc2 = _mm256_set1_pd(1.0 / bc2);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_fmadd_pd(b1v, _mm256_loadu_pd(m + i), _mm256_mul_pd(ob1, gv));
        __m256d vv = _mm256_fmadd_pd(b2v, _mm256_loadu_pd(v + i),
                                     _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d mhat = _mm256_mul_pd(mv, ibc1);
        __m256d vhat = _mm256_mul_pd(vv, ibc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
        __m256d wv = _mm256_loadu_pd(w + i);
        wv = _mm256_sub_pd(wv, _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom));
        _mm256_storeu_pd(w + i, wv);
    }
    for (; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

constexpr Ops avx2_ops = {
    v_gemm_nt, v_gemm_nn_acc, v_gemm_tn_acc, v_col_sum_acc, v_dot, v_axpy,
    v_relu,    v_relu_bwd,    v_sigmoid,     v_sigmoid_bwd, v_expv, v_adam,
};

} // namespace

const Ops* detail_avx2_table() { return &avx2_ops; }

} // namespace setchoice::kern

#else

namespace setchoice::kern {
// Built without AVX2 support; dispatch never selects this table because
// cpu_has_avx2() is false on such targets.
const Ops* detail_avx2_table() { return nullptr; }
} // namespace setchoice::kern

#endif
