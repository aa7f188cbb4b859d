#include "setchoice/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "setchoice/common.hpp"

namespace setchoice::kern {

// Defined in kernels_avx2.cpp (compiled with -mavx2 -mfma). Builds without
// that translation unit report no AVX2 support, so the stub is never called.
#ifdef SETCHOICE_HAVE_AVX2
const Ops* detail_avx2_table();
#else
const Ops* detail_avx2_table() { return nullptr; }
#endif

namespace {

// ---- scalar reference implementations ----
// These define the semantics; the AVX2 variants must match them within
// a few ulps (tested in test_kernels).

void s_gemm_nt(double* c, const double* a, const double* b,
               size_t m, size_t n, size_t k, const double* bias) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] = bias ? acc + bias[j] : acc;
        }
    }
}

void s_gemm_nn_acc(double* c, const double* a, const double* b,
                   size_t m, size_t n, size_t k) {
    for (size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (size_t l = 0; l < k; ++l) {
            double ail = ai[l];
            const double* bl = b + l * n;
            for (size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

void s_gemm_tn_acc(double* c, const double* a, const double* b,
                   size_t m, size_t k1, size_t k2) {
    for (size_t r = 0; r < m; ++r) {
        const double* ar = a + r * k1;
        const double* br = b + r * k2;
        for (size_t i = 0; i < k1; ++i) {
            double ari = ar[i];
            double* ci = c + i * k2;
            for (size_t j = 0; j < k2; ++j) ci[j] += ari * br[j];
        }
    }
}

void s_col_sum_acc(double* out, const double* a, size_t m, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        for (size_t j = 0; j < n; ++j) out[j] += ai[j];
    }
}

double s_dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double* y, double alpha, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_relu(double* y, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_bwd(double* dx, const double* act, const double* dy, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] = act[i] > 0.0 ? dy[i] : 0.0;
}

void s_sigmoid(double* y, const double* x, size_t n) {
    // Clamps keep the output strictly inside (0,1): without them x > 37 or
    // x < -745 rounds to exactly 1 or 0 and downstream log/derivative terms
    // degenerate.
    constexpr double below_one = 0x1.fffffffffffffp-1;
    for (size_t i = 0; i < n; ++i) {
        double v = x[i] < -708.0 ? -708.0 : x[i];
        double s = 1.0 / (1.0 + std::exp(-v));
        y[i] = s < below_one ? s : below_one;
    }
}

void s_sigmoid_bwd(double* dz, const double* act, const double* dy, size_t n) {
    for (size_t i = 0; i < n; ++i) dz[i] = dy[i] * act[i] * (1.0 - act[i]);
}

void s_expv(double* y, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        double v = x[i];
        if (v < -708.0) v = -708.0;
        if (v > 709.0) v = 709.0;
        y[i] = std::exp(v);
    }
}

void s_adam(double* w, double* m, double* v, const double* g, size_t n,
            double lr, double b1, double b2, double eps, double bc1, double bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

constexpr Ops scalar_ops = {
    s_gemm_nt, s_gemm_nn_acc, s_gemm_tn_acc, s_col_sum_acc, s_dot, s_axpy,
    s_relu,    s_relu_bwd,    s_sigmoid,     s_sigmoid_bwd, s_expv, s_adam,
};

struct Dispatch {
    Isa isa;
    const Ops* table;
};

Dispatch initial_dispatch() {
    Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
    if (const char* env = std::getenv("SETCHOICE_ISA")) {
        if (std::strcmp(env, "scalar") == 0) {
            isa = Isa::scalar;
        } else if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2()) throw ConfigError("SETCHOICE_ISA=avx2 but CPU lacks AVX2");
            isa = Isa::avx2;
        } else {
            throw ConfigError(std::string("unknown SETCHOICE_ISA value: ") + env);
        }
    }
    return {isa, isa == Isa::avx2 ? detail_avx2_table() : &scalar_ops};
}

Dispatch& dispatch() {
    static Dispatch d = initial_dispatch();
    return d;
}

} // namespace

bool cpu_has_avx2() {
#if defined(SETCHOICE_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return dispatch().isa; }

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2())
        throw ConfigError("cannot force AVX2 kernels: CPU lacks AVX2/FMA");
    dispatch().isa = isa;
    dispatch().table = isa == Isa::avx2 ? detail_avx2_table() : &scalar_ops;
}

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const Ops& ops() { return *dispatch().table; }

} // namespace setchoice::kern
