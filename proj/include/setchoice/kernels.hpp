#pragma once

#include <cstddef>

// Hot numeric loops live behind this dispatch table: a scalar reference
// implementation and an AVX2/FMA variant selected once at startup from CPUID
// (override with SETCHOICE_ISA=scalar|avx2 or force_isa()). Tests assert the
// variants agree; everything above this layer is ISA-agnostic.
namespace setchoice::kern {

enum class Isa { scalar, avx2 };

struct Ops {
    // c(m x n) = a(m x k) * b(n x k)^T, plus optional per-column bias.
    // b holds n rows of length k, so each output is a dot of two rows.
    void (*gemm_nt)(double* c, const double* a, const double* b,
                    size_t m, size_t n, size_t k, const double* bias);
    // c(m x n) += a(m x k) * b(k x n)
    void (*gemm_nn_acc)(double* c, const double* a, const double* b,
                        size_t m, size_t n, size_t k);
    // c(k1 x k2) += a(m x k1)^T * b(m x k2)
    void (*gemm_tn_acc)(double* c, const double* a, const double* b,
                        size_t m, size_t k1, size_t k2);
    // out(n) += column sums of a(m x n)
    void (*col_sum_acc)(double* out, const double* a, size_t m, size_t n);
    double (*dot)(const double* a, const double* b, size_t n);
    void (*axpy)(double* y, double alpha, const double* x, size_t n);
    void (*relu)(double* y, const double* x, size_t n);
    // dx = dy where act > 0, else 0 (subgradient 0 at the kink); dx may alias dy
    void (*relu_bwd)(double* dx, const double* act, const double* dy, size_t n);
    void (*sigmoid)(double* y, const double* x, size_t n);
    // dz = dy * act * (1 - act); dz may alias dy
    void (*sigmoid_bwd)(double* dz, const double* act, const double* dy, size_t n);
    // y = exp(x), inputs clamped to [-708, 709] so results stay normal/finite
    void (*expv)(double* y, const double* x, size_t n);
    // One Adam update; bc1/bc2 are the precomputed 1-beta^t corrections.
    void (*adam)(double* w, double* m, double* v, const double* g, size_t n,
                 double lr, double b1, double b2, double eps, double bc1, double bc2);
};

bool cpu_has_avx2();
Isa active_isa();
void force_isa(Isa isa);
const char* isa_name(Isa isa);

const Ops& ops();

inline void gemm_nt(double* c, const double* a, const double* b,
                    size_t m, size_t n, size_t k, const double* bias = nullptr) {
    ops().gemm_nt(c, a, b, m, n, k, bias);
}
inline void gemm_nn_acc(double* c, const double* a, const double* b,
                        size_t m, size_t n, size_t k) {
    ops().gemm_nn_acc(c, a, b, m, n, k);
}
inline void gemm_tn_acc(double* c, const double* a, const double* b,
                        size_t m, size_t k1, size_t k2) {
    ops().gemm_tn_acc(c, a, b, m, k1, k2);
}
inline void col_sum_acc(double* out, const double* a, size_t m, size_t n) {
    ops().col_sum_acc(out, a, m, n);
}
inline double dot(const double* a, const double* b, size_t n) { return ops().dot(a, b, n); }
inline void axpy(double* y, double alpha, const double* x, size_t n) { ops().axpy(y, alpha, x, n); }
inline void relu(double* y, const double* x, size_t n) { ops().relu(y, x, n); }
inline void relu_bwd(double* dx, const double* act, const double* dy, size_t n) {
    ops().relu_bwd(dx, act, dy, n);
}
inline void sigmoid(double* y, const double* x, size_t n) { ops().sigmoid(y, x, n); }
inline void sigmoid_bwd(double* dz, const double* act, const double* dy, size_t n) {
    ops().sigmoid_bwd(dz, act, dy, n);
}
inline void expv(double* y, const double* x, size_t n) { ops().expv(y, x, n); }
inline void adam(double* w, double* m, double* v, const double* g, size_t n,
                 double lr, double b1, double b2, double eps, double bc1, double bc2) {
    ops().adam(w, m, v, g, n, lr, b1, b2, eps, bc1, bc2);
}

} // namespace setchoice::kern
