#pragma once
// Arithmetic inner loops used by the policy network, decoders, and t-SNE.
// Scalar reference kernels plus AVX2 variants selected once at startup.
// The reference versions stay available for equivalence testing.

#include <cstddef>

namespace navlab::kern {

// y = W x + b, W row-major [rows x cols]. b may be null.
void matvec_ref(const float* W, const float* x, const float* b, float* y,
                std::size_t rows, std::size_t cols);
// out += W^T g, W row-major [rows x cols], g length rows, out length cols.
void matvec_t_acc_ref(const float* W, const float* g, float* out,
                      std::size_t rows, std::size_t cols);
// W += g x^T (rank-1 accumulate), W row-major [rows x cols].
void ger_acc_ref(float* W, const float* g, const float* x,
                 std::size_t rows, std::size_t cols);
float dot_ref(const float* a, const float* b, std::size_t n);
void axpy_ref(float alpha, const float* x, float* y, std::size_t n);
float sq_dist_ref(const float* a, const float* b, std::size_t n);

// Dispatched entry points. Resolved to the AVX2 variants when the CPU
// supports them, otherwise the scalar references.
extern void (*matvec)(const float*, const float*, const float*, float*,
                      std::size_t, std::size_t);
extern void (*matvec_t_acc)(const float*, const float*, float*,
                            std::size_t, std::size_t);
extern void (*ger_acc)(float*, const float*, const float*,
                       std::size_t, std::size_t);
extern float (*dot)(const float*, const float*, std::size_t);
extern void (*axpy)(float, const float*, float*, std::size_t);
extern float (*sq_dist)(const float*, const float*, std::size_t);

// AVX2 implementations (always compiled, only dispatched when supported).
void matvec_avx2(const float* W, const float* x, const float* b, float* y,
                 std::size_t rows, std::size_t cols);
void matvec_t_acc_avx2(const float* W, const float* g, float* out,
                       std::size_t rows, std::size_t cols);
void ger_acc_avx2(float* W, const float* g, const float* x,
                  std::size_t rows, std::size_t cols);
float dot_avx2(const float* a, const float* b, std::size_t n);
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n);
float sq_dist_avx2(const float* a, const float* b, std::size_t n);

const char* active_backend();  // "avx2" or "scalar"
bool avx2_available();

// Double-precision paths are scalar only; they exist for the
// finite-difference gradient checks which need the headroom.
void matvec_d(const double* W, const double* x, const double* b, double* y,
              std::size_t rows, std::size_t cols);
void matvec_t_acc_d(const double* W, const double* g, double* out,
                    std::size_t rows, std::size_t cols);
void ger_acc_d(double* W, const double* g, const double* x,
               std::size_t rows, std::size_t cols);
double dot_d(const double* a, const double* b, std::size_t n);

}  // namespace navlab::kern
