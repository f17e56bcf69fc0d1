#include "navlab/kernels.hpp"

namespace navlab::kern {

void matvec_ref(const float* W, const float* x, const float* b, float* y,
                std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    float acc = b ? b[r] : 0.0f;
    const float* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc_ref(const float* W, const float* g, float* out,
                      std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float gr = g[r];
    if (gr == 0.0f) continue;
    const float* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += gr * w[c];
  }
}

void ger_acc_ref(float* W, const float* g, const float* x,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float gr = g[r];
    if (gr == 0.0f) continue;
    float* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) w[c] += gr * x[c];
  }
}

float dot_ref(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_ref(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

float sq_dist_ref(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    const float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void matvec_d(const double* W, const double* x, const double* b, double* y,
              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b ? b[r] : 0.0;
    const double* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc_d(const double* W, const double* g, double* out,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    const double* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += gr * w[c];
  }
}

void ger_acc_d(double* W, const double* g, const double* x,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    double* w = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) w[c] += gr * x[c];
  }
}

double dot_d(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {
struct Dispatch {
  bool simd = avx2_available();
};
const Dispatch g_dispatch;
}  // namespace

void (*matvec)(const float*, const float*, const float*, float*, std::size_t,
               std::size_t) = avx2_available() ? matvec_avx2 : matvec_ref;
void (*matvec_t_acc)(const float*, const float*, float*, std::size_t,
                     std::size_t) =
    avx2_available() ? matvec_t_acc_avx2 : matvec_t_acc_ref;
void (*ger_acc)(float*, const float*, const float*, std::size_t, std::size_t) =
    avx2_available() ? ger_acc_avx2 : ger_acc_ref;
float (*dot)(const float*, const float*, std::size_t) =
    avx2_available() ? dot_avx2 : dot_ref;
void (*axpy)(float, const float*, float*, std::size_t) =
    avx2_available() ? axpy_avx2 : axpy_ref;
float (*sq_dist)(const float*, const float*, std::size_t) =
    avx2_available() ? sq_dist_avx2 : sq_dist_ref;

const char* active_backend() { return g_dispatch.simd ? "avx2" : "scalar"; }

}  // namespace navlab::kern
