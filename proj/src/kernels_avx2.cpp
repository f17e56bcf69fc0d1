// AVX2+FMA kernel variants. Built with target attributes so the rest of the
// binary stays generic; dispatch in kernels.cpp only selects these when the
// CPU reports avx2+fma.

#include "navlab/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

#define NAVLAB_AVX2 __attribute__((target("avx2,fma")))

namespace navlab::kern {

namespace {

NAVLAB_AVX2 inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

}  // namespace

NAVLAB_AVX2 float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum256(acc) + tail;
}

NAVLAB_AVX2 void matvec_avx2(const float* W, const float* x, const float* b,
                             float* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float* w = W + r * cols;
    __m256 acc = _mm256_setzero_ps();
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8) {
      acc = _mm256_fmadd_ps(_mm256_loadu_ps(w + c), _mm256_loadu_ps(x + c), acc);
    }
    float s = hsum256(acc);
    for (; c < cols; ++c) s += w[c] * x[c];
    y[r] = s + (b ? b[r] : 0.0f);
  }
}

NAVLAB_AVX2 void matvec_t_acc_avx2(const float* W, const float* g, float* out,
                                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float gr = g[r];
    if (gr == 0.0f) continue;
    const float* w = W + r * cols;
    const __m256 vg = _mm256_set1_ps(gr);
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8) {
      __m256 o = _mm256_loadu_ps(out + c);
      o = _mm256_fmadd_ps(vg, _mm256_loadu_ps(w + c), o);
      _mm256_storeu_ps(out + c, o);
    }
    for (; c < cols; ++c) out[c] += gr * w[c];
  }
}

NAVLAB_AVX2 void ger_acc_avx2(float* W, const float* g, const float* x,
                              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const float gr = g[r];
    if (gr == 0.0f) continue;
    float* w = W + r * cols;
    const __m256 vg = _mm256_set1_ps(gr);
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8) {
      __m256 wv = _mm256_loadu_ps(w + c);
      wv = _mm256_fmadd_ps(vg, _mm256_loadu_ps(x + c), wv);
      _mm256_storeu_ps(w + c, wv);
    }
    for (; c < cols; ++c) w[c] += gr * x[c];
  }
}

NAVLAB_AVX2 void axpy_avx2(float alpha, const float* x, float* y,
                           std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

NAVLAB_AVX2 float sq_dist_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(d, d, acc);
  }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    tail += d * d;
  }
  return hsum256(acc) + tail;
}

}  // namespace navlab::kern

#else  // non-x86: AVX2 symbols fall back to the references.

namespace navlab::kern {
float dot_avx2(const float* a, const float* b, std::size_t n) {
  return dot_ref(a, b, n);
}
void matvec_avx2(const float* W, const float* x, const float* b, float* y,
                 std::size_t rows, std::size_t cols) {
  matvec_ref(W, x, b, y, rows, cols);
}
void matvec_t_acc_avx2(const float* W, const float* g, float* out,
                       std::size_t rows, std::size_t cols) {
  matvec_t_acc_ref(W, g, out, rows, cols);
}
void ger_acc_avx2(float* W, const float* g, const float* x, std::size_t rows,
                  std::size_t cols) {
  ger_acc_ref(W, g, x, rows, cols);
}
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  axpy_ref(alpha, x, y, n);
}
float sq_dist_avx2(const float* a, const float* b, std::size_t n) {
  return sq_dist_ref(a, b, n);
}
}  // namespace navlab::kern

#endif
