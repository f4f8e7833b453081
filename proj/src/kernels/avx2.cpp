// Compiled with -mavx2 -mfma; only reached through the dispatcher after a
// CPUID check.
#include "mavos/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace mavos::kernels::detail {
namespace {

template <class T>
struct Simd;

template <>
struct Simd<float> {
  using V = __m256;
  static constexpr int kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V set1(float x) { return _mm256_set1_ps(x); }
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
};

template <>
struct Simd<double> {
  using V = __m256d;
  static constexpr int kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V set1(double x) { return _mm256_set1_pd(x); }
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
  }
};

// Shared body of nn and tn: they differ only in how A(i, k) is addressed.
template <class T, bool kTransA>
void gemm_xn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr int L = S::kLanes;
  constexpr int kRows = 4;
  auto a_at = [&](int i, int k) -> T {
    return kTransA ? A[static_cast<std::size_t>(k) * lda + i]
                   : A[static_cast<std::size_t>(i) * lda + k];
  };

  int i = 0;
  for (; i + kRows <= M; i += kRows) {
    int j = 0;
    for (; j + 2 * L <= N; j += 2 * L) {
      V acc[kRows][2];
      for (int r = 0; r < kRows; ++r) acc[r][0] = acc[r][1] = S::zero();
      for (int k = 0; k < K; ++k) {
        const T* b = B + static_cast<std::size_t>(k) * ldb + j;
        const V b0 = S::load(b);
        const V b1 = S::load(b + L);
        for (int r = 0; r < kRows; ++r) {
          const V a = S::set1(a_at(i + r, k));
          acc[r][0] = S::fmadd(a, b0, acc[r][0]);
          acc[r][1] = S::fmadd(a, b1, acc[r][1]);
        }
      }
      for (int r = 0; r < kRows; ++r) {
        T* c = C + static_cast<std::size_t>(i + r) * ldc + j;
        if (accumulate) {
          acc[r][0] = S::add(acc[r][0], S::load(c));
          acc[r][1] = S::add(acc[r][1], S::load(c + L));
        }
        S::store(c, acc[r][0]);
        S::store(c + L, acc[r][1]);
      }
    }
    for (; j + L <= N; j += L) {
      V acc[kRows];
      for (int r = 0; r < kRows; ++r) acc[r] = S::zero();
      for (int k = 0; k < K; ++k) {
        const V b0 = S::load(B + static_cast<std::size_t>(k) * ldb + j);
        for (int r = 0; r < kRows; ++r) acc[r] = S::fmadd(S::set1(a_at(i + r, k)), b0, acc[r]);
      }
      for (int r = 0; r < kRows; ++r) {
        T* c = C + static_cast<std::size_t>(i + r) * ldc + j;
        if (accumulate) acc[r] = S::add(acc[r], S::load(c));
        S::store(c, acc[r]);
      }
    }
    for (; j < N; ++j) {
      for (int r = 0; r < kRows; ++r) {
        T acc = 0;
        for (int k = 0; k < K; ++k) acc += a_at(i + r, k) * B[static_cast<std::size_t>(k) * ldb + j];
        T& c = C[static_cast<std::size_t>(i + r) * ldc + j];
        c = accumulate ? c + acc : acc;
      }
    }
  }
  for (; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill_n(c, N, T(0));
    for (int k = 0; k < K; ++k) {
      const T a = a_at(i, k);
      const V av = S::set1(a);
      const T* b = B + static_cast<std::size_t>(k) * ldb;
      int j = 0;
      for (; j + L <= N; j += L) S::store(c + j, S::fmadd(av, S::load(b + j), S::load(c + j)));
      for (; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <class T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  gemm_xn<T, false>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

template <class T>
void gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  gemm_xn<T, true>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

template <class T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr int L = S::kLanes;
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<std::size_t>(i) * lda;
    T* c = C + static_cast<std::size_t>(i) * ldc;
    int j = 0;
    for (; j + 4 <= N; j += 4) {
      const T* b0 = B + static_cast<std::size_t>(j) * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      V s0 = S::zero(), s1 = S::zero(), s2 = S::zero(), s3 = S::zero();
      int k = 0;
      for (; k + L <= K; k += L) {
        const V av = S::load(a + k);
        s0 = S::fmadd(av, S::load(b0 + k), s0);
        s1 = S::fmadd(av, S::load(b1 + k), s1);
        s2 = S::fmadd(av, S::load(b2 + k), s2);
        s3 = S::fmadd(av, S::load(b3 + k), s3);
      }
      T r0 = S::hsum(s0), r1 = S::hsum(s1), r2 = S::hsum(s2), r3 = S::hsum(s3);
      for (; k < K; ++k) {
        r0 += a[k] * b0[k];
        r1 += a[k] * b1[k];
        r2 += a[k] * b2[k];
        r3 += a[k] * b3[k];
      }
      if (accumulate) {
        c[j] += r0;
        c[j + 1] += r1;
        c[j + 2] += r2;
        c[j + 3] += r3;
      } else {
        c[j] = r0;
        c[j + 1] = r1;
        c[j + 2] = r2;
        c[j + 3] = r3;
      }
    }
    for (; j < N; ++j) {
      const T* b = B + static_cast<std::size_t>(j) * ldb;
      V s = S::zero();
      int k = 0;
      for (; k + L <= K; k += L) s = S::fmadd(S::load(a + k), S::load(b + k), s);
      T r = S::hsum(s);
      for (; k < K; ++k) r += a[k] * b[k];
      c[j] = accumulate ? c[j] + r : r;
    }
  }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  using S = Simd<T>;
  std::size_t i = 0;
  for (; i + S::kLanes <= n; i += S::kLanes) S::store(out + i, S::add(S::load(a + i), S::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using S = Simd<T>;
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::kLanes <= n; i += S::kLanes) S::store(y + i, S::fmadd(av, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double confidence(const double* omega, double h, double* phi, std::size_t n) {
  const __m256d hv = _mm256_set1_pd(h);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d upper = _mm256_set1_pd(1.0 - h);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(omega + i);
    const __m256d below = _mm256_cmp_pd(w, hv, _CMP_LT_OQ);
    const __m256d above = _mm256_cmp_pd(w, upper, _CMP_GT_OQ);
    const __m256d lo = _mm256_sub_pd(hv, w);
    const __m256d hi = _mm256_add_pd(_mm256_sub_pd(w, one), hv);
    // below and above are disjoint for h <= 0.5, so select lo first then hi.
    __m256d v = _mm256_and_pd(below, lo);
    v = _mm256_blendv_pd(v, hi, _mm256_andnot_pd(below, above));
    if (phi) _mm256_storeu_pd(phi + i, v);
    acc = _mm256_add_pd(acc, v);
  }
  double sum = Simd<double>::hsum(acc);
  for (; i < n; ++i) {
    const double w = omega[i];
    double v = 0.0;
    if (w < h) {
      v = h - w;
    } else if (w > 1.0 - h) {
      v = w - 1.0 + h;
    }
    if (phi) phi[i] = v;
    sum += v;
  }
  return sum;
}

}  // namespace

KernelTable make_avx2_table() {
  KernelTable t{};
  t.isa = Isa::kAvx2;
  t.gemm_f32 = {&gemm_nn<float>, &gemm_tn<float>, &gemm_nt<float>};
  t.gemm_f64 = {&gemm_nn<double>, &gemm_tn<double>, &gemm_nt<double>};
  t.ew_f32 = {&add<float>, &axpy<float>};
  t.ew_f64 = {&add<double>, &axpy<double>};
  t.confidence = &confidence;
  return t;
}

}  // namespace mavos::kernels::detail
