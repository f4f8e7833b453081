#include "mavos/kernels.hpp"

#include <algorithm>

namespace mavos::kernels::detail {
namespace {

template <class T>
void prepare(int M, int N, T* C, int ldc, bool accumulate) {
  if (accumulate) return;
  for (int i = 0; i < M; ++i) std::fill_n(C + static_cast<std::size_t>(i) * ldc, N, T(0));
}

template <class T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  prepare(M, N, C, ldc, accumulate);
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * ldc;
    for (int k = 0; k < K; ++k) {
      const T a = A[static_cast<std::size_t>(i) * lda + k];
      const T* b = B + static_cast<std::size_t>(k) * ldb;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <class T>
void gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  prepare(M, N, C, ldc, accumulate);
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * ldc;
    for (int k = 0; k < K; ++k) {
      const T a = A[static_cast<std::size_t>(k) * lda + i];
      const T* b = B + static_cast<std::size_t>(k) * ldb;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <class T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C,
             int ldc, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<std::size_t>(i) * lda;
    T* c = C + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < N; ++j) {
      const T* b = B + static_cast<std::size_t>(j) * ldb;
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] = accumulate ? c[j] + acc : acc;
    }
  }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double confidence(const double* omega, double h, double* phi, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
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

KernelTable make_scalar_table() {
  KernelTable t{};
  t.isa = Isa::kScalar;
  t.gemm_f32 = {&gemm_nn<float>, &gemm_tn<float>, &gemm_nt<float>};
  t.gemm_f64 = {&gemm_nn<double>, &gemm_tn<double>, &gemm_nt<double>};
  t.ew_f32 = {&add<float>, &axpy<float>};
  t.ew_f64 = {&add<double>, &axpy<double>};
  t.confidence = &confidence;
  return t;
}

}  // namespace mavos::kernels::detail
