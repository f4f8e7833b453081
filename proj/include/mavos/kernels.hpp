#pragma once

// Data-parallel inner loops used by the network and the selection stage.
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The active table is chosen once at startup from CPUID; setting
// MAVOS_ISA=scalar in the environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace mavos::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Row-major GEMM variants. All compute C (+)= op(A) * op(B) with
// C of size M x N and inner dimension K. When `accumulate` is false C is
// overwritten.
//   nn: A is M x K, B is K x N
//   tn: A is K x M (used transposed), B is K x N
//   nt: A is M x K, B is N x K (used transposed)
template <class T>
struct GemmFns {
  void (*nn)(int M, int N, int K, const T* A, int lda, const T* B, int ldb,
             T* C, int ldc, bool accumulate);
  void (*tn)(int M, int N, int K, const T* A, int lda, const T* B, int ldb,
             T* C, int ldc, bool accumulate);
  void (*nt)(int M, int N, int K, const T* A, int lda, const T* B, int ldb,
             T* C, int ldc, bool accumulate);
};

template <class T>
struct ElementwiseFns {
  // out[i] = a[i] + b[i]
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
};

struct KernelTable {
  Isa isa;
  GemmFns<float> gemm_f32;
  GemmFns<double> gemm_f64;
  ElementwiseFns<float> ew_f32;
  ElementwiseFns<double> ew_f64;
  // Writes the piecewise confidence margin of each foreground probability
  // into phi (may be null) and returns the sum over all n pixels.
  double (*confidence)(const double* omega, double h, double* phi, std::size_t n);
};

// Table for a specific ISA. Requesting kAvx2 on a CPU without it throws.
const KernelTable& table(Isa isa);

// Table selected for this process.
const KernelTable& active();

bool cpu_has_avx2();

template <class T>
const GemmFns<T>& gemm();
template <>
inline const GemmFns<float>& gemm<float>() { return active().gemm_f32; }
template <>
inline const GemmFns<double>& gemm<double>() { return active().gemm_f64; }

template <class T>
const ElementwiseFns<T>& elementwise();
template <>
inline const ElementwiseFns<float>& elementwise<float>() { return active().ew_f32; }
template <>
inline const ElementwiseFns<double>& elementwise<double>() { return active().ew_f64; }

namespace detail {
KernelTable make_scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
KernelTable make_avx2_table();
#endif
}  // namespace detail

}  // namespace mavos::kernels
