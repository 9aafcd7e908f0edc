#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cmnet::kernels {

// Geometry of one 2-D cross-correlation (no kernel flip).
struct ConvGeom {
  int64_t n = 0, ci = 0, hi = 0, wi = 0;  // input
  int64_t co = 0, kh = 0, kw = 0;         // kernel
  int64_t ho = 0, wo = 0;                 // output
  int stride = 1, pad_h = 0, pad_w = 0;
};

// Hot inner loops, runtime-dispatched. Scalar implementations are the
// reference; SIMD variants must agree with them within floating-point
// reassociation tolerance (equivalence-tested in tests/).
//
// Backward kernels accumulate into their outputs; callers zero-initialize.
template <typename T>
struct KernelTable {
  const char* name = "unset";

  void (*conv2d_fwd)(const ConvGeom&, const T* x, const T* w, const T* bias, T* y) = nullptr;
  void (*conv2d_bwd_input)(const ConvGeom&, const T* w, const T* gy, T* gx) = nullptr;
  void (*conv2d_bwd_weight)(const ConvGeom&, const T* x, const T* gy, T* gw, T* gbias) = nullptr;

  void (*add)(const T* a, const T* b, T* z, int64_t n) = nullptr;
  void (*sub)(const T* a, const T* b, T* z, int64_t n) = nullptr;
  void (*mul)(const T* a, const T* b, T* z, int64_t n) = nullptr;
  void (*mul_acc)(T* z, const T* a, const T* b, int64_t n) = nullptr;  // z += a*b
  void (*axpy)(T* y, const T* x, T alpha, int64_t n) = nullptr;        // y += alpha*x
  void (*affine)(const T* x, T* y, T a, T b, int64_t n) = nullptr;     // y = a*x + b
  void (*relu)(const T* x, T* y, int64_t n) = nullptr;
  void (*relu_bwd)(const T* x, const T* gy, T* gx, int64_t n) = nullptr;  // gx += gy*(x>0)
  void (*clip)(T* g, T lo, T hi, int64_t n) = nullptr;

  // One AdamW update with precomputed bias corrections bc1 = 1-beta1^t,
  // bc2 = 1-beta2^t. Updates moments in place, then the parameter.
  void (*adamw)(T* p, T* m1, T* m2, const T* g, T lr, T beta1, T beta2, T eps, T weight_decay, T bc1,
                T bc2, int64_t n) = nullptr;
};

enum class SimdLevel { Scalar = 0, Avx2 = 1 };

// Best level supported by this CPU (and compiled into this binary).
SimdLevel detect_simd();
// Active level; defaults to detect_simd(), overridable with the CMNET_SIMD
// environment variable (scalar|avx2|auto) or set_simd_level().
SimdLevel simd_level();
void set_simd_level(SimdLevel level);
std::string simd_level_name(SimdLevel level);

template <typename T>
const KernelTable<T>& scalar_table();

// AVX2 float table, or nullptr when not compiled in / not supported by the
// CPU. Doubles always run the scalar path.
const KernelTable<float>* avx2_table();

// Table for the active level. Doubles always resolve to scalar.
template <typename T>
const KernelTable<T>& active();

// All usable tables for T on this machine (for equivalence tests).
template <typename T>
std::vector<const KernelTable<T>*> available_tables();

}  // namespace cmnet::kernels
