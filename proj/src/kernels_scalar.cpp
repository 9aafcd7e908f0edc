#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace cmnet::kernels {

namespace {

template <typename T>
void add_k(const T* a, const T* b, T* z, int64_t n) {
  for (int64_t i = 0; i < n; ++i) z[i] = a[i] + b[i];
}

template <typename T>
void sub_k(const T* a, const T* b, T* z, int64_t n) {
  for (int64_t i = 0; i < n; ++i) z[i] = a[i] - b[i];
}

template <typename T>
void mul_k(const T* a, const T* b, T* z, int64_t n) {
  for (int64_t i = 0; i < n; ++i) z[i] = a[i] * b[i];
}

template <typename T>
void mul_acc_k(T* z, const T* a, const T* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) z[i] += a[i] * b[i];
}

template <typename T>
void affine_k(const T* x, T* y, T a, T b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <typename T>
void relu_k(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_k(const T* x, const T* gy, T* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) gx[i] += gy[i];
  }
}

template <typename T>
void clip_k(T* g, T lo, T hi, int64_t n) {
  for (int64_t i = 0; i < n; ++i) g[i] = std::min(hi, std::max(lo, g[i]));
}

template <typename T>
void adamw_k(T* p, T* m1, T* m2, const T* g, T lr, T beta1, T beta2, T eps, T weight_decay, T bc1,
             T bc2, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m1[i] = beta1 * m1[i] + (T(1) - beta1) * gi;
    m2[i] = beta2 * m2[i] + (T(1) - beta2) * gi * gi;
    const T mh = m1[i] / bc1;
    const T vh = m2[i] / bc2;
    p[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * p[i]);
  }
}

template <typename T>
KernelTable<T> make_scalar_table() {
  using V = detail::ScalarV<T>;
  KernelTable<T> t;
  t.name = "scalar";
  t.conv2d_fwd = &detail::conv2d_fwd_impl<T, V>;
  t.conv2d_bwd_input = &detail::conv2d_bwd_input_impl<T, V>;
  t.conv2d_bwd_weight = &detail::conv2d_bwd_weight_impl<T, V>;
  t.add = &add_k<T>;
  t.sub = &sub_k<T>;
  t.mul = &mul_k<T>;
  t.mul_acc = &mul_acc_k<T>;
  t.axpy = &V::axpy;
  t.affine = &affine_k<T>;
  t.relu = &relu_k<T>;
  t.relu_bwd = &relu_bwd_k<T>;
  t.clip = &clip_k<T>;
  t.adamw = &adamw_k<T>;
  return t;
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> table = make_scalar_table<T>();
  return table;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace cmnet::kernels
