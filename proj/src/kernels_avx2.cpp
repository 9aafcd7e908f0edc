#include "kernels_impl.hpp"

#if defined(CMNET_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <vector>

namespace cmnet::kernels {

namespace {

// Zero-padded input copy so the tiled loops never branch on borders. Row
// layout: plane rows of length wp = wi + 2*pad_w + slack; output column ox
// reading tap kx lands at padded column ox + kx.
constexpr int64_t kSlack = 8;

thread_local std::vector<float> g_pad_scratch;

float* padded_copy(const float* x, int64_t planes, int64_t hi, int64_t wi, int pad_h, int pad_w,
                   int64_t& hp, int64_t& wp) {
  hp = hi + 2 * pad_h;
  wp = wi + 2 * pad_w + kSlack;
  g_pad_scratch.assign(static_cast<size_t>(planes * hp * wp), 0.0f);
  float* xp = g_pad_scratch.data();
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = x + p * hi * wi;
    float* dst = xp + p * hp * wp + pad_h * wp + pad_w;
    for (int64_t r = 0; r < hi; ++r) std::memcpy(dst + r * wp, src + r * wi, sizeof(float) * wi);
  }
  return xp;
}

// y tile accumulation core for stride 1. If Accumulate, adds into y;
// otherwise initializes from the bias. Blocks of 4 output rows keep four
// independent FMA chains in flight.
template <bool Accumulate>
void conv_s1_tiled(const ConvGeom& g, const float* xp, int64_t hp, int64_t wp, const float* w,
                   const float* bias, float* y) {
  const int64_t kelems = g.kh * g.kw;
  const int64_t plane_stride = hp * wp;
  for (int64_t n = 0; n < g.n; ++n) {
    const float* xn = xp + n * g.ci * plane_stride;
    for (int64_t co = 0; co < g.co; ++co) {
      const float* wco = w + co * g.ci * kelems;
      const float binit = bias ? bias[co] : 0.0f;
      float* yplane = y + (n * g.co + co) * g.ho * g.wo;
      int64_t oy = 0;
      for (; oy + 4 <= g.ho; oy += 4) {
        for (int64_t ox = 0; ox + 8 <= g.wo; ox += 8) {
          {
            __m256 a0, a1, a2, a3;
            if (Accumulate) {
              a0 = _mm256_loadu_ps(yplane + (oy + 0) * g.wo + ox);
              a1 = _mm256_loadu_ps(yplane + (oy + 1) * g.wo + ox);
              a2 = _mm256_loadu_ps(yplane + (oy + 2) * g.wo + ox);
              a3 = _mm256_loadu_ps(yplane + (oy + 3) * g.wo + ox);
            } else {
              a0 = a1 = a2 = a3 = _mm256_set1_ps(binit);
            }
            const float* xci = xn + oy * wp + ox;
            const float* wk = wco;
            for (int64_t ci = 0; ci < g.ci; ++ci, xci += plane_stride) {
              const float* xr = xci;
              for (int64_t ky = 0; ky < g.kh; ++ky, xr += wp) {
                for (int64_t kx = 0; kx < g.kw; ++kx) {
                  const __m256 wv = _mm256_set1_ps(*wk++);
                  a0 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + kx), a0);
                  a1 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + wp + kx), a1);
                  a2 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + 2 * wp + kx), a2);
                  a3 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(xr + 3 * wp + kx), a3);
                }
              }
            }
            _mm256_storeu_ps(yplane + (oy + 0) * g.wo + ox, a0);
            _mm256_storeu_ps(yplane + (oy + 1) * g.wo + ox, a1);
            _mm256_storeu_ps(yplane + (oy + 2) * g.wo + ox, a2);
            _mm256_storeu_ps(yplane + (oy + 3) * g.wo + ox, a3);
          }
        }
        // column tail for the 4-row block
        for (int64_t r = 0; r < 4; ++r) {
          float* yrow = yplane + (oy + r) * g.wo;
          for (int64_t ox = (g.wo / 8) * 8; ox < g.wo; ++ox) {
            float acc = Accumulate ? yrow[ox] : binit;
            const float* xci = xn + (oy + r) * wp + ox;
            const float* wk = wco;
            for (int64_t ci = 0; ci < g.ci; ++ci, xci += plane_stride) {
              const float* xr = xci;
              for (int64_t ky = 0; ky < g.kh; ++ky, xr += wp) {
                for (int64_t kx = 0; kx < g.kw; ++kx) acc += *wk++ * xr[kx];
              }
            }
            yrow[ox] = acc;
          }
        }
      }
      // remaining rows, one at a time
      for (; oy < g.ho; ++oy) {
        float* yrow = yplane + oy * g.wo;
        int64_t ox = 0;
        for (; ox + 8 <= g.wo; ox += 8) {
          __m256 acc = Accumulate ? _mm256_loadu_ps(yrow + ox) : _mm256_set1_ps(binit);
          const float* xci = xn + oy * wp + ox;
          const float* wk = wco;
          for (int64_t ci = 0; ci < g.ci; ++ci, xci += plane_stride) {
            const float* xr = xci;
            for (int64_t ky = 0; ky < g.kh; ++ky, xr += wp) {
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                acc = _mm256_fmadd_ps(_mm256_set1_ps(*wk++), _mm256_loadu_ps(xr + kx), acc);
              }
            }
          }
          _mm256_storeu_ps(yrow + ox, acc);
        }
        for (; ox < g.wo; ++ox) {
          float acc = Accumulate ? yrow[ox] : binit;
          const float* xci = xn + oy * wp + ox;
          const float* wk = wco;
          for (int64_t ci = 0; ci < g.ci; ++ci, xci += plane_stride) {
            const float* xr = xci;
            for (int64_t ky = 0; ky < g.kh; ++ky, xr += wp) {
              for (int64_t kx = 0; kx < g.kw; ++kx) acc += *wk++ * xr[kx];
            }
          }
          yrow[ox] = acc;
        }
      }
    }
  }
}

void conv2d_fwd_avx2(const ConvGeom& g, const float* x, const float* w, const float* bias, float* y) {
  if (g.stride != 1) {
    detail::conv2d_fwd_impl<float, detail::ScalarV<float>>(g, x, w, bias, y);
    return;
  }
  int64_t hp, wp;
  const float* xp = padded_copy(x, g.n * g.ci, g.hi, g.wi, g.pad_h, g.pad_w, hp, wp);
  conv_s1_tiled<false>(g, xp, hp, wp, w, bias, y);
}

void conv2d_bwd_input_avx2(const ConvGeom& g, const float* w, const float* gy, float* gx) {
  if (g.stride != 1) {
    detail::conv2d_bwd_input_impl<float, detail::ScalarV<float>>(g, w, gy, gx);
    return;
  }
  // dL/dx is a stride-1 correlation of gy with the channel-swapped,
  // 180-degree-flipped kernel and pad' = k - 1 - pad.
  std::vector<float> wt(static_cast<size_t>(g.ci * g.co * g.kh * g.kw));
  for (int64_t co = 0; co < g.co; ++co)
    for (int64_t ci = 0; ci < g.ci; ++ci)
      for (int64_t ky = 0; ky < g.kh; ++ky)
        for (int64_t kx = 0; kx < g.kw; ++kx)
          wt[static_cast<size_t>(((ci * g.co + co) * g.kh + (g.kh - 1 - ky)) * g.kw + (g.kw - 1 - kx))] =
              w[((co * g.ci + ci) * g.kh + ky) * g.kw + kx];
  ConvGeom t;
  t.n = g.n;
  t.ci = g.co;
  t.hi = g.ho;
  t.wi = g.wo;
  t.co = g.ci;
  t.kh = g.kh;
  t.kw = g.kw;
  t.stride = 1;
  t.pad_h = static_cast<int>(g.kh) - 1 - g.pad_h;
  t.pad_w = static_cast<int>(g.kw) - 1 - g.pad_w;
  t.ho = g.hi;
  t.wo = g.wi;
  int64_t hp, wp;
  const float* gp = padded_copy(gy, t.n * t.ci, t.hi, t.wi, t.pad_h, t.pad_w, hp, wp);
  conv_s1_tiled<true>(t, gp, hp, wp, wt.data(), nullptr, gx);
}

void conv2d_bwd_weight_avx2(const ConvGeom& g, const float* x, const float* gy, float* gw,
                            float* gbias) {
  if (g.stride != 1 || g.kw > 8) {
    detail::conv2d_bwd_weight_impl<float, detail::ScalarV<float>>(g, x, gy, gw, gbias);
    return;
  }
  int64_t hp, wp;
  const float* xp = padded_copy(x, g.n * g.ci, g.hi, g.wi, g.pad_h, g.pad_w, hp, wp);
  const int64_t yplane = g.ho * g.wo;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      const float* gyp = gy + (n * g.co + co) * yplane;
      if (gbias) {
        __m256 acc = _mm256_setzero_ps();
        int64_t i = 0;
        for (; i + 8 <= yplane; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(gyp + i));
        __m128 lo = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
        lo = _mm_hadd_ps(lo, lo);
        lo = _mm_hadd_ps(lo, lo);
        float s = _mm_cvtss_f32(lo);
        for (; i < yplane; ++i) s += gyp[i];
        gbias[co] += s;
      }
      for (int64_t ci = 0; ci < g.ci; ++ci) {
        const float* xplane_p = xp + (n * g.ci + ci) * hp * wp;
        float* gwrow = gw + (co * g.ci + ci) * g.kh * g.kw;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          __m256 acc[8];
          for (int64_t kx = 0; kx < g.kw; ++kx) acc[kx] = _mm256_setzero_ps();
          float tail[8] = {0};
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const float* grow = gyp + oy * g.wo;
            const float* xr = xplane_p + (oy + ky) * wp;
            int64_t ox = 0;
            for (; ox + 8 <= g.wo; ox += 8) {
              const __m256 gv = _mm256_loadu_ps(grow + ox);
              for (int64_t kx = 0; kx < g.kw; ++kx)
                acc[kx] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(xr + ox + kx), acc[kx]);
            }
            for (; ox < g.wo; ++ox) {
              const float gv = grow[ox];
              for (int64_t kx = 0; kx < g.kw; ++kx) tail[kx] += gv * xr[ox + kx];
            }
          }
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            __m128 lo = _mm_add_ps(_mm256_castps256_ps128(acc[kx]), _mm256_extractf128_ps(acc[kx], 1));
            lo = _mm_hadd_ps(lo, lo);
            lo = _mm_hadd_ps(lo, lo);
            gwrow[ky * g.kw + kx] += _mm_cvtss_f32(lo) + tail[kx];
          }
        }
      }
    }
  }
}

// 8-lane float primitives with FMA. Tail elements run scalar, so a call is
// deterministic for a fixed length.
struct Avx2V {
  static void axpy(float* y, const float* x, float a, int64_t n) {
    const __m256 va = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
      __m256 y0 = _mm256_loadu_ps(y + i);
      y0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), y0);
      _mm256_storeu_ps(y + i, y0);
    }
    for (; i < n; ++i) y[i] += a * x[i];
  }
};

void add_k(const float* a, const float* b, float* z, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(z + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) z[i] = a[i] + b[i];
}

void sub_k(const float* a, const float* b, float* z, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(z + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) z[i] = a[i] - b[i];
}

void mul_k(const float* a, const float* b, float* z, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(z + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) z[i] = a[i] * b[i];
}

void mul_acc_k(float* z, const float* a, const float* b, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 acc = _mm256_loadu_ps(z + i);
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    _mm256_storeu_ps(z + i, acc);
  }
  for (; i < n; ++i) z[i] += a[i] * b[i];
}

void affine_k(const float* x, float* y, float a, float b, int64_t n) {
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vb));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void relu_k(const float* x, float* y, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_k(const float* x, const float* gy, float* gx, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_and_ps(_mm256_loadu_ps(gy + i), mask);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

void clip_k(float* g, float lo, float hi, int64_t n) {
  const __m256 vlo = _mm256_set1_ps(lo);
  const __m256 vhi = _mm256_set1_ps(hi);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(g + i, _mm256_min_ps(vhi, _mm256_max_ps(vlo, _mm256_loadu_ps(g + i))));
  for (; i < n; ++i) g[i] = std::min(hi, std::max(lo, g[i]));
}

void adamw_k(float* p, float* m1, float* m2, const float* g, float lr, float beta1, float beta2,
             float eps, float weight_decay, float bc1, float bc2, int64_t n) {
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 vc1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 vc2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 vbc1 = _mm256_set1_ps(bc1);
  const __m256 vbc2 = _mm256_set1_ps(bc2);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vwd = _mm256_set1_ps(weight_decay);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    __m256 vm1 = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m1 + i), _mm256_mul_ps(vc1, gi));
    __m256 vm2 = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(m2 + i), _mm256_mul_ps(vc2, _mm256_mul_ps(gi, gi)));
    _mm256_storeu_ps(m1 + i, vm1);
    _mm256_storeu_ps(m2 + i, vm2);
    const __m256 mh = _mm256_div_ps(vm1, vbc1);
    const __m256 vh = _mm256_div_ps(vm2, vbc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vh), veps);
    __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 step = _mm256_fmadd_ps(vwd, pv, _mm256_div_ps(mh, denom));
    pv = _mm256_fnmadd_ps(vlr, step, pv);
    _mm256_storeu_ps(p + i, pv);
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    m1[i] = beta1 * m1[i] + (1.0f - beta1) * gi;
    m2[i] = beta2 * m2[i] + (1.0f - beta2) * gi * gi;
    const float mh = m1[i] / bc1;
    const float vh = m2[i] / bc2;
    p[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * p[i]);
  }
}

KernelTable<float> make_avx2_table() {
  KernelTable<float> t;
  t.name = "avx2";
  t.conv2d_fwd = &conv2d_fwd_avx2;
  t.conv2d_bwd_input = &conv2d_bwd_input_avx2;
  t.conv2d_bwd_weight = &conv2d_bwd_weight_avx2;
  t.add = &add_k;
  t.sub = &sub_k;
  t.mul = &mul_k;
  t.mul_acc = &mul_acc_k;
  t.axpy = &Avx2V::axpy;
  t.affine = &affine_k;
  t.relu = &relu_k;
  t.relu_bwd = &relu_bwd_k;
  t.clip = &clip_k;
  t.adamw = &adamw_k;
  return t;
}

}  // namespace

const KernelTable<float>* avx2_table_compiled() {
  static const KernelTable<float> table = make_avx2_table();
  return &table;
}

}  // namespace cmnet::kernels

#else  // !CMNET_HAVE_AVX2

namespace cmnet::kernels {
const KernelTable<float>* avx2_table_compiled() { return nullptr; }
}  // namespace cmnet::kernels

#endif
