#pragma once

// Shared loop structure for the conv/elementwise kernels. Each ISA backend
// instantiates these templates with a vector policy V supplying the inner
// primitives:
//
//   V::axpy(T* y, const T* x, T a, int64_t n)   y[i] += a*x[i]
//   V::dot(const T* a, const T* b, int64_t n)   -> T
//
// The stride==1 fast paths reduce conv2d to shifted axpy/dot over rows; the
// generic-stride path stays scalar (only the encoder downsampling convs use
// stride 2).

#include <algorithm>
#include <cstdint>

#include "cmnet/kernels.hpp"

namespace cmnet::kernels::detail {

template <typename T>
struct ScalarV {
  static void axpy(T* y, const T* x, T a, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
  }
  static T dot(const T* a, const T* b, int64_t n) {
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
};

template <typename T, class V>
void conv2d_fwd_impl(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y) {
  const int64_t xplane = g.hi * g.wi, yplane = g.ho * g.wo;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      T* ybase = y + (n * g.co + co) * yplane;
      const T b = bias ? bias[co] : T(0);
      std::fill(ybase, ybase + yplane, b);
      if (g.stride == 1) {
        for (int64_t ci = 0; ci < g.ci; ++ci) {
          const T* xbase = x + (n * g.ci + ci) * xplane;
          const T* wbase = w + (co * g.ci + ci) * g.kh * g.kw;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            T* yrow = ybase + oy * g.wo;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t iy = oy + ky - g.pad_h;
              if (iy < 0 || iy >= g.hi) continue;
              const T* xrow = xbase + iy * g.wi;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const int64_t lo = std::max<int64_t>(0, g.pad_w - kx);
                const int64_t hi = std::min<int64_t>(g.wo, g.wi + g.pad_w - kx);
                if (hi > lo) V::axpy(yrow + lo, xrow + lo + kx - g.pad_w, wbase[ky * g.kw + kx], hi - lo);
              }
            }
          }
        }
      } else {
        for (int64_t ci = 0; ci < g.ci; ++ci) {
          const T* xbase = x + (n * g.ci + ci) * xplane;
          const T* wbase = w + (co * g.ci + ci) * g.kh * g.kw;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            T* yrow = ybase + oy * g.wo;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t iy = oy * g.stride + ky - g.pad_h;
              if (iy < 0 || iy >= g.hi) continue;
              const T* xrow = xbase + iy * g.wi;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const T a = wbase[ky * g.kw + kx];
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                  const int64_t ix = ox * g.stride + kx - g.pad_w;
                  if (ix >= 0 && ix < g.wi) yrow[ox] += a * xrow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T, class V>
void conv2d_bwd_input_impl(const ConvGeom& g, const T* w, const T* gy, T* gx) {
  const int64_t xplane = g.hi * g.wi, yplane = g.ho * g.wo;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t ci = 0; ci < g.ci; ++ci) {
      T* gxbase = gx + (n * g.ci + ci) * xplane;
      if (g.stride == 1) {
        for (int64_t co = 0; co < g.co; ++co) {
          const T* gybase = gy + (n * g.co + co) * yplane;
          const T* wbase = w + (co * g.ci + ci) * g.kh * g.kw;
          for (int64_t iy = 0; iy < g.hi; ++iy) {
            T* gxrow = gxbase + iy * g.wi;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t oy = iy - ky + g.pad_h;
              if (oy < 0 || oy >= g.ho) continue;
              const T* gyrow = gybase + oy * g.wo;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                // ox = ix - kx + pad_w must fall in [0, wo)
                const int64_t lo = std::max<int64_t>(0, kx - g.pad_w);
                const int64_t hi = std::min<int64_t>(g.wi, g.wo + kx - g.pad_w);
                if (hi > lo) V::axpy(gxrow + lo, gyrow + lo - kx + g.pad_w, wbase[ky * g.kw + kx], hi - lo);
              }
            }
          }
        }
      } else {
        for (int64_t co = 0; co < g.co; ++co) {
          const T* gybase = gy + (n * g.co + co) * yplane;
          const T* wbase = w + (co * g.ci + ci) * g.kh * g.kw;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const T* gyrow = gybase + oy * g.wo;
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t iy = oy * g.stride + ky - g.pad_h;
              if (iy < 0 || iy >= g.hi) continue;
              T* gxrow = gxbase + iy * g.wi;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const T a = wbase[ky * g.kw + kx];
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                  const int64_t ix = ox * g.stride + kx - g.pad_w;
                  if (ix >= 0 && ix < g.wi) gxrow[ix] += a * gyrow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T, class V>
void conv2d_bwd_weight_impl(const ConvGeom& g, const T* x, const T* gy, T* gw, T* gbias) {
  const int64_t xplane = g.hi * g.wi, yplane = g.ho * g.wo;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t co = 0; co < g.co; ++co) {
      const T* gybase = gy + (n * g.co + co) * yplane;
      if (gbias) {
        T acc = 0;
        for (int64_t i = 0; i < yplane; ++i) acc += gybase[i];
        gbias[co] += acc;
      }
      for (int64_t ci = 0; ci < g.ci; ++ci) {
        const T* xbase = x + (n * g.ci + ci) * xplane;
        T* gwbase = gw + (co * g.ci + ci) * g.kh * g.kw;
        for (int64_t ky = 0; ky < g.kh; ++ky) {
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            T acc = 0;
            if (g.stride == 1) {
              const int64_t lo = std::max<int64_t>(0, g.pad_w - kx);
              const int64_t hi = std::min<int64_t>(g.wo, g.wi + g.pad_w - kx);
              for (int64_t oy = 0; oy < g.ho; ++oy) {
                const int64_t iy = oy + ky - g.pad_h;
                if (iy < 0 || iy >= g.hi || hi <= lo) continue;
                acc += V::dot(gybase + oy * g.wo + lo, xbase + iy * g.wi + lo + kx - g.pad_w, hi - lo);
              }
            } else {
              for (int64_t oy = 0; oy < g.ho; ++oy) {
                const int64_t iy = oy * g.stride + ky - g.pad_h;
                if (iy < 0 || iy >= g.hi) continue;
                const T* gyrow = gybase + oy * g.wo;
                const T* xrow = xbase + iy * g.wi;
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                  const int64_t ix = ox * g.stride + kx - g.pad_w;
                  if (ix >= 0 && ix < g.wi) acc += gyrow[ox] * xrow[ix];
                }
              }
            }
            gwbase[ky * g.kw + kx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace cmnet::kernels::detail
