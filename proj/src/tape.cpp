#include "cmnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmnet/kernels.hpp"

namespace cmnet {

namespace {

template <typename T>
int64_t floor_i64(T v) {
  return static_cast<int64_t>(std::floor(static_cast<double>(v)));
}

}  // namespace

template <typename T>
const typename Tape<T>::Node& Tape<T>::node_checked(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw UsageError("invalid node id");
  return nodes_[static_cast<size_t>(id)];
}

template <typename T>
void Tape<T>::require_open(const char* op) const {
  if (consumed_) throw UsageError(std::string(op) + ": tape already consumed by backward; reset() first");
}

template <typename T>
NodeId Tape<T>::push(Tensor<T> value, bool requires_grad, std::function<void(Tape&, NodeId)> vjp) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Tape<T>::leaf(const Tensor<T>& value, bool requires_grad) {
  require_open("leaf");
  if (value.empty() && value.numel() != 0) throw UsageError("leaf: empty tensor");
  return push(value, requires_grad, {});
}

template <typename T>
Tensor<T>& Tape<T>::grad_buf(NodeId id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  Tensor<T>& g = grads_[static_cast<size_t>(id)];
  if (g.empty()) g = Tensor<T>::zeros(nodes_[static_cast<size_t>(id)].value.shape());
  return g;
}

template <typename T>
bool Tape<T>::has_grad(NodeId id) const {
  node_checked(id);
  return static_cast<size_t>(id) < grads_.size() && !grads_[static_cast<size_t>(id)].empty();
}

template <typename T>
Tensor<T> Tape<T>::grad(NodeId id) const {
  const Node& n = node_checked(id);
  if (has_grad(id)) return grads_[static_cast<size_t>(id)];
  return Tensor<T>::zeros(n.value.shape());
}

template <typename T>
T Tape<T>::item(NodeId id) const {
  const Node& n = node_checked(id);
  if (n.value.numel() != 1) throw UsageError("item: node is not scalar");
  return n.value.data()[0];
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
  const Node& ln = node_checked(loss);
  if (consumed_) throw UsageError("backward: tape already consumed; reset() first");
  if (!grad_enabled_) throw UsageError("backward: tape built with gradients disabled");
  if (ln.value.numel() != 1) throw UsageError("backward: loss must be scalar, got " + ln.value.shape().str());
  consumed_ = true;
  grad_buf(loss).data()[0] = T(1);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.vjp) continue;
    if (!has_grad(id)) continue;  // unreachable from the loss
    n.vjp(*this, id);
  }
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  grads_.clear();
  consumed_ = false;
}

// ---- pointwise ----

template <typename T>
NodeId Tape<T>::pointwise(NodeId x, PointwiseKind kind, T a, T b) {
  require_open("pointwise");
  const Node& xn = node_checked(x);
  xn.value.require_finite("pointwise");
  const int64_t n = xn.value.numel();
  Tensor<T> out(xn.value.shape());
  const T* xp = xn.value.data();
  T* yp = out.data();
  const auto& K = kernels::active<T>();
  switch (kind) {
    case PointwiseKind::Sigmoid:
      for (int64_t i = 0; i < n; ++i) yp[i] = T(1) / (T(1) + std::exp(-xp[i]));
      break;
    case PointwiseKind::Tanh:
      for (int64_t i = 0; i < n; ++i) yp[i] = std::tanh(xp[i]);
      break;
    case PointwiseKind::Relu:
      K.relu(xp, yp, n);
      break;
    case PointwiseKind::Affine:
      K.affine(xp, yp, a, b, n);
      break;
    case PointwiseKind::Abs:
      for (int64_t i = 0; i < n; ++i) yp[i] = std::abs(xp[i]);
      break;
  }
  auto vjp = [x, kind, a](Tape& t, NodeId self) {
    if (!t.nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    const Tensor<T>& xv = t.nodes_[static_cast<size_t>(x)].value;
    const Tensor<T>& yv = t.nodes_[static_cast<size_t>(self)].value;
    Tensor<T>& gx = t.grad_buf(x);
    const int64_t m = g.numel();
    const T* gp = g.data();
    T* gxp = gx.data();
    const auto& KK = kernels::active<T>();
    switch (kind) {
      case PointwiseKind::Sigmoid: {
        const T* yq = yv.data();
        for (int64_t i = 0; i < m; ++i) gxp[i] += gp[i] * yq[i] * (T(1) - yq[i]);
        break;
      }
      case PointwiseKind::Tanh: {
        const T* yq = yv.data();
        for (int64_t i = 0; i < m; ++i) gxp[i] += gp[i] * (T(1) - yq[i] * yq[i]);
        break;
      }
      case PointwiseKind::Relu:
        KK.relu_bwd(xv.data(), gp, gxp, m);
        break;
      case PointwiseKind::Affine:
        KK.axpy(gxp, gp, a, m);
        break;
      case PointwiseKind::Abs: {
        const T* xq = xv.data();
        for (int64_t i = 0; i < m; ++i) {
          if (xq[i] > T(0))
            gxp[i] += gp[i];
          else if (xq[i] < T(0))
            gxp[i] -= gp[i];
        }
        break;
      }
    }
  };
  return push(std::move(out), xn.requires_grad, std::move(vjp));
}

// ---- binary ----

template <typename T>
NodeId Tape<T>::binary(NodeId x, NodeId y, BinaryKind kind) {
  require_open("binary");
  const Node& xn = node_checked(x);
  const Node& yn = node_checked(y);
  if (!(xn.value.shape() == yn.value.shape()))
    throw ShapeError("binary: shape mismatch " + xn.value.shape().str() + " vs " + yn.value.shape().str());
  const int64_t n = xn.value.numel();
  Tensor<T> out(xn.value.shape());
  const auto& K = kernels::active<T>();
  switch (kind) {
    case BinaryKind::Add:
      K.add(xn.value.data(), yn.value.data(), out.data(), n);
      break;
    case BinaryKind::Sub:
      K.sub(xn.value.data(), yn.value.data(), out.data(), n);
      break;
    case BinaryKind::Mul:
      K.mul(xn.value.data(), yn.value.data(), out.data(), n);
      break;
  }
  auto vjp = [x, y, kind](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    const int64_t m = g.numel();
    const auto& KK = kernels::active<T>();
    const bool xg = t.nodes_[static_cast<size_t>(x)].requires_grad;
    const bool yg = t.nodes_[static_cast<size_t>(y)].requires_grad;
    switch (kind) {
      case BinaryKind::Add:
        if (xg) KK.axpy(t.grad_buf(x).data(), g.data(), T(1), m);
        if (yg) KK.axpy(t.grad_buf(y).data(), g.data(), T(1), m);
        break;
      case BinaryKind::Sub:
        if (xg) KK.axpy(t.grad_buf(x).data(), g.data(), T(1), m);
        if (yg) KK.axpy(t.grad_buf(y).data(), g.data(), T(-1), m);
        break;
      case BinaryKind::Mul:
        if (xg) KK.mul_acc(t.grad_buf(x).data(), g.data(), t.nodes_[static_cast<size_t>(y)].value.data(), m);
        if (yg) KK.mul_acc(t.grad_buf(y).data(), g.data(), t.nodes_[static_cast<size_t>(x)].value.data(), m);
        break;
    }
  };
  return push(std::move(out), xn.requires_grad || yn.requires_grad, std::move(vjp));
}

// ---- concat / slice ----

template <typename T>
NodeId Tape<T>::concat_channels(std::span<const NodeId> xs) {
  require_open("concat_channels");
  if (xs.empty()) throw UsageError("concat_channels: no inputs");
  const Shape s0 = node_checked(xs[0]).value.shape();
  int64_t ctotal = 0;
  bool rg = false;
  for (NodeId id : xs) {
    const Shape s = node_checked(id).value.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: spatial/batch mismatch " + s.str() + " vs " + s0.str());
    ctotal += s.c;
    rg = rg || nodes_[static_cast<size_t>(id)].requires_grad;
  }
  Tensor<T> out(Shape{s0.n, ctotal, s0.h, s0.w});
  const int64_t plane = s0.h * s0.w;
  for (int64_t n = 0; n < s0.n; ++n) {
    int64_t coff = 0;
    for (NodeId id : xs) {
      const Tensor<T>& xv = nodes_[static_cast<size_t>(id)].value;
      const int64_t c = xv.shape().c;
      std::copy_n(xv.data() + n * c * plane, c * plane, out.data() + (n * ctotal + coff) * plane);
      coff += c;
    }
  }
  std::vector<NodeId> ids(xs.begin(), xs.end());
  auto vjp = [ids, ctotal, plane](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    const int64_t nb = g.shape().n;
    for (int64_t n = 0; n < nb; ++n) {
      int64_t coff = 0;
      for (NodeId id : ids) {
        const int64_t c = t.nodes_[static_cast<size_t>(id)].value.shape().c;
        if (t.nodes_[static_cast<size_t>(id)].requires_grad) {
          T* dst = t.grad_buf(id).data() + n * c * plane;
          const T* src = g.data() + (n * ctotal + coff) * plane;
          kernels::active<T>().axpy(dst, src, T(1), c * plane);
        }
        coff += c;
      }
    }
  };
  return push(std::move(out), rg, std::move(vjp));
}

template <typename T>
NodeId Tape<T>::slice_channels(NodeId x, int64_t c0, int64_t c1) {
  require_open("slice_channels");
  const Node& xn = node_checked(x);
  const Shape s = xn.value.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1) throw ShapeError("slice_channels: bad range");
  const int64_t c = c1 - c0, plane = s.h * s.w;
  Tensor<T> out(Shape{s.n, c, s.h, s.w});
  for (int64_t n = 0; n < s.n; ++n)
    std::copy_n(xn.value.data() + (n * s.c + c0) * plane, c * plane, out.data() + n * c * plane);
  auto vjp = [x, c0, c, plane](Tape& t, NodeId self) {
    if (!t.nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    Tensor<T>& gx = t.grad_buf(x);
    const Shape s = gx.shape();
    for (int64_t n = 0; n < s.n; ++n)
      kernels::active<T>().axpy(gx.data() + (n * s.c + c0) * plane, g.data() + n * c * plane, T(1),
                                c * plane);
  };
  return push(std::move(out), xn.requires_grad, std::move(vjp));
}

// ---- conv2d ----

template <typename T>
NodeId Tape<T>::conv2d(NodeId x, NodeId weight, NodeId bias, int stride, int pad_h, int pad_w) {
  require_open("conv2d");
  const Node& xn = node_checked(x);
  const Node& wn = node_checked(weight);
  const Node& bn = node_checked(bias);
  const Shape xs = xn.value.shape(), ws = wn.value.shape(), bs = bn.value.shape();
  if (stride < 1 || pad_h < 0 || pad_w < 0) throw UsageError("conv2d: bad stride/pad");
  if (ws.c != xs.c) throw ShapeError("conv2d: weight ci " + std::to_string(ws.c) + " != input c " +
                                     std::to_string(xs.c));
  if (!(bs == Shape{1, ws.n, 1, 1})) throw ShapeError("conv2d: bias shape must be (1,co,1,1)");
  if (ws.h > xs.h + 2 * pad_h || ws.w > xs.w + 2 * pad_w)
    throw ShapeError("conv2d: kernel larger than padded input");
  kernels::ConvGeom g;
  g.n = xs.n;
  g.ci = xs.c;
  g.hi = xs.h;
  g.wi = xs.w;
  g.co = ws.n;
  g.kh = ws.h;
  g.kw = ws.w;
  g.stride = stride;
  g.pad_h = pad_h;
  g.pad_w = pad_w;
  g.ho = (xs.h + 2 * pad_h - ws.h) / stride + 1;
  g.wo = (xs.w + 2 * pad_w - ws.w) / stride + 1;
  if (g.ho < 1 || g.wo < 1) throw ShapeError("conv2d: empty output");
  Tensor<T> out(Shape{g.n, g.co, g.ho, g.wo});
  kernels::active<T>().conv2d_fwd(g, xn.value.data(), wn.value.data(), bn.value.data(), out.data());
  auto vjp = [x, weight, bias, g](Tape& t, NodeId self) {
    const Tensor<T>& gy = t.grads_[static_cast<size_t>(self)];
    const auto& KK = kernels::active<T>();
    if (t.nodes_[static_cast<size_t>(x)].requires_grad)
      KK.conv2d_bwd_input(g, t.nodes_[static_cast<size_t>(weight)].value.data(), gy.data(),
                          t.grad_buf(x).data());
    const bool wg = t.nodes_[static_cast<size_t>(weight)].requires_grad;
    const bool bg = t.nodes_[static_cast<size_t>(bias)].requires_grad;
    if (wg || bg) {
      // grad_weight and grad_bias come from one pass; route into scratch when
      // only one side tracks gradients.
      Tensor<T> scratch_w, scratch_b;
      T* gw = nullptr;
      T* gb = nullptr;
      if (wg) {
        gw = t.grad_buf(weight).data();
      } else {
        scratch_w = Tensor<T>::zeros(t.nodes_[static_cast<size_t>(weight)].value.shape());
        gw = scratch_w.data();
      }
      if (bg) {
        gb = t.grad_buf(bias).data();
      } else {
        scratch_b = Tensor<T>::zeros(t.nodes_[static_cast<size_t>(bias)].value.shape());
        gb = scratch_b.data();
      }
      KK.conv2d_bwd_weight(g, t.nodes_[static_cast<size_t>(x)].value.data(), gy.data(), gw, gb);
    }
  };
  return push(std::move(out), xn.requires_grad || wn.requires_grad || bn.requires_grad, std::move(vjp));
}

// ---- bilinear resize ----

template <typename T>
NodeId Tape<T>::bilinear_resize(NodeId x, int64_t out_h, int64_t out_w, T scale_values) {
  require_open("bilinear_resize");
  const Node& xn = node_checked(x);
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
  const Shape s = xn.value.shape();
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  const double ry = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double rx = static_cast<double>(s.w) / static_cast<double>(out_w);

  // align-corners=false: src = (i + 0.5) * ratio - 0.5, clamped to the valid
  // range; x1 additionally clamps so border pixels repeat.
  auto coords = [](int64_t i, double r, int64_t lim, int64_t& i0, int64_t& i1, double& f) {
    double src = (static_cast<double>(i) + 0.5) * r - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(lim - 1));
    i0 = floor_i64(src);
    i1 = std::min(i0 + 1, lim - 1);
    f = src - static_cast<double>(i0);
  };

  const int64_t iplane = s.h * s.w, oplane = out_h * out_w;
  for (int64_t oy = 0; oy < out_h; ++oy) {
    int64_t y0, y1;
    double fy;
    coords(oy, ry, s.h, y0, y1, fy);
    for (int64_t ox = 0; ox < out_w; ++ox) {
      int64_t x0, x1;
      double fx;
      coords(ox, rx, s.w, x0, x1, fx);
      const T w00 = static_cast<T>((1 - fy) * (1 - fx) * scale_values);
      const T w01 = static_cast<T>((1 - fy) * fx * scale_values);
      const T w10 = static_cast<T>(fy * (1 - fx) * scale_values);
      const T w11 = static_cast<T>(fy * fx * scale_values);
      for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* xp = xn.value.data() + nc * iplane;
        out.data()[nc * oplane + oy * out_w + ox] = w00 * xp[y0 * s.w + x0] + w01 * xp[y0 * s.w + x1] +
                                                    w10 * xp[y1 * s.w + x0] + w11 * xp[y1 * s.w + x1];
      }
    }
  }
  auto vjp = [x, out_h, out_w, scale_values, coords](Tape& t, NodeId self) {
    if (!t.nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    Tensor<T>& gx = t.grad_buf(x);
    const Shape s = gx.shape();
    const double ry = static_cast<double>(s.h) / static_cast<double>(out_h);
    const double rx = static_cast<double>(s.w) / static_cast<double>(out_w);
    const int64_t iplane = s.h * s.w, oplane = out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      int64_t y0, y1;
      double fy;
      coords(oy, ry, s.h, y0, y1, fy);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        int64_t x0, x1;
        double fx;
        coords(ox, rx, s.w, x0, x1, fx);
        const T w00 = static_cast<T>((1 - fy) * (1 - fx) * scale_values);
        const T w01 = static_cast<T>((1 - fy) * fx * scale_values);
        const T w10 = static_cast<T>(fy * (1 - fx) * scale_values);
        const T w11 = static_cast<T>(fy * fx * scale_values);
        for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
          const T gv = g.data()[nc * oplane + oy * out_w + ox];
          T* gxp = gx.data() + nc * iplane;
          gxp[y0 * s.w + x0] += w00 * gv;
          gxp[y0 * s.w + x1] += w01 * gv;
          gxp[y1 * s.w + x0] += w10 * gv;
          gxp[y1 * s.w + x1] += w11 * gv;
        }
      }
    }
  };
  return push(std::move(out), xn.requires_grad, std::move(vjp));
}

// ---- backwarp ----

template <typename T>
NodeId Tape<T>::backwarp(NodeId x, NodeId flow) {
  require_open("backwarp");
  const Node& xn = node_checked(x);
  const Node& fn = node_checked(flow);
  const Shape xs = xn.value.shape(), fs = fn.value.shape();
  if (fs.c != 2) throw ShapeError("backwarp: flow must have 2 channels, got " + std::to_string(fs.c));
  if (fs.n != xs.n || fs.h != xs.h || fs.w != xs.w)
    throw ShapeError("backwarp: flow spatial dims " + fs.str() + " != input " + xs.str());
  Tensor<T> out(xs);
  const int64_t plane = xs.h * xs.w;
  const T* fp = fn.value.data();
  for (int64_t n = 0; n < xs.n; ++n) {
    const T* u = fp + (n * 2 + 0) * plane;
    const T* v = fp + (n * 2 + 1) * plane;
    for (int64_t i = 0; i < xs.h; ++i) {
      for (int64_t j = 0; j < xs.w; ++j) {
        const double px_raw = static_cast<double>(j) + static_cast<double>(u[i * xs.w + j]);
        const double py_raw = static_cast<double>(i) + static_cast<double>(v[i * xs.w + j]);
        const double px = std::min(std::max(px_raw, 0.0), static_cast<double>(xs.w - 1));
        const double py = std::min(std::max(py_raw, 0.0), static_cast<double>(xs.h - 1));
        const int64_t x0 = floor_i64(px), y0 = floor_i64(py);
        const int64_t x1 = std::min(x0 + 1, xs.w - 1), y1 = std::min(y0 + 1, xs.h - 1);
        const T fx = static_cast<T>(px - static_cast<double>(x0));
        const T fy = static_cast<T>(py - static_cast<double>(y0));
        for (int64_t c = 0; c < xs.c; ++c) {
          const T* xp = xn.value.data() + (n * xs.c + c) * plane;
          out.data()[(n * xs.c + c) * plane + i * xs.w + j] =
              (T(1) - fy) * ((T(1) - fx) * xp[y0 * xs.w + x0] + fx * xp[y0 * xs.w + x1]) +
              fy * ((T(1) - fx) * xp[y1 * xs.w + x0] + fx * xp[y1 * xs.w + x1]);
        }
      }
    }
  }
  auto vjp = [x, flow](Tape& t, NodeId self) {
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    const Tensor<T>& xv = t.nodes_[static_cast<size_t>(x)].value;
    const Tensor<T>& fv = t.nodes_[static_cast<size_t>(flow)].value;
    const Shape xs = xv.shape();
    const int64_t plane = xs.h * xs.w;
    const bool xg = t.nodes_[static_cast<size_t>(x)].requires_grad;
    const bool fg = t.nodes_[static_cast<size_t>(flow)].requires_grad;
    T* gxp = xg ? t.grad_buf(x).data() : nullptr;
    T* gfp = fg ? t.grad_buf(flow).data() : nullptr;
    for (int64_t n = 0; n < xs.n; ++n) {
      const T* u = fv.data() + (n * 2 + 0) * plane;
      const T* v = fv.data() + (n * 2 + 1) * plane;
      for (int64_t i = 0; i < xs.h; ++i) {
        for (int64_t j = 0; j < xs.w; ++j) {
          const double px_raw = static_cast<double>(j) + static_cast<double>(u[i * xs.w + j]);
          const double py_raw = static_cast<double>(i) + static_cast<double>(v[i * xs.w + j]);
          const bool cx = px_raw < 0.0 || px_raw > static_cast<double>(xs.w - 1);
          const bool cy = py_raw < 0.0 || py_raw > static_cast<double>(xs.h - 1);
          const double px = std::min(std::max(px_raw, 0.0), static_cast<double>(xs.w - 1));
          const double py = std::min(std::max(py_raw, 0.0), static_cast<double>(xs.h - 1));
          const int64_t x0 = floor_i64(px), y0 = floor_i64(py);
          const int64_t x1 = std::min(x0 + 1, xs.w - 1), y1 = std::min(y0 + 1, xs.h - 1);
          const T fx = static_cast<T>(px - static_cast<double>(x0));
          const T fy = static_cast<T>(py - static_cast<double>(y0));
          T du = 0, dv = 0;
          for (int64_t c = 0; c < xs.c; ++c) {
            const T gv = g.data()[(n * xs.c + c) * plane + i * xs.w + j];
            if (gv == T(0)) continue;
            const T* xp = xv.data() + (n * xs.c + c) * plane;
            const T v00 = xp[y0 * xs.w + x0], v01 = xp[y0 * xs.w + x1];
            const T v10 = xp[y1 * xs.w + x0], v11 = xp[y1 * xs.w + x1];
            if (gxp) {
              T* gxc = gxp + (n * xs.c + c) * plane;
              gxc[y0 * xs.w + x0] += gv * (T(1) - fy) * (T(1) - fx);
              gxc[y0 * xs.w + x1] += gv * (T(1) - fy) * fx;
              gxc[y1 * xs.w + x0] += gv * fy * (T(1) - fx);
              gxc[y1 * xs.w + x1] += gv * fy * fx;
            }
            if (gfp) {
              // right-continuous bilinear derivative; clamped samples get 0
              if (!cx) du += gv * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
              if (!cy) dv += gv * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
            }
          }
          if (gfp) {
            gfp[(n * 2 + 0) * plane + i * xs.w + j] += du;
            gfp[(n * 2 + 1) * plane + i * xs.w + j] += dv;
          }
        }
      }
    }
  };
  return push(std::move(out), xn.requires_grad || fn.requires_grad, std::move(vjp));
}

// ---- reflect pad ----

template <typename T>
NodeId Tape<T>::reflect_pad(NodeId x, int top, int bottom, int left, int right) {
  require_open("reflect_pad");
  const Node& xn = node_checked(x);
  const Shape s = xn.value.shape();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw UsageError("reflect_pad: negative pad");
  if (top >= s.h || bottom >= s.h || left >= s.w || right >= s.w)
    throw ShapeError("reflect_pad: pad must be smaller than the dim");
  const int64_t oh = s.h + top + bottom, ow = s.w + left + right;
  auto mirror = [](int64_t i, int64_t lim) {
    if (i < 0) return -i;
    if (i >= lim) return 2 * lim - 2 - i;
    return i;
  };
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  const int64_t iplane = s.h * s.w, oplane = oh * ow;
  for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* xp = xn.value.data() + nc * iplane;
    T* yp = out.data() + nc * oplane;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const int64_t iy = mirror(oy - top, s.h);
      for (int64_t ox = 0; ox < ow; ++ox) {
        yp[oy * ow + ox] = xp[iy * s.w + mirror(ox - left, s.w)];
      }
    }
  }
  auto vjp = [x, top, left, oh, ow, mirror](Tape& t, NodeId self) {
    if (!t.nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor<T>& g = t.grads_[static_cast<size_t>(self)];
    Tensor<T>& gx = t.grad_buf(x);
    const Shape s = gx.shape();
    const int64_t iplane = s.h * s.w, oplane = oh * ow;
    for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
      const T* gp = g.data() + nc * oplane;
      T* gxp = gx.data() + nc * iplane;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t iy = mirror(oy - top, s.h);
        for (int64_t ox = 0; ox < ow; ++ox) {
          gxp[iy * s.w + mirror(ox - left, s.w)] += gp[oy * ow + ox];
        }
      }
    }
  };
  return push(std::move(out), xn.requires_grad, std::move(vjp));
}

// ---- reductions ----

template <typename T>
NodeId Tape<T>::reduce(NodeId x, ReduceKind kind) {
  require_open("reduce");
  const Node& xn = node_checked(x);
  const int64_t n = xn.value.numel();
  if (n == 0) throw ShapeError("reduce: empty tensor");
  double acc = 0;
  const T* xp = xn.value.data();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(xp[i]);
  if (kind == ReduceKind::Mean) acc /= static_cast<double>(n);
  Tensor<T> out = Tensor<T>::full(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  auto vjp = [x, kind, n](Tape& t, NodeId self) {
    if (!t.nodes_[static_cast<size_t>(x)].requires_grad) return;
    const T g = t.grads_[static_cast<size_t>(self)].data()[0];
    const T scale = kind == ReduceKind::Mean ? g / static_cast<T>(n) : g;
    Tensor<T>& gx = t.grad_buf(x);
    T* gxp = gx.data();
    for (int64_t i = 0; i < n; ++i) gxp[i] += scale;
  };
  return push(std::move(out), xn.requires_grad, std::move(vjp));
}

template <typename T>
NodeId Tape<T>::l1_against(NodeId x, NodeId y) {
  require_open("l1_against");
  const Node& xn = node_checked(x);
  const Node& yn = node_checked(y);
  if (!(xn.value.shape() == yn.value.shape()))
    throw ShapeError("l1_against: shape mismatch " + xn.value.shape().str() + " vs " +
                     yn.value.shape().str());
  const int64_t n = xn.value.numel();
  if (n == 0) throw ShapeError("l1_against: empty tensor");
  double acc = 0;
  const T* xp = xn.value.data();
  const T* yp = yn.value.data();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(xp[i]) - static_cast<double>(yp[i]));
  Tensor<T> out = Tensor<T>::full(Shape{1, 1, 1, 1}, static_cast<T>(acc / static_cast<double>(n)));
  auto vjp = [x, y, n](Tape& t, NodeId self) {
    const T g = t.grads_[static_cast<size_t>(self)].data()[0];
    const T s = g / static_cast<T>(n);
    const T* xp = t.nodes_[static_cast<size_t>(x)].value.data();
    const T* yp = t.nodes_[static_cast<size_t>(y)].value.data();
    const bool xg = t.nodes_[static_cast<size_t>(x)].requires_grad;
    const bool yg = t.nodes_[static_cast<size_t>(y)].requires_grad;
    T* gx = xg ? t.grad_buf(x).data() : nullptr;
    T* gy = yg ? t.grad_buf(y).data() : nullptr;
    for (int64_t i = 0; i < n; ++i) {
      const T d = xp[i] - yp[i];
      const T sg = d > T(0) ? s : (d < T(0) ? -s : T(0));
      if (gx) gx[i] += sg;
      if (gy) gy[i] -= sg;
    }
  };
  return push(std::move(out), xn.requires_grad || yn.requires_grad, std::move(vjp));
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cmnet
