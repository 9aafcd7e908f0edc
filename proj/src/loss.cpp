#include "cmnet/loss.hpp"

namespace cmnet {

namespace {

template <typename T>
NodeId blur5(Tape<T>& tape, NodeId x) {
  // separable Gaussian [1,4,6,4,1]/16, reflect borders
  static const std::vector<double> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  std::vector<T> kv(5);
  for (int i = 0; i < 5; ++i) kv[static_cast<size_t>(i)] = static_cast<T>(k[static_cast<size_t>(i)]);
  NodeId kcol = tape.constant(Tensor<T>::from(Shape{1, 1, 5, 1}, kv));
  NodeId krow = tape.constant(Tensor<T>::from(Shape{1, 1, 1, 5}, kv));
  NodeId zero_bias = tape.constant(Tensor<T>::zeros(Shape{1, 1, 1, 1}));
  NodeId y = tape.conv2d(tape.reflect_pad(x, 2, 2, 0, 0), kcol, zero_bias, 1, 0, 0);
  return tape.conv2d(tape.reflect_pad(y, 0, 0, 2, 2), krow, zero_bias, 1, 0, 0);
}

template <typename T>
NodeId decimate2(Tape<T>& tape, NodeId x) {
  NodeId ident = tape.constant(Tensor<T>::full(Shape{1, 1, 1, 1}, T(1)));
  NodeId zero_bias = tape.constant(Tensor<T>::zeros(Shape{1, 1, 1, 1}));
  return tape.conv2d(x, ident, zero_bias, 2, 0, 0);
}

template <typename T>
NodeId upsample2(Tape<T>& tape, NodeId x) {
  const Shape s = tape.value(x).shape();
  return tape.bilinear_resize(x, s.h * 2, s.w * 2, T(1));
}

}  // namespace

template <typename T>
NodeId alpha_l1(Tape<T>& tape, NodeId pred, NodeId gt) {
  return tape.l1_against(pred, gt);
}

template <typename T>
std::vector<NodeId> laplacian_pyramid(Tape<T>& tape, NodeId x, int levels) {
  if (levels < 1) throw UsageError("laplacian_pyramid: levels must be >= 1");
  const Shape s = tape.value(x).shape();
  const int64_t div = int64_t(1) << (levels - 1);
  if (s.c != 1) throw ShapeError("laplacian_pyramid: expects single-channel input");
  if (s.h % div != 0 || s.w % div != 0)
    throw ShapeError("laplacian_pyramid: dims " + s.str() + " not divisible by 2^(levels-1)");
  std::vector<NodeId> bands;
  NodeId g = x;
  for (int i = 0; i < levels - 1; ++i) {
    NodeId down = decimate2(tape, blur5(tape, g));
    bands.push_back(tape.sub(g, upsample2(tape, down)));
    g = down;
  }
  bands.push_back(g);  // coarsest Gaussian rides as the last level
  return bands;
}

template <typename T>
NodeId rebuild_pyramid(Tape<T>& tape, std::span<const NodeId> bands) {
  if (bands.empty()) throw UsageError("rebuild_pyramid: no bands");
  NodeId g = bands.back();
  for (size_t i = bands.size() - 1; i-- > 0;) {
    g = tape.add(bands[i], upsample2(tape, g));
  }
  return g;
}

template <typename T>
NodeId lap_loss(Tape<T>& tape, NodeId pred, NodeId gt, int levels) {
  std::vector<NodeId> bp = laplacian_pyramid(tape, pred, levels);
  std::vector<NodeId> bg = laplacian_pyramid(tape, gt, levels);
  NodeId acc = -1;
  for (int i = 0; i < levels; ++i) {
    NodeId term = tape.l1_against(bp[static_cast<size_t>(i)], bg[static_cast<size_t>(i)]);
    term = tape.scale(term, static_cast<T>(int64_t(1) << i));  // 2^(i-1) for 1-based level i+1
    acc = acc < 0 ? term : tape.add(acc, term);
  }
  return acc;
}

template <typename T>
NodeId fg_l1(Tape<T>& tape, NodeId pred_fg, NodeId gt_fg, const Tensor<T>& gt_alpha) {
  const Shape fs = tape.value(pred_fg).shape();
  const Shape as = gt_alpha.shape();
  if (as.n != fs.n || as.h != fs.h || as.w != fs.w || as.c != 1)
    throw ShapeError("fg_l1: alpha shape " + as.str() + " inconsistent with fg " + fs.str());
  Tensor<T> mask(fs);
  int64_t count = 0;
  const int64_t plane = fs.h * fs.w;
  for (int64_t n = 0; n < fs.n; ++n) {
    const T* ap = gt_alpha.data() + n * plane;
    for (int64_t i = 0; i < plane; ++i) {
      if (ap[i] > T(0)) {
        for (int64_t c = 0; c < fs.c; ++c) mask.data()[(n * fs.c + c) * plane + i] = T(1);
        count += fs.c;
      }
    }
  }
  if (count == 0) return tape.constant(Tensor<T>::zeros(Shape{1, 1, 1, 1}));
  NodeId masked = tape.mul(tape.abs_(tape.sub(pred_fg, gt_fg)), tape.constant(mask));
  return tape.scale(tape.sum(masked), T(1) / static_cast<T>(count));
}

template <typename T>
LossNodes<T> total_loss(Tape<T>& tape, std::span<const NodeId> alpha_pred,
                        std::span<const Tensor<T>> alpha_gt, std::span<const NodeId> fg_pred,
                        std::span<const Tensor<T>> fg_gt, const LossConfig& cfg) {
  if (alpha_pred.empty()) throw UsageError("total_loss: empty frame list");
  if (alpha_pred.size() != alpha_gt.size() || fg_pred.size() != fg_gt.size() ||
      alpha_pred.size() != fg_pred.size())
    throw UsageError("total_loss: per-frame list lengths differ");
  LossNodes<T> out;
  for (size_t t = 0; t < alpha_pred.size(); ++t) {
    NodeId gt_a = tape.constant(alpha_gt[t]);
    NodeId gt_f = tape.constant(fg_gt[t]);
    NodeId la = alpha_l1(tape, alpha_pred[t], gt_a);
    NodeId lap = lap_loss(tape, alpha_pred[t], gt_a, cfg.lap_levels);
    NodeId lfg = fg_l1(tape, fg_pred[t], gt_f, alpha_gt[t]);
    out.l1_alpha = t == 0 ? la : tape.add(out.l1_alpha, la);
    out.lap_alpha = t == 0 ? lap : tape.add(out.lap_alpha, lap);
    out.l1_fg = t == 0 ? lfg : tape.add(out.l1_fg, lfg);
  }
  out.total = tape.add(tape.add(out.l1_alpha, out.lap_alpha),
                       tape.scale(out.l1_fg, static_cast<T>(cfg.fg_weight)));
  return out;
}

#define CMNET_INSTANTIATE_LOSS(T)                                                                  \
  template NodeId alpha_l1<T>(Tape<T>&, NodeId, NodeId);                                           \
  template std::vector<NodeId> laplacian_pyramid<T>(Tape<T>&, NodeId, int);                        \
  template NodeId rebuild_pyramid<T>(Tape<T>&, std::span<const NodeId>);                           \
  template NodeId lap_loss<T>(Tape<T>&, NodeId, NodeId, int);                                      \
  template NodeId fg_l1<T>(Tape<T>&, NodeId, NodeId, const Tensor<T>&);                            \
  template LossNodes<T> total_loss<T>(Tape<T>&, std::span<const NodeId>, std::span<const Tensor<T>>, \
                                      std::span<const NodeId>, std::span<const Tensor<T>>,         \
                                      const LossConfig&);

CMNET_INSTANTIATE_LOSS(float)
CMNET_INSTANTIATE_LOSS(double)
#undef CMNET_INSTANTIATE_LOSS

}  // namespace cmnet
