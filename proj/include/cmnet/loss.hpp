#pragma once

#include <span>
#include <vector>

#include "cmnet/tape.hpp"

namespace cmnet {

struct LossConfig {
  int lap_levels = 5;
  double fg_weight = 0.1;
};

// Scalar nodes for one total-loss evaluation (components summed over frames).
template <typename T>
struct LossNodes {
  NodeId l1_alpha = -1;
  NodeId lap_alpha = -1;
  NodeId l1_fg = -1;
  NodeId total = -1;
};

// mean |pred - gt| (per-element mean keeps magnitudes resolution-independent)
template <typename T>
NodeId alpha_l1(Tape<T>& tape, NodeId pred, NodeId gt);

// Laplacian pyramid with the separable [1,4,6,4,1]/16 kernel, reflect-padded.
// Returns `levels` bands: difference bands plus the coarsest Gaussian last.
// Spatial dims must divide 2^(levels-1).
template <typename T>
std::vector<NodeId> laplacian_pyramid(Tape<T>& tape, NodeId x, int levels);

// Inverse of laplacian_pyramid by iterated upsample-and-add.
template <typename T>
NodeId rebuild_pyramid(Tape<T>& tape, std::span<const NodeId> bands);

// sum_i 2^(i-1) * mean|L_i(pred) - L_i(gt)|
template <typename T>
NodeId lap_loss(Tape<T>& tape, NodeId pred, NodeId gt, int levels);

// mean |pred - gt| over pixels where gt_alpha > 0 (mask broadcast over the 3
// color channels); 0 when the mask is empty.
template <typename T>
NodeId fg_l1(Tape<T>& tape, NodeId pred_fg, NodeId gt_fg, const Tensor<T>& gt_alpha);

// Per-frame l1 + laplacian + fg_weight * masked fg l1, summed over frames.
template <typename T>
LossNodes<T> total_loss(Tape<T>& tape, std::span<const NodeId> alpha_pred,
                        std::span<const Tensor<T>> alpha_gt, std::span<const NodeId> fg_pred,
                        std::span<const Tensor<T>> fg_gt, const LossConfig& cfg);

}  // namespace cmnet
