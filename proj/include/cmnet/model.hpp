#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmnet/config.hpp"
#include "cmnet/layers.hpp"

namespace cmnet {

enum class FlowProviderKind { Oracle, Tiny };
enum class Ablation { Baseline, Gru, Motion };

struct ModelConfig {
  int64_t reduction = 8;        // encoder.reduction, power of two
  int64_t context_channels = 64;  // encoder.channels
  int64_t hidden_channels = 64;   // hidden.channels
  FlowProviderKind flow = FlowProviderKind::Oracle;
  Ablation ablation = Ablation::Motion;

  static ModelConfig from(const Config& cfg);
  int64_t stages() const;  // log2(reduction)
};

// Backward displacement field f_{t->t-1} in pixels at frame resolution;
// channel 0 horizontal, channel 1 vertical.
template <typename T>
struct FlowField {
  Tensor<T> flow;  // (n,2,H,W)

  void validate() const;  // finiteness and magnitude bound
};

template <typename T>
struct EncoderOutput {
  NodeId context = -1;          // (n, C_ctx, h/s, w/s)
  std::vector<NodeId> skips;    // 32-channel projections, fine -> coarse
};

template <typename T>
struct StepState {
  NodeId hidden = -1;  // H_t at context resolution
  std::optional<EncoderOutput<T>> prev_context;
  Tensor<T> prev_frame;  // I_{t-1}
};

template <typename T>
struct MattingOutput {
  NodeId alpha = -1;  // (n,1,H,W) in (0,1)
  NodeId fg = -1;     // (n,3,H,W) unbounded
};

template <typename T>
struct RolloutOutputs {
  std::vector<NodeId> alpha;
  std::vector<NodeId> fg;
};

// The recurrent matting network: per frame, encode context features,
// estimate the backward flow, fuse warped previous features + learned
// correlation + encoded flow, update the hidden state with a separable
// ConvGRU, and decode alpha and foreground through skip-connected
// upsamplers. One rollout is strictly sequential; distinct rollouts can run
// on distinct tapes in parallel with shared read-only parameters.
template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  void init_params(uint64_t seed);
  BoundParams<T> bind(Tape<T>& tape) const { return bind_params(tape, store_); }

  EncoderOutput<T> encode_frame(Tape<T>& tape, const BoundParams<T>& bound, NodeId frame) const;

  // Oracle mode returns the provided field unchanged; tiny mode runs a
  // 3-level coarse-to-fine residual network.
  NodeId estimate_flow(Tape<T>& tape, const BoundParams<T>& bound, NodeId frame_t,
                       const Tensor<T>& frame_prev, const Tensor<T>* oracle) const;

  // Context-motion operator pieces (motion ablation).
  NodeId downsample_flow(Tape<T>& tape, NodeId flow_full, int64_t ctx_h, int64_t ctx_w) const;
  NodeId cm_backwarp(Tape<T>& tape, const EncoderOutput<T>& prev, NodeId flow_small) const;
  NodeId cm_correlate(Tape<T>& tape, const BoundParams<T>& bound, NodeId fea_t,
                      NodeId warped_prev) const;
  NodeId cm_encode_flow(Tape<T>& tape, const BoundParams<T>& bound, NodeId flow_small) const;
  NodeId cm_fuse(Tape<T>& tape, const BoundParams<T>& bound, NodeId fea_t, NodeId corr,
                 NodeId flo_feat, NodeId flow_small) const;

  NodeId decode(Tape<T>& tape, const BoundParams<T>& bound, const std::string& head, NodeId hidden,
                std::span<const NodeId> skips_coarse_to_fine) const;

  StepState<T> initial_state(Tape<T>& tape, Shape frame_shape) const;
  std::pair<MattingOutput<T>, StepState<T>> forward_step(Tape<T>& tape, const BoundParams<T>& bound,
                                                         const StepState<T>& state, NodeId frame,
                                                         const Tensor<T>& frame_tensor,
                                                         const Tensor<T>* oracle_flow) const;

  RolloutOutputs<T> rollout(Tape<T>& tape, const BoundParams<T>& bound,
                            std::span<const Tensor<T>> frames,
                            std::span<const Tensor<T>> oracle_flows) const;

  int64_t stage_width(int64_t i) const;

 private:
  NodeId decode_stage(Tape<T>& tape, const BoundParams<T>& bound, const std::string& head, int64_t i,
                      NodeId x, NodeId skip) const;

  ModelConfig cfg_;
  ParamStore<T> store_;
  SepConvGRU<T> gru_;
};

extern template class Model<float>;
extern template class Model<double>;
extern template struct FlowField<float>;
extern template struct FlowField<double>;

}  // namespace cmnet
