#include "cmnet/model.hpp"

#include <cmath>

namespace cmnet {

namespace {

int64_t ilog2(int64_t v) {
  int64_t r = 0;
  while ((int64_t(1) << r) < v) ++r;
  return r;
}

}  // namespace

ModelConfig ModelConfig::from(const Config& cfg) {
  ModelConfig m;
  m.reduction = cfg.integer("encoder.reduction");
  m.context_channels = cfg.integer("encoder.channels");
  m.hidden_channels = cfg.integer("hidden.channels");
  const std::string fp = cfg.str("flow.provider");
  if (fp == "oracle")
    m.flow = FlowProviderKind::Oracle;
  else if (fp == "tiny")
    m.flow = FlowProviderKind::Tiny;
  else
    throw UsageError("flow.provider must be oracle|tiny, got " + fp);
  const std::string ab = cfg.str("ablation");
  if (ab == "baseline")
    m.ablation = Ablation::Baseline;
  else if (ab == "gru")
    m.ablation = Ablation::Gru;
  else if (ab == "motion")
    m.ablation = Ablation::Motion;
  else
    throw UsageError("ablation must be baseline|gru|motion, got " + ab);
  if (m.reduction < 2 || (m.reduction & (m.reduction - 1)) != 0)
    throw UsageError("encoder.reduction must be a power of two >= 2");
  return m;
}

int64_t ModelConfig::stages() const { return ilog2(reduction); }

template <typename T>
void FlowField<T>::validate() const {
  flow.require_finite("flow field");
  if (flow.shape().c != 2) throw ValidationError("flow field must have 2 channels");
  const double bound = 0.5 * static_cast<double>(std::max(flow.shape().h, flow.shape().w));
  for (int64_t i = 0; i < flow.numel(); ++i) {
    if (std::abs(static_cast<double>(flow.data()[i])) > bound)
      throw ValidationError("flow magnitude exceeds 0.5*max(H,W)");
  }
}

template <typename T>
int64_t Model<T>::stage_width(int64_t i) const {
  if (i == cfg_.stages() - 1) return cfg_.context_channels;
  return std::min<int64_t>(32 << i, cfg_.context_channels);
}

namespace {

int64_t gru_input_channels(const ModelConfig& cfg) {
  switch (cfg.ablation) {
    case Ablation::Motion:
      return cfg.context_channels + 62 + 2;  // [Fea_t, M_t, flow]
    default:
      return cfg.context_channels;
  }
}

constexpr int64_t kSkipChannels = 32;
constexpr int64_t kFlowFeatChannels = 16;

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig cfg) : cfg_(cfg), gru_("gru", gru_input_channels(cfg), cfg.hidden_channels) {}

template <typename T>
void Model<T>::init_params(uint64_t seed) {
  store_ = ParamStore<T>();
  Rng rng(seed);
  const int64_t stages = cfg_.stages();
  int64_t in_c = 3;
  for (int64_t i = 0; i < stages; ++i) {
    const int64_t w = stage_width(i);
    init_conv(store_, "enc.stage" + std::to_string(i) + ".down", in_c, w, 3, 3, rng);
    init_conv(store_, "enc.stage" + std::to_string(i) + ".conv", w, w, 3, 3, rng);
    if (i < stages - 1) init_conv(store_, "enc.skip" + std::to_string(i), w, kSkipChannels, 3, 3, rng);
    in_c = w;
  }

  switch (cfg_.ablation) {
    case Ablation::Baseline:
      init_conv(store_, "neck.conv", cfg_.context_channels, cfg_.hidden_channels, 3, 3, rng);
      break;
    case Ablation::Gru:
      gru_.init(store_, rng);
      break;
    case Ablation::Motion:
      init_conv(store_, "cm.corr.conv0", 2 * cfg_.context_channels, 32, 3, 3, rng);
      init_conv(store_, "cm.corr.conv1", 32, 32, 3, 3, rng);
      init_conv(store_, "cm.floenc.conv0", 2, 32, 7, 7, rng);
      init_conv(store_, "cm.floenc.conv1", 32, 32, 7, 7, rng);
      init_conv(store_, "cm.motion.conv", 64, 62, 3, 3, rng);
      gru_.init(store_, rng);
      if (cfg_.flow == FlowProviderKind::Tiny) {
        init_conv(store_, "flow.feat.conv0", 3, kFlowFeatChannels, 3, 3, rng);
        init_conv(store_, "flow.feat.conv1", kFlowFeatChannels, kFlowFeatChannels, 3, 3, rng);
        for (int level = 0; level < 3; ++level) {
          const std::string p = "flow.level" + std::to_string(level);
          init_conv(store_, p + ".conv0", 2 * kFlowFeatChannels + 2, 32, 3, 3, rng);
          init_conv(store_, p + ".conv1", 32, 16, 3, 3, rng);
          // zero init so the residual prediction starts at zero flow
          init_conv_zero(store_, p + ".conv2", 16, 2, 3, 3);
        }
      }
      break;
  }

  for (const std::string head : {"dec.alpha", "dec.fg"}) {
    for (int64_t i = 0; i < stages; ++i) {
      const bool has_skip = i < stages - 1;
      const int64_t first_in = (i == 0 ? cfg_.hidden_channels : 32) + (has_skip ? kSkipChannels : 0);
      init_conv(store_, head + ".up" + std::to_string(i) + ".conv0", first_in, 32, 3, 3, rng);
      init_conv(store_, head + ".up" + std::to_string(i) + ".conv1", 32, 32, 3, 3, rng);
    }
    init_conv(store_, head + ".head.conv0", 32, 16, 3, 3, rng);
    init_conv(store_, head + ".head.conv1", 16, head == std::string("dec.alpha") ? 1 : 3, 3, 3, rng);
  }
}

template <typename T>
EncoderOutput<T> Model<T>::encode_frame(Tape<T>& tape, const BoundParams<T>& bound, NodeId frame) const {
  const Shape s = tape.value(frame).shape();
  if (s.h % cfg_.reduction != 0 || s.w % cfg_.reduction != 0)
    throw ShapeError("encode_frame: dims " + s.str() + " not divisible by reduction " +
                     std::to_string(cfg_.reduction));
  EncoderOutput<T> out;
  NodeId x = frame;
  const int64_t stages = cfg_.stages();
  for (int64_t i = 0; i < stages; ++i) {
    const std::string p = "enc.stage" + std::to_string(i);
    x = tape.relu(apply_conv(tape, bound, ConvRef{p + ".down", 2, 1, 1}, x));
    x = tape.relu(apply_conv(tape, bound, ConvRef{p + ".conv", 1, 1, 1}, x));
    if (i < stages - 1)
      out.skips.push_back(apply_conv(tape, bound, ConvRef{"enc.skip" + std::to_string(i), 1, 1, 1}, x));
  }
  out.context = x;
  return out;
}

template <typename T>
NodeId Model<T>::estimate_flow(Tape<T>& tape, const BoundParams<T>& bound, NodeId frame_t,
                               const Tensor<T>& frame_prev, const Tensor<T>* oracle) const {
  if (cfg_.flow == FlowProviderKind::Oracle) {
    if (!oracle) throw UsageError("estimate_flow: oracle provider needs oracle flow data");
    FlowField<T> f{*oracle};
    f.validate();
    return tape.constant(*oracle);
  }

  const Shape s = tape.value(frame_t).shape();
  if (s.h % 4 != 0 || s.w % 4 != 0)
    throw ShapeError("estimate_flow: dims must be divisible by 4 for the 3-level tiny net");
  NodeId prev = tape.constant(frame_prev);

  auto features = [&](NodeId img, int64_t h, int64_t w) {
    NodeId scaled = tape.bilinear_resize(img, h, w, T(1));
    NodeId f = tape.relu(apply_conv(tape, bound, ConvRef{"flow.feat.conv0", 1, 1, 1}, scaled));
    return tape.relu(apply_conv(tape, bound, ConvRef{"flow.feat.conv1", 1, 1, 1}, f));
  };

  NodeId flow = -1;
  for (int level = 2; level >= 0; --level) {
    const int64_t h = s.h >> level, w = s.w >> level;
    NodeId ft = features(frame_t, h, w);
    NodeId fp = features(prev, h, w);
    NodeId up = level == 2 ? tape.constant(Tensor<T>::zeros(Shape{s.n, 2, h, w}))
                           : tape.bilinear_resize(flow, h, w, T(2));
    NodeId warped = tape.backwarp(fp, up);
    std::vector<NodeId> cat{ft, warped, up};
    NodeId z = tape.concat_channels(cat);
    const std::string p = "flow.level" + std::to_string(level);
    z = tape.relu(apply_conv(tape, bound, ConvRef{p + ".conv0", 1, 1, 1}, z));
    z = tape.relu(apply_conv(tape, bound, ConvRef{p + ".conv1", 1, 1, 1}, z));
    NodeId residual = apply_conv(tape, bound, ConvRef{p + ".conv2", 1, 1, 1}, z);
    flow = tape.add(up, residual);
  }
  return flow;
}

template <typename T>
NodeId Model<T>::downsample_flow(Tape<T>& tape, NodeId flow_full, int64_t ctx_h, int64_t ctx_w) const {
  // displacement values rescale with the resolution
  return tape.bilinear_resize(flow_full, ctx_h, ctx_w, T(1) / static_cast<T>(cfg_.reduction));
}

template <typename T>
NodeId Model<T>::cm_backwarp(Tape<T>& tape, const EncoderOutput<T>& prev, NodeId flow_small) const {
  return tape.backwarp(prev.context, flow_small);
}

template <typename T>
NodeId Model<T>::cm_correlate(Tape<T>& tape, const BoundParams<T>& bound, NodeId fea_t,
                              NodeId warped_prev) const {
  std::vector<NodeId> cat{fea_t, warped_prev};
  NodeId x = tape.concat_channels(cat);
  x = tape.relu(apply_conv(tape, bound, ConvRef{"cm.corr.conv0", 1, 1, 1}, x));
  return apply_conv(tape, bound, ConvRef{"cm.corr.conv1", 1, 1, 1}, x);
}

template <typename T>
NodeId Model<T>::cm_encode_flow(Tape<T>& tape, const BoundParams<T>& bound, NodeId flow_small) const {
  NodeId x = tape.relu(apply_conv(tape, bound, ConvRef{"cm.floenc.conv0", 1, 3, 3}, flow_small));
  return apply_conv(tape, bound, ConvRef{"cm.floenc.conv1", 1, 3, 3}, x);
}

template <typename T>
NodeId Model<T>::cm_fuse(Tape<T>& tape, const BoundParams<T>& bound, NodeId fea_t, NodeId corr,
                         NodeId flo_feat, NodeId flow_small) const {
  std::vector<NodeId> cf{corr, flo_feat};
  NodeId motion = apply_conv(tape, bound, ConvRef{"cm.motion.conv", 1, 1, 1}, tape.concat_channels(cf));
  std::vector<NodeId> fuse{fea_t, motion, flow_small};
  return tape.concat_channels(fuse);
}

template <typename T>
NodeId Model<T>::decode_stage(Tape<T>& tape, const BoundParams<T>& bound, const std::string& head,
                              int64_t i, NodeId x, NodeId skip) const {
  const Shape s = tape.value(x).shape();
  x = tape.bilinear_resize(x, s.h * 2, s.w * 2, T(1));
  if (skip >= 0) {
    const Shape ss = tape.value(skip).shape();
    if (ss.h != s.h * 2 || ss.w != s.w * 2)
      throw ShapeError("decode: skip resolution " + ss.str() + " does not match upsampled " +
                       tape.value(x).shape().str());
    std::vector<NodeId> cat{x, skip};
    x = tape.concat_channels(cat);
  }
  const std::string p = head + ".up" + std::to_string(i);
  x = tape.relu(apply_conv(tape, bound, ConvRef{p + ".conv0", 1, 1, 1}, x));
  return tape.relu(apply_conv(tape, bound, ConvRef{p + ".conv1", 1, 1, 1}, x));
}

template <typename T>
NodeId Model<T>::decode(Tape<T>& tape, const BoundParams<T>& bound, const std::string& head,
                        NodeId hidden, std::span<const NodeId> skips_coarse_to_fine) const {
  const int64_t stages = cfg_.stages();
  if (static_cast<int64_t>(skips_coarse_to_fine.size()) != stages - 1)
    throw ShapeError("decode: expected " + std::to_string(stages - 1) + " skips, got " +
                     std::to_string(skips_coarse_to_fine.size()));
  NodeId x = hidden;
  for (int64_t i = 0; i < stages; ++i) {
    const NodeId skip = i < stages - 1 ? skips_coarse_to_fine[static_cast<size_t>(i)] : NodeId(-1);
    x = decode_stage(tape, bound, head, i, x, skip);
  }
  x = tape.relu(apply_conv(tape, bound, ConvRef{head + ".head.conv0", 1, 1, 1}, x));
  x = apply_conv(tape, bound, ConvRef{head + ".head.conv1", 1, 1, 1}, x);
  if (head == "dec.alpha") x = tape.sigmoid(x);
  return x;
}

template <typename T>
StepState<T> Model<T>::initial_state(Tape<T>& tape, Shape frame_shape) const {
  StepState<T> st;
  st.hidden = tape.constant(Tensor<T>::zeros(Shape{frame_shape.n, cfg_.hidden_channels,
                                                   frame_shape.h / cfg_.reduction,
                                                   frame_shape.w / cfg_.reduction}));
  return st;
}

template <typename T>
std::pair<MattingOutput<T>, StepState<T>> Model<T>::forward_step(Tape<T>& tape,
                                                                 const BoundParams<T>& bound,
                                                                 const StepState<T>& state, NodeId frame,
                                                                 const Tensor<T>& frame_tensor,
                                                                 const Tensor<T>* oracle_flow) const {
  EncoderOutput<T> enc = encode_frame(tape, bound, frame);
  const bool first = !state.prev_context.has_value();
  const EncoderOutput<T>& prev_enc = first ? enc : *state.prev_context;
  const Shape ctx = tape.value(enc.context).shape();

  NodeId feat = -1;
  switch (cfg_.ablation) {
    case Ablation::Baseline:
      feat = tape.relu(apply_conv(tape, bound, ConvRef{"neck.conv", 1, 1, 1}, enc.context));
      break;
    case Ablation::Gru:
      feat = gru_.step(tape, bound, state.hidden, enc.context);
      break;
    case Ablation::Motion: {
      const Tensor<T>& prev_frame = first ? frame_tensor : state.prev_frame;
      Tensor<T> zero_flow;
      const Tensor<T>* oracle = oracle_flow;
      if (cfg_.flow == FlowProviderKind::Oracle && first && oracle == nullptr) {
        zero_flow = Tensor<T>::zeros(Shape{frame_tensor.shape().n, 2, frame_tensor.shape().h,
                                           frame_tensor.shape().w});
        oracle = &zero_flow;
      }
      NodeId flow_full = estimate_flow(tape, bound, frame, prev_frame, oracle);
      NodeId flow_small = downsample_flow(tape, flow_full, ctx.h, ctx.w);
      NodeId warped = cm_backwarp(tape, prev_enc, flow_small);
      NodeId corr = cm_correlate(tape, bound, enc.context, warped);
      NodeId flo = cm_encode_flow(tape, bound, flow_small);
      NodeId fus = cm_fuse(tape, bound, enc.context, corr, flo, flow_small);
      feat = gru_.step(tape, bound, state.hidden, fus);
      break;
    }
  }

  std::vector<NodeId> skips(enc.skips.rbegin(), enc.skips.rend());
  MattingOutput<T> out;
  out.alpha = decode(tape, bound, "dec.alpha", feat, skips);
  out.fg = decode(tape, bound, "dec.fg", feat, skips);

  StepState<T> next;
  next.hidden = feat;
  next.prev_context = enc;
  next.prev_frame = frame_tensor;
  return {out, next};
}

template <typename T>
RolloutOutputs<T> Model<T>::rollout(Tape<T>& tape, const BoundParams<T>& bound,
                                    std::span<const Tensor<T>> frames,
                                    std::span<const Tensor<T>> oracle_flows) const {
  if (frames.empty()) throw UsageError("rollout: no frames");
  if (!oracle_flows.empty() && oracle_flows.size() != frames.size())
    throw UsageError("rollout: oracle flow count mismatch");
  RolloutOutputs<T> out;
  StepState<T> state = initial_state(tape, frames[0].shape());
  for (size_t t = 0; t < frames.size(); ++t) {
    NodeId frame = tape.constant(frames[t]);
    const Tensor<T>* oracle = oracle_flows.empty() ? nullptr : &oracle_flows[t];
    auto [step_out, next] = forward_step(tape, bound, state, frame, frames[t], oracle);
    out.alpha.push_back(step_out.alpha);
    out.fg.push_back(step_out.fg);
    state = std::move(next);
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template struct FlowField<float>;
template struct FlowField<double>;

}  // namespace cmnet
