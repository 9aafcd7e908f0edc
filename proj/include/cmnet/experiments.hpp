#pragma once

#include <string>
#include <vector>

#include "cmnet/metrics.hpp"
#include "cmnet/train.hpp"

namespace cmnet {

// ---- finite-difference suite (always double precision) ----

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const;
  bool all_below(double bound) const { return worst() < bound; }
};

// Central-difference checks for every differentiable operation plus the
// 2-frame micro-model end to end (20 sampled parameters).
GradCheckReport run_gradcheck_suite(int64_t size, uint64_t seed);

// ---- single-sequence overfit experiment ----

struct OverfitOptions {
  int64_t width = 64, height = 64;
  int64_t frames = 3;
  int64_t max_iters = 2000;
  uint64_t data_seed = 7;
  uint64_t train_seed = 21;
  double max_lr = 1e-3;
  double mse_target = 1e-3;  // raw (unscaled) alpha MSE
  int64_t window = 200;
  FlowProviderKind flow = FlowProviderKind::Oracle;
  Ablation ablation = Ablation::Motion;
  std::string out_dir;  // optional checkpoint/log directory
};

struct OverfitResult {
  std::vector<LogRow> log;
  int64_t steps = 0;
  double alpha_mse = 0;  // raw, against the clean sequence
  bool windows_monotone = false;
  double seconds = 0;
  // max |H_t - H_{t-1}| per step when the trained model re-reads one frame
  std::vector<double> hidden_deltas;
};

template <typename T>
OverfitResult run_overfit(const OverfitOptions& opt);

// ---- ablation benchmark (Table-4 structure) ----

struct AblationOptions {
  int64_t width = 16, height = 16;
  int64_t frames = 3;
  int64_t train_sequences = 24;
  int64_t eval_sequences = 20;
  int64_t iters = 5000;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int64_t context_channels = 32;
  int64_t hidden_channels = 32;
  int64_t reduction = 4;
  double max_lr = 1e-3;
  double sprite_contrast = 0.35;
  uint64_t data_seed = 1234;
  int threads = 1;
};

struct AblationCell {
  MetricReport mean;  // over eval sequences
};

struct AblationResult {
  // [config][seed], config order: baseline, gru, motion
  std::vector<std::vector<AblationCell>> cells;
  std::vector<std::string> config_names{"baseline", "+ConvGRU", "+Motion"};

  double mean_sad(int config) const;
  double std_sad(int config) const;
  bool ordering_holds() const;  // motion < gru < baseline, margins > per-pair max std
  std::string table() const;
};

template <typename T>
AblationResult run_ablation(const AblationOptions& opt);

// Evaluates a trained model over a sequence set; one report per sequence.
template <typename T>
std::vector<MetricReport> evaluate_model(Model<T>& model,
                                         const std::vector<FrameSequence<T>>& sequences,
                                         const MetricConfig& mcfg, int threads = 1);

extern template OverfitResult run_overfit<float>(const OverfitOptions&);
extern template OverfitResult run_overfit<double>(const OverfitOptions&);
extern template AblationResult run_ablation<float>(const AblationOptions&);

}  // namespace cmnet
