#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cmnet/data.hpp"
#include "cmnet/loss.hpp"
#include "cmnet/model.hpp"

namespace cmnet {

struct AdamWConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
};

// Decoupled weight decay; decay skipped for bias parameters. Moments exist
// only for parameters that have received updates; a parameter unfrozen
// mid-run starts its bias-correction clock at its first update.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr);

  // Moments (and per-parameter update counts) appended to `out` with
  // ".m1"/".m2"/".t" suffixes for checkpointing.
  void export_state(ParamStore<T>& out) const;
  void import_state(const ParamStore<T>& combined, const ParamStore<T>& params);

  bool has_moments(const std::string& name) const { return moments_.count(name) != 0; }

 private:
  struct Moments {
    Tensor<T> m1, m2;
    int64_t t = 0;
  };
  AdamWConfig cfg_;
  std::map<std::string, Moments> moments_;
};

// Elementwise clamp to [-1, 1] (the paper states a value range).
template <typename T>
void clip_gradients(std::map<std::string, Tensor<T>>& grads, T lo = T(-1), T hi = T(1));

// Cosine warmup to max_lr over the first pct_start fraction, cosine anneal
// to max_lr/(div_factor*final_div_factor) over the rest.
struct OneCycleSchedule {
  double max_lr = 1e-4;
  int64_t total_steps = 0;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  double lr(int64_t step) const;
};

struct TrainConfig {
  int64_t iters = 2000;
  int64_t batch = 1;
  int64_t frames = 3;            // rollout length per sample
  double phase_split = 0.5;      // flow.* frozen for the first fraction
  int64_t ckpt_every = 500;
  int64_t log_every = 1;
  uint64_t seed = 42;
  std::string out_dir;           // empty: no files written
  bool augment_enabled = true;
  AugmentConfig aug;
  LossConfig loss;
  AdamWConfig optim;
  OneCycleSchedule sched;        // total_steps filled from iters when 0
};

struct LogRow {
  int64_t step = 0;
  double lr = 0, loss = 0, l1a = 0, lap = 0, l1fg = 0;
};

template <typename T>
struct TrainResult {
  std::vector<LogRow> log;
  int64_t final_step = 0;
};

// Checkpoint = parameter store + optimizer moments + root seed, CMCK format.
template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const AdamW<T>& opt,
                     uint64_t step, uint64_t root_seed);
template <typename T>
uint64_t load_checkpoint(const std::string& path, ParamStore<T>& params, AdamW<T>* opt,
                         uint64_t* root_seed);

// Per-iteration: sample an augmented batch of `frames`-frame clips, roll the
// model out, Eq.-16 loss, backward, clip, OneCycleLR, AdamW. flow.* frozen
// during the first phase. Deterministic given (cfg.seed, dataset).
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig cfg, std::vector<FrameSequence<T>> dataset);

  TrainResult<T> run(int64_t from_step = 0);
  TrainResult<T> resume(const std::string& ckpt_path);

  // invoked after each optimizer step (acceptance probes hash parameters here)
  std::function<void(int64_t step)> on_step;
  // early-exit hook, polled after on_step; run() returns once it yields true
  std::function<bool(int64_t step)> stop_after;

  const AdamW<T>& optimizer() const { return opt_; }
  int64_t phase1_end() const;

 private:
  void one_iteration(int64_t step, TrainResult<T>& result);

  Model<T>& model_;
  TrainConfig cfg_;
  std::vector<FrameSequence<T>> dataset_;
  AdamW<T> opt_;
};

// Stacks per-sequence (1,c,h,w) tensors into one (B,c,h,w) batch.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts);

extern template class AdamW<float>;
extern template class AdamW<double>;
extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace cmnet
