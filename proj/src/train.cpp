#include "cmnet/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmnet/kernels.hpp"

namespace cmnet {

namespace {

bool is_bias(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
}

constexpr double kPi = 3.14159265358979323846264338327950288;

}  // namespace

template <typename T>
void AdamW<T>::step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, double lr) {
  const auto& K = kernels::active<T>();
  for (auto& [name, entry] : params.entries()) {
    if (entry.frozen) continue;
    auto git = grads.find(name);
    Tensor<T> zero;
    const Tensor<T>* g = nullptr;
    if (git != grads.end()) {
      g = &git->second;
      if (!(g->shape() == entry.value.shape()))
        throw StateError("gradient shape mismatch for " + name);
    } else {
      zero = Tensor<T>::zeros(entry.value.shape());
      g = &zero;
    }
    auto mit = moments_.find(name);
    if (mit == moments_.end()) {
      Moments m;
      m.m1 = Tensor<T>::zeros(entry.value.shape());
      m.m2 = Tensor<T>::zeros(entry.value.shape());
      mit = moments_.emplace(name, std::move(m)).first;
    }
    Moments& m = mit->second;
    if (!(m.m1.shape() == entry.value.shape())) throw StateError("moment shape mismatch for " + name);
    m.t += 1;
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(m.t)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(m.t)));
    const T wd = is_bias(name) ? T(0) : static_cast<T>(cfg_.weight_decay);
    K.adamw(entry.value.data(), m.m1.data(), m.m2.data(), g->data(), static_cast<T>(lr),
            static_cast<T>(cfg_.beta1), static_cast<T>(cfg_.beta2), static_cast<T>(cfg_.eps), wd, bc1,
            bc2, entry.value.numel());
  }
}

template <typename T>
void AdamW<T>::export_state(ParamStore<T>& out) const {
  for (const auto& [name, m] : moments_) {
    out.add(name + ".m1", m.m1.clone());
    out.add(name + ".m2", m.m2.clone());
    out.add(name + ".t", Tensor<T>::full(Shape{1, 1, 1, 1}, static_cast<T>(m.t)));
  }
}

template <typename T>
void AdamW<T>::import_state(const ParamStore<T>& combined, const ParamStore<T>& params) {
  moments_.clear();
  for (const auto& [name, e] : params.entries()) {
    if (!combined.contains(name + ".m1")) continue;
    Moments m;
    m.m1 = combined.entry(name + ".m1").value.clone();
    m.m2 = combined.entry(name + ".m2").value.clone();
    m.t = static_cast<int64_t>(combined.entry(name + ".t").value.data()[0]);
    if (!(m.m1.shape() == e.value.shape()) || !(m.m2.shape() == e.value.shape()))
      throw StateError("checkpoint moment shape mismatch for " + name);
    moments_.emplace(name, std::move(m));
  }
}

template <typename T>
void clip_gradients(std::map<std::string, Tensor<T>>& grads, T lo, T hi) {
  const auto& K = kernels::active<T>();
  for (auto& [name, g] : grads) K.clip(g.data(), lo, hi, g.numel());
}

double OneCycleSchedule::lr(int64_t step) const {
  if (step < 0 || step > total_steps) throw UsageError("onecycle_lr: step out of range");
  const double lo = max_lr / div_factor;
  const double fin = max_lr / (div_factor * final_div_factor);
  const double s1 = pct_start * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= s1) {
    const double w = s1 > 0 ? s / s1 : 1.0;
    return lo + (max_lr - lo) * 0.5 * (1.0 - std::cos(kPi * w));
  }
  const double w = (s - s1) / (static_cast<double>(total_steps) - s1);
  return fin + (max_lr - fin) * 0.5 * (1.0 + std::cos(kPi * w));
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const AdamW<T>& opt,
                     uint64_t step, uint64_t root_seed) {
  ParamStore<T> combined;
  for (const auto& [name, e] : params.entries()) {
    combined.add(name, e.value.clone());
    combined.entry(name).frozen = e.frozen;
  }
  opt.export_state(combined);
  // the root seed rides as four 16-bit words (exact in either precision) so
  // the container format stays unchanged
  Tensor<T> seed(Shape{1, 1, 1, 4});
  for (int i = 0; i < 4; ++i)
    seed.data()[i] = static_cast<T>((root_seed >> (16 * i)) & 0xffffu);
  combined.add("meta.root_seed", std::move(seed));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  save_store(os, combined, step);
}

template <typename T>
uint64_t load_checkpoint(const std::string& path, ParamStore<T>& params, AdamW<T>* opt,
                         uint64_t* root_seed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  ParamStore<T> combined;
  const uint64_t step = load_store(is, combined);
  ParamStore<T> only_params;
  for (const auto& [name, e] : combined.entries()) {
    if (name == "meta.root_seed") {
      if (root_seed) {
        uint64_t s = 0;
        for (int i = 0; i < 4; ++i)
          s |= static_cast<uint64_t>(static_cast<double>(e.value.data()[i])) << (16 * i);
        *root_seed = s;
      }
      continue;
    }
    const size_t n = name.size();
    const bool moment = (n > 3 && (name.compare(n - 3, 3, ".m1") == 0 || name.compare(n - 3, 3, ".m2") == 0)) ||
                        (n > 2 && name.compare(n - 2, 2, ".t") == 0 && combined.contains(name.substr(0, n - 2) + ".m1"));
    if (moment) continue;
    only_params.add(name, e.value.clone());
    only_params.entry(name).frozen = e.frozen;
  }
  params = std::move(only_params);
  if (opt) opt->import_state(combined, params);
  return step;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw UsageError("stack_batch: empty");
  const Shape s = parts[0].shape();
  Tensor<T> out(Shape{s.n * static_cast<int64_t>(parts.size()), s.c, s.h, s.w});
  const int64_t chunk = s.numel();
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!(parts[i].shape() == s)) throw ShapeError("stack_batch: shape mismatch");
    std::copy_n(parts[i].data(), chunk, out.data() + static_cast<int64_t>(i) * chunk);
  }
  return out;
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model, TrainConfig cfg, std::vector<FrameSequence<T>> dataset)
    : model_(model), cfg_(std::move(cfg)), dataset_(std::move(dataset)), opt_(cfg_.optim) {
  if (dataset_.empty()) throw UsageError("trainer: dataset is empty");
  for (const auto& seq : dataset_) {
    seq.validate();
    if (seq.alpha.empty() || seq.fg.empty()) throw UsageError("trainer: dataset lacks ground truth");
    if (seq.length() < cfg_.frames) throw UsageError("trainer: sequence shorter than train.frames");
  }
  if (cfg_.sched.total_steps == 0) cfg_.sched.total_steps = cfg_.iters;
}

template <typename T>
int64_t Trainer<T>::phase1_end() const {
  return static_cast<int64_t>(std::floor(cfg_.phase_split * static_cast<double>(cfg_.iters)));
}

template <typename T>
void Trainer<T>::one_iteration(int64_t step, TrainResult<T>& result) {
  const bool use_oracle = model_.config().flow == FlowProviderKind::Oracle;
  Rng iter_rng = Rng(cfg_.seed).child("iter", static_cast<uint64_t>(step));

  // assemble the batch
  std::vector<FrameSequence<T>> batch;
  std::vector<uint64_t> batch_seeds;
  for (int64_t b = 0; b < cfg_.batch; ++b) {
    const size_t idx = static_cast<size_t>(iter_rng.next_below(dataset_.size()));
    const uint64_t aug_seed = iter_rng.next_u64();
    batch_seeds.push_back(aug_seed);
    const FrameSequence<T>& src = dataset_[idx];
    FrameSequence<T> clip = cfg_.augment_enabled ? augment(src, cfg_.aug, aug_seed) : src;
    batch.push_back(std::move(clip));
  }
  const int64_t N = cfg_.frames;
  std::vector<Tensor<T>> frames(static_cast<size_t>(N)), alphas(static_cast<size_t>(N)),
      fgs(static_cast<size_t>(N)), flows;
  for (int64_t t = 0; t < N; ++t) {
    std::vector<Tensor<T>> f, a, g;
    for (const auto& clip : batch) {
      f.push_back(clip.frames[static_cast<size_t>(t)]);
      a.push_back(clip.alpha[static_cast<size_t>(t)]);
      g.push_back(clip.fg[static_cast<size_t>(t)]);
    }
    frames[static_cast<size_t>(t)] = stack_batch<T>(f);
    alphas[static_cast<size_t>(t)] = stack_batch<T>(a);
    fgs[static_cast<size_t>(t)] = stack_batch<T>(g);
  }
  if (use_oracle) {
    for (int64_t t = 0; t < N; ++t) {
      std::vector<Tensor<T>> fl;
      for (const auto& clip : batch) {
        if (clip.flow.empty()) throw UsageError("oracle flow requested but dataset lacks flow");
        fl.push_back(clip.flow[static_cast<size_t>(t)]);
      }
      flows.push_back(stack_batch<T>(fl));
    }
  }

  // forward / backward
  Tape<T> tape(true);
  BoundParams<T> bound = model_.bind(tape);
  RolloutOutputs<T> out = model_.rollout(tape, bound, frames, flows);
  LossNodes<T> loss = total_loss<T>(tape, out.alpha, alphas, out.fg, fgs, cfg_.loss);
  const double loss_value = static_cast<double>(tape.item(loss.total));
  if (!std::isfinite(loss_value)) {
    std::string seeds;
    for (uint64_t s : batch_seeds) seeds += std::to_string(s) + " ";
    throw NumericError("non-finite loss at step " + std::to_string(step) + "; batch aug seeds: " + seeds);
  }
  tape.backward(loss.total);

  std::map<std::string, Tensor<T>> grads;
  for (const auto& [name, e] : model_.params().entries()) {
    if (e.frozen) continue;
    grads.emplace(name, tape.grad(bound.at(name)));
  }
  clip_gradients(grads);
  const double lr = cfg_.sched.lr(step);
  opt_.step(model_.params(), grads, lr);

  LogRow row;
  row.step = step;
  row.lr = lr;
  row.loss = loss_value;
  row.l1a = static_cast<double>(tape.item(loss.l1_alpha));
  row.lap = static_cast<double>(tape.item(loss.lap_alpha));
  row.l1fg = static_cast<double>(tape.item(loss.l1_fg));
  result.log.push_back(row);
}

template <typename T>
TrainResult<T> Trainer<T>::run(int64_t from_step) {
  TrainResult<T> result;
  const bool writes = !cfg_.out_dir.empty();
  std::ofstream log_file;
  if (writes) {
    std::filesystem::create_directories(cfg_.out_dir);
    log_file.open(cfg_.out_dir + "/train_log.txt", from_step == 0 ? std::ios::trunc : std::ios::app);
  }
  const int64_t boundary = phase1_end();
  const bool manages_flow = model_.config().flow == FlowProviderKind::Tiny &&
                            model_.config().ablation == Ablation::Motion;
  for (int64_t step = from_step; step < cfg_.iters; ++step) {
    if (manages_flow) model_.params().set_frozen_prefix("flow.", step < boundary);
    one_iteration(step, result);
    const LogRow& row = result.log.back();
    if (writes && cfg_.log_every > 0 && step % cfg_.log_every == 0) {
      log_file << row.step << " " << row.lr << " " << row.loss << " " << row.l1a << " " << row.lap
               << " " << row.l1fg << "\n";
      log_file.flush();
    }
    const int64_t next = step + 1;
    if (writes && cfg_.ckpt_every > 0 && (next % cfg_.ckpt_every == 0 || next == cfg_.iters)) {
      char name[64];
      std::snprintf(name, sizeof name, "/ckpt_%06lld.cmck", static_cast<long long>(next));
      save_checkpoint(cfg_.out_dir + name, model_.params(), opt_, static_cast<uint64_t>(next),
                      cfg_.seed);
      save_checkpoint(cfg_.out_dir + "/ckpt_latest.cmck", model_.params(), opt_,
                      static_cast<uint64_t>(next), cfg_.seed);
    }
    if (on_step) on_step(step);
    result.final_step = next;
    if (stop_after && stop_after(step)) break;
  }
  return result;
}

template <typename T>
TrainResult<T> Trainer<T>::resume(const std::string& ckpt_path) {
  uint64_t root_seed = cfg_.seed;
  const uint64_t step = load_checkpoint(ckpt_path, model_.params(), &opt_, &root_seed);
  cfg_.seed = root_seed;
  return run(static_cast<int64_t>(step));
}

#define CMNET_INSTANTIATE_TRAIN(T)                                                               \
  template class AdamW<T>;                                                                       \
  template void clip_gradients<T>(std::map<std::string, Tensor<T>>&, T, T);                      \
  template void save_checkpoint<T>(const std::string&, const ParamStore<T>&, const AdamW<T>&,    \
                                   uint64_t, uint64_t);                                          \
  template uint64_t load_checkpoint<T>(const std::string&, ParamStore<T>&, AdamW<T>*, uint64_t*); \
  template Tensor<T> stack_batch<T>(std::span<const Tensor<T>>);                                 \
  template class Trainer<T>;

CMNET_INSTANTIATE_TRAIN(float)
CMNET_INSTANTIATE_TRAIN(double)
#undef CMNET_INSTANTIATE_TRAIN

}  // namespace cmnet
