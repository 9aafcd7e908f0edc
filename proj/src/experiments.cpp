#include "cmnet/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "cmnet/gradcheck.hpp"

namespace cmnet {

namespace {

template <typename T>
Tensor<T> rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

int lap_levels_for(int64_t size) {
  // divisibility by 2^(L-1) plus reflect-pad(2) viability at the coarsest blur
  int levels = 1;
  while (levels < 5 && size % (int64_t(1) << levels) == 0 && (size >> (levels - 1)) >= 3) ++levels;
  return levels;
}

template <typename T>
double raw_alpha_mse(Model<T>& model, const FrameSequence<T>& seq) {
  Tape<T> tape(false);
  BoundParams<T> bound = model.bind(tape);
  const bool oracle = model.config().flow == FlowProviderKind::Oracle;
  RolloutOutputs<T> out = model.rollout(tape, bound, seq.frames,
                                        oracle ? std::span<const Tensor<T>>(seq.flow)
                                               : std::span<const Tensor<T>>());
  double acc = 0;
  int64_t count = 0;
  for (size_t t = 0; t < out.alpha.size(); ++t) {
    const Tensor<T>& pred = tape.value(out.alpha[t]);
    const Tensor<T>& gt = seq.alpha[t];
    for (int64_t i = 0; i < pred.numel(); ++i) {
      const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(gt.data()[i]);
      acc += d * d;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

GradCheckReport run_gradcheck_suite(int64_t size, uint64_t seed) {
  GradCheckReport report;
  auto add = [&](const std::string& name, double err) { report.entries.push_back({name, err}); };
  Rng rng(seed);

  const Shape s{1, 3, size, size};
  Tensor<double> x = rand_tensor<double>(s, rng);
  Tensor<double> y = rand_tensor<double>(s, rng);
  Tensor<double> w = rand_tensor<double>(Shape{2, 3, 3, 3}, rng);
  Tensor<double> b = rand_tensor<double>(Shape{1, 2, 1, 1}, rng);
  Tensor<double> flow(Shape{1, 2, size, size});
  for (int64_t i = 0; i < flow.numel(); ++i) flow.data()[i] = rng.uniform(-1.5, 1.5) + 0.25;

  using Fn = std::function<NodeId(Tape<double>&, NodeId)>;
  auto vec = [&](const char* name, const Fn& f, const Tensor<double>& at) {
    add(name, grad_check_vec(f, at, {1e-5, 40, seed ^ 0x5bd1e995}));
  };

  vec("pointwise.sigmoid", [](Tape<double>& t, NodeId id) { return t.sigmoid(id); }, x);
  vec("pointwise.tanh", [](Tape<double>& t, NodeId id) { return t.tanh_(id); }, x);
  vec("pointwise.relu", [](Tape<double>& t, NodeId id) { return t.relu(id); }, x);
  vec("pointwise.affine", [](Tape<double>& t, NodeId id) { return t.affine(id, 1.3, -0.2); }, x);
  vec("pointwise.abs", [](Tape<double>& t, NodeId id) { return t.abs_(id); }, x);
  vec("binary.add", [&](Tape<double>& t, NodeId id) { return t.add(id, t.constant(y)); }, x);
  vec("binary.sub", [&](Tape<double>& t, NodeId id) { return t.sub(t.constant(y), id); }, x);
  vec("binary.mul", [&](Tape<double>& t, NodeId id) { return t.mul(id, t.constant(y)); }, x);
  vec("concat_channels",
      [&](Tape<double>& t, NodeId id) {
        std::vector<NodeId> ids{id, t.constant(y)};
        return t.concat_channels(ids);
      },
      x);
  vec("slice_channels", [](Tape<double>& t, NodeId id) { return t.slice_channels(id, 1, 3); }, x);
  vec("conv2d.x", [&](Tape<double>& t, NodeId id) { return t.conv2d(id, t.constant(w), t.constant(b), 1, 1); },
      x);
  vec("conv2d.w", [&](Tape<double>& t, NodeId id) { return t.conv2d(t.constant(x), id, t.constant(b), 1, 1); },
      w);
  vec("conv2d.bias",
      [&](Tape<double>& t, NodeId id) { return t.conv2d(t.constant(x), t.constant(w), id, 1, 1); }, b);
  vec("conv2d.stride2",
      [&](Tape<double>& t, NodeId id) { return t.conv2d(id, t.constant(w), t.constant(b), 2, 1); }, x);
  vec("bilinear_resize",
      [&](Tape<double>& t, NodeId id) { return t.bilinear_resize(id, size * 2, size / 2, 1.5); }, x);
  vec("backwarp.x", [&](Tape<double>& t, NodeId id) { return t.backwarp(id, t.constant(flow)); }, x);
  vec("backwarp.flow", [&](Tape<double>& t, NodeId id) { return t.backwarp(t.constant(x), id); }, flow);
  vec("reflect_pad", [](Tape<double>& t, NodeId id) { return t.reflect_pad(id, 2, 2, 2, 2); }, x);
  add("reduce.sum", grad_check([](Tape<double>& t, NodeId id) { return t.sum(id); }, x));
  add("reduce.mean", grad_check([](Tape<double>& t, NodeId id) { return t.mean(id); }, x));
  add("reduce.l1_against",
      grad_check([&](Tape<double>& t, NodeId id) { return t.l1_against(id, t.constant(y)); }, x));

  // loss ops
  Tensor<double> alpha_pred = rand_tensor<double>(Shape{1, 1, size, size}, rng, 0.05, 0.95);
  Tensor<double> alpha_gt = rand_tensor<double>(Shape{1, 1, size, size}, rng, 0.0, 1.0);
  const int levels = lap_levels_for(size);
  add("loss.alpha_l1",
      grad_check([&](Tape<double>& t, NodeId id) { return alpha_l1(t, id, t.constant(alpha_gt)); },
                 alpha_pred));
  add("loss.lap",
      grad_check([&](Tape<double>& t, NodeId id) { return lap_loss(t, id, t.constant(alpha_gt), levels); },
                 alpha_pred));
  Tensor<double> fg_pred = rand_tensor<double>(Shape{1, 3, size, size}, rng, 0.0, 1.0);
  Tensor<double> fg_gt = rand_tensor<double>(Shape{1, 3, size, size}, rng, 0.0, 1.0);
  Tensor<double> mask = alpha_gt.clone();
  for (int64_t i = 0; i < mask.numel(); ++i) mask.data()[i] = std::max(0.0, mask.data()[i] - 0.3);
  add("loss.fg_l1",
      grad_check([&](Tape<double>& t, NodeId id) { return fg_l1(t, id, t.constant(fg_gt), mask); },
                 fg_pred));

  // gru step w.r.t. the hidden state
  {
    SepConvGRU<double> gru("gru", 3, 4);
    ParamStore<double> store;
    gru.init(store, rng.child("gru"));
    Tensor<double> h = rand_tensor<double>(Shape{1, 4, size, size}, rng, -0.9, 0.9);
    vec("gru_step.h",
        [&](Tape<double>& t, NodeId id) {
          auto bound = bind_params(t, store);
          return gru.step(t, bound, id, t.constant(x));
        },
        h);
  }

  // full model end to end: 2 frames, 20 sampled parameters
  {
    ModelConfig mc;
    mc.reduction = 4;
    mc.context_channels = 16;
    mc.hidden_channels = 16;
    mc.flow = FlowProviderKind::Tiny;
    mc.ablation = Ablation::Motion;
    Model<double> model(mc);
    model.init_params(seed ^ 0xabcdef);
    // Move the zero-initialized flow output layers off the degenerate point
    // so every parameter has a live gradient path, and bias the predicted
    // flow ~0.3px off integer displacements so central differences never
    // straddle a bilinear kink.
    Rng jostle = rng.child("flow-jostle");
    for (const auto& name : model.params().names()) {
      if (name.rfind("flow.", 0) != 0 || name.find(".conv2.") == std::string::npos) continue;
      Tensor<double>& t = model.params().value(name);
      if (name.find(".bias") != std::string::npos) {
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = jostle.uniform(0.25, 0.45);
      } else {
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = jostle.uniform(-0.02, 0.02);
      }
    }

    GeneratorConfig gc;
    gc.width = size;
    gc.height = size;
    gc.frames = 2;
    FrameSequence<double> seq = generate_sequence<double>(gc, seed ^ 0x1357);
    LossConfig lc;
    lc.lap_levels = levels;

    auto loss_value = [&]() {
      Tape<double> t(false);
      BoundParams<double> bound = model.bind(t);
      RolloutOutputs<double> out = model.rollout(t, bound, seq.frames, {});
      return static_cast<double>(
          t.item(total_loss<double>(t, out.alpha, seq.alpha, out.fg, seq.fg, lc).total));
    };

    Tape<double> t(true);
    BoundParams<double> bound = model.bind(t);
    RolloutOutputs<double> out = model.rollout(t, bound, seq.frames, {});
    t.backward(total_loss<double>(t, out.alpha, seq.alpha, out.fg, seq.fg, lc).total);

    Rng pick = rng.child("param-pick");
    const std::vector<std::string> names = model.params().names();
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
      const std::string& name = names[static_cast<size_t>(pick.next_below(names.size()))];
      Tensor<double>& storage = model.params().value(name);
      const int64_t coord = static_cast<int64_t>(pick.next_below(static_cast<uint64_t>(storage.numel())));
      Tensor<double> analytic = t.grad(bound.at(name));
      // Per-coordinate eps sweep: a relu/bilinear kink inside the stencil
      // fails at large eps and vanishes at small eps, roundoff noise does the
      // opposite, and a real gradient defect fails at every eps.
      double err = 1e9;
      for (double eps : {1e-5, 1e-6, 1e-7})
        err = std::min(err, fd_max_rel_err(loss_value, storage, analytic, {coord}, eps));
#ifdef CMNET_GRADCHECK_TRACE
      std::fprintf(stderr, "e2e %-34s c%lld err %.3e a %.3e\n", name.c_str(),
                   static_cast<long long>(coord), err, analytic.data()[coord]);
#endif
      worst = std::max(worst, err);
    }
    add("model.end_to_end", worst);
  }

  return report;
}

template <typename T>
OverfitResult run_overfit(const OverfitOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();

  GeneratorConfig gc;
  gc.width = opt.width;
  gc.height = opt.height;
  gc.frames = opt.frames;
  FrameSequence<T> seq = generate_sequence<T>(gc, opt.data_seed);

  ModelConfig mc;
  mc.flow = opt.flow;
  mc.ablation = opt.ablation;
  Model<T> model(mc);
  model.init_params(opt.train_seed);

  TrainConfig tc;
  tc.iters = opt.max_iters;
  tc.batch = 1;
  tc.frames = opt.frames;
  tc.seed = opt.train_seed;
  tc.augment_enabled = false;
  tc.out_dir = opt.out_dir;
  tc.ckpt_every = opt.out_dir.empty() ? 0 : 500;
  tc.loss.lap_levels = lap_levels_for(std::min(opt.width, opt.height));
  tc.sched.max_lr = opt.max_lr;
  tc.sched.total_steps = opt.max_iters;

  Trainer<T> trainer(model, tc, {seq});
  OverfitResult res;
  trainer.stop_after = [&](int64_t step) {
    // keep at least two full windows so the monotonicity check is meaningful
    if (step + 1 < 2 * opt.window || (step + 1) % 50 != 0) return false;
    return raw_alpha_mse(model, seq) < opt.mse_target;
  };
  TrainResult<T> tr = trainer.run();
  res.log = std::move(tr.log);
  res.steps = tr.final_step;
  res.alpha_mse = raw_alpha_mse(model, seq);

  // disjoint consecutive 200-step window means must strictly decrease
  res.windows_monotone = true;
  const size_t w = static_cast<size_t>(opt.window);
  double prev = 0;
  bool have_prev = false;
  for (size_t start = 0; start + w <= res.log.size(); start += w) {
    double mean = 0;
    for (size_t i = start; i < start + w; ++i) mean += res.log[i].loss;
    mean /= static_cast<double>(w);
    if (have_prev && mean >= prev) res.windows_monotone = false;
    prev = mean;
    have_prev = true;
  }

  // hidden-state convergence when re-reading one frame
  {
    Tape<T> tape(false);
    BoundParams<T> bound = model.bind(tape);
    StepState<T> state = model.initial_state(tape, seq.frames[0].shape());
    Tensor<T> zero_flow = Tensor<T>::zeros(seq.flow[0].shape());
    Tensor<T> prev_hidden;
    for (int rep = 0; rep < 8; ++rep) {
      auto [out, next] =
          model.forward_step(tape, bound, state, tape.constant(seq.frames[0]), seq.frames[0], &zero_flow);
      const Tensor<T>& h = tape.value(next.hidden);
      if (rep > 0) {
        double d = 0;
        for (int64_t i = 0; i < h.numel(); ++i)
          d = std::max(d, std::abs(static_cast<double>(h.data()[i]) -
                                   static_cast<double>(prev_hidden.data()[i])));
        res.hidden_deltas.push_back(d);
      }
      prev_hidden = h.clone();
      state = std::move(next);
    }
  }

  res.seconds = std::chrono::duration_cast<std::chrono::duration<double>>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return res;
}

template <typename T>
std::vector<MetricReport> evaluate_model(Model<T>& model,
                                         const std::vector<FrameSequence<T>>& sequences,
                                         const MetricConfig& mcfg, int threads) {
  std::vector<MetricReport> out(sequences.size());
  auto worker = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const FrameSequence<T>& seq = sequences[i];
      Tape<T> tape(false);
      BoundParams<T> bound = model.bind(tape);
      const bool oracle = model.config().flow == FlowProviderKind::Oracle;
      RolloutOutputs<T> ro = model.rollout(tape, bound, seq.frames,
                                           oracle ? std::span<const Tensor<T>>(seq.flow)
                                                  : std::span<const Tensor<T>>());
      std::vector<MetricReport> frames;
      for (size_t t = 0; t < ro.alpha.size(); ++t) {
        frames.push_back(evaluate_frame(tape.value(ro.alpha[t]).template cast<double>(),
                                        seq.alpha[t].template cast<double>(),
                                        tape.value(ro.fg[t]).template cast<double>(),
                                        seq.fg[t].template cast<double>(), mcfg));
      }
      out[i] = average_reports(frames);
    }
  };
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(sequences.size())));
  if (nthreads == 1) {
    worker(0, sequences.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (sequences.size() + nthreads - 1) / nthreads;
    for (int i = 0; i < nthreads; ++i) {
      const size_t begin = i * chunk;
      const size_t end = std::min(sequences.size(), begin + chunk);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

double AblationResult::mean_sad(int config) const {
  double m = 0;
  for (const auto& cell : cells[static_cast<size_t>(config)]) m += cell.mean.sad;
  return m / static_cast<double>(cells[static_cast<size_t>(config)].size());
}

double AblationResult::std_sad(int config) const {
  const double m = mean_sad(config);
  double acc = 0;
  const auto& row = cells[static_cast<size_t>(config)];
  for (const auto& cell : row) acc += (cell.mean.sad - m) * (cell.mean.sad - m);
  return std::sqrt(acc / static_cast<double>(row.size()));
}

bool AblationResult::ordering_holds() const {
  const double b = mean_sad(0), g = mean_sad(1), m = mean_sad(2);
  const double sb = std_sad(0), sg = std_sad(1), sm = std_sad(2);
  const bool gru_beats_baseline = (b - g) > std::max(sb, sg);
  const bool motion_beats_gru = (g - m) > std::max(sg, sm);
  return gru_beats_baseline && motion_beats_gru;
}

std::string AblationResult::table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %10s %10s %10s %10s", "config", "SAD(mean)",
                "SAD(std)", "MSE", "Grad", "Conn", "fgMSE");
  os << buf << "\n";
  for (size_t c = 0; c < cells.size(); ++c) {
    double mse = 0, grad = 0, conn = 0, fg = 0;
    for (const auto& cell : cells[c]) {
      mse += cell.mean.mse;
      grad += cell.mean.grad;
      conn += cell.mean.conn;
      fg += cell.mean.fg_mse;
    }
    const double n = static_cast<double>(cells[c].size());
    std::snprintf(buf, sizeof buf, "%-12s %12.5f %12.5f %10.4f %10.4f %10.4f %10.4f",
                  config_names[c].c_str(), mean_sad(static_cast<int>(c)), std_sad(static_cast<int>(c)),
                  mse / n, grad / n, conn / n, fg / n);
    os << buf << "\n";
  }
  return os.str();
}

template <typename T>
AblationResult run_ablation(const AblationOptions& opt) {
  GeneratorConfig gc;
  gc.width = opt.width;
  gc.height = opt.height;
  gc.frames = opt.frames;
  gc.occlusion = true;
  gc.sprite_contrast = opt.sprite_contrast;
  Rng root(opt.data_seed);

  std::vector<FrameSequence<T>> train_set, eval_set;
  for (int64_t i = 0; i < opt.train_sequences; ++i)
    train_set.push_back(generate_sequence<T>(gc, root.child("train", static_cast<uint64_t>(i)).state()));
  for (int64_t i = 0; i < opt.eval_sequences; ++i)
    eval_set.push_back(generate_sequence<T>(gc, root.child("eval", static_cast<uint64_t>(i)).state()));

  const Ablation configs[3] = {Ablation::Baseline, Ablation::Gru, Ablation::Motion};
  AblationResult result;
  result.cells.assign(3, std::vector<AblationCell>(opt.seeds.size()));

  struct Job {
    int config;
    size_t seed_idx;
  };
  std::vector<Job> jobs;
  for (int c = 0; c < 3; ++c)
    for (size_t s = 0; s < opt.seeds.size(); ++s) jobs.push_back({c, s});

  MetricConfig mcfg;
  auto run_job = [&](const Job& job) {
    ModelConfig mc;
    mc.reduction = opt.reduction;
    mc.context_channels = opt.context_channels;
    mc.hidden_channels = opt.hidden_channels;
    mc.flow = FlowProviderKind::Oracle;
    mc.ablation = configs[job.config];
    Model<T> model(mc);
    model.init_params(opt.seeds[job.seed_idx]);

    TrainConfig tc;
    tc.iters = opt.iters;
    tc.batch = 1;
    tc.frames = opt.frames;
    tc.seed = opt.seeds[job.seed_idx];
    tc.augment_enabled = false;
    tc.loss.lap_levels = lap_levels_for(std::min(opt.width, opt.height));
    tc.sched.max_lr = opt.max_lr;
    Trainer<T> trainer(model, tc, train_set);
    trainer.run();

    std::vector<MetricReport> reports = evaluate_model(model, eval_set, mcfg, 1);
    MetricReport agg = average_reports(reports);
    result.cells[static_cast<size_t>(job.config)][job.seed_idx] = AblationCell{agg};
  };

  if (opt.threads <= 1) {
    for (const Job& j : jobs) run_job(j);
  } else {
    std::atomic<size_t> cursor{0};
    auto worker = [&] {
      while (true) {
        const size_t i = cursor.fetch_add(1);
        if (i >= jobs.size()) return;
        run_job(jobs[i]);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < opt.threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return result;
}

template OverfitResult run_overfit<float>(const OverfitOptions&);
template OverfitResult run_overfit<double>(const OverfitOptions&);
template AblationResult run_ablation<float>(const AblationOptions&);
template std::vector<MetricReport> evaluate_model<float>(Model<float>&,
                                                         const std::vector<FrameSequence<float>>&,
                                                         const MetricConfig&, int);
template std::vector<MetricReport> evaluate_model<double>(Model<double>&,
                                                          const std::vector<FrameSequence<double>>&,
                                                          const MetricConfig&, int);

}  // namespace cmnet
