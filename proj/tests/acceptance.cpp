// Acceptance suite: one pass/fail line per criterion. Run with no arguments
// for all criteria, or with criterion numbers (e.g. "acceptance 1 4 8").

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "cmnet/data.hpp"
#include "cmnet/experiments.hpp"
#include "cmnet/gradcheck.hpp"
#include "cmnet/loss.hpp"
#include "cmnet/train.hpp"
#include "metric_oracles.hpp"

using namespace cmnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

template <typename T>
Tensor<T> rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
uint64_t hash_prefix(const ParamStore<T>& store, const std::string& prefix) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, e] : store.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(e.value.data(), static_cast<size_t>(e.value.numel()) * sizeof(T), h);
  }
  return h;
}

// 1. Gradient suite: every differentiable op and the 2-frame 8x8 micro-model
//    under central differences, max rel err < 1e-4 (double), < 2 min.
Outcome criterion_gradients() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport report = run_gradcheck_suite(8, 42);
  const double secs =
      std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - t0)
          .count();
  for (const auto& e : report.entries)
    out.require(e.max_rel_err < 1e-4,
                e.name + " err " + std::to_string(e.max_rel_err));
  out.require(secs < 120.0, "runtime " + std::to_string(secs) + "s");
  char buf[96];
  std::snprintf(buf, sizeof buf, "worst %.2e over %zu checks in %.1fs", report.worst(),
                report.entries.size(), secs);
  out.note(buf);
  return out;
}

// 2. Algebraic identities.
Outcome criterion_identities() {
  Outcome out;
  Rng rng(2024);

  {  // backwarp with zero flow is bitwise identity
    Tensor<double> img = rand_tensor<double>(Shape{1, 4, 13, 11}, rng);
    Tape<double> t;
    NodeId warped = t.backwarp(t.leaf(img), t.leaf(Tensor<double>::zeros(Shape{1, 2, 13, 11})));
    bool bitwise = true;
    for (int64_t i = 0; i < img.numel(); ++i) bitwise &= t.value(warped).data()[i] == img.data()[i];
    out.require(bitwise, "backwarp zero-flow identity");
  }

  {  // GRU limits
    const int64_t hidden = 5, input = 7;
    SepConvGRU<double> gru("gru", input, hidden);
    ParamStore<double> store;
    gru.init(store, Rng(7));
    Tensor<double> h0 = rand_tensor<double>(Shape{1, hidden, 6, 6}, rng, -0.9, 0.9);
    Tensor<double> x = rand_tensor<double>(Shape{1, input, 6, 6}, rng);
    auto set_z = [&](double v) {
      for (const char* n : {"gru.z1.bias", "gru.z2.bias"}) {
        Tensor<double>& b = store.value(n);
        for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = v;
      }
    };
    set_z(-1e4);
    {
      Tape<double> t;
      auto bound = bind_params(t, store);
      const Tensor<double>& h = t.value(gru.step(t, bound, t.leaf(h0), t.leaf(x)));
      double d = 0;
      for (int64_t i = 0; i < h.numel(); ++i) d = std::max(d, std::abs(h.data()[i] - h0.data()[i]));
      out.require(d < 1e-6, "gru z->0 limit, delta " + std::to_string(d));
    }
    set_z(1e4);
    {
      Tape<double> t;
      auto bound = bind_params(t, store);
      const Tensor<double>& h = t.value(gru.step(t, bound, t.leaf(h0), t.leaf(x)));
      // with z == 1 the update equals the candidate chain
      auto half = [&](Tape<double>& m, BoundParams<double>& mb, NodeId hprev, const char* r,
                      const char* hc, int ph, int pw) {
        std::vector<NodeId> hx{hprev, m.leaf(x)};
        NodeId cat = m.concat_channels(hx);
        NodeId rt = m.sigmoid(m.conv2d(cat, mb.at(std::string(r) + ".weight"),
                                       mb.at(std::string(r) + ".bias"), 1, ph, pw));
        std::vector<NodeId> rhx{m.mul(rt, hprev), m.leaf(x)};
        return m.tanh_(m.conv2d(m.concat_channels(rhx), mb.at(std::string(hc) + ".weight"),
                                mb.at(std::string(hc) + ".bias"), 1, ph, pw));
      };
      Tape<double> m;
      auto mb = bind_params(m, store);
      NodeId mid = half(m, mb, m.leaf(h0), "gru.r1", "gru.h1", 0, 2);
      NodeId cand = half(m, mb, mid, "gru.r2", "gru.h2", 2, 0);
      double d = 0;
      for (int64_t i = 0; i < h.numel(); ++i)
        d = std::max(d, std::abs(h.data()[i] - m.value(cand).data()[i]));
      out.require(d < 1e-6, "gru z->1 limit, delta " + std::to_string(d));
    }
  }

  {  // Laplacian pyramid reconstruction
    Tensor<double> img = rand_tensor<double>(Shape{1, 1, 32, 32}, rng, 0.0, 1.0);
    Tape<double> t;
    std::vector<NodeId> bands = laplacian_pyramid(t, t.leaf(img), 5);
    const Tensor<double>& rebuilt = t.value(rebuild_pyramid<double>(t, bands));
    double d = 0;
    for (int64_t i = 0; i < img.numel(); ++i)
      d = std::max(d, std::abs(rebuilt.data()[i] - img.data()[i]));
    out.require(d < 1e-6, "pyramid reconstruction err " + std::to_string(d));
  }

  {  // composite at alpha in {0,1}
    Tensor<double> fg = rand_tensor<double>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> bg = rand_tensor<double>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> ones = Tensor<double>::full(Shape{1, 1, 8, 8}, 1.0);
    Tensor<double> zeros = Tensor<double>::zeros(Shape{1, 1, 8, 8});
    bool exact = true;
    Tensor<double> cf = composite(fg, bg, ones);
    Tensor<double> cb = composite(fg, bg, zeros);
    for (int64_t i = 0; i < fg.numel(); ++i) {
      exact &= cf.data()[i] == fg.data()[i];
      exact &= cb.data()[i] == bg.data()[i];
    }
    out.require(exact, "composite alpha 0/1 exactness");
  }
  return out;
}

// 3. Metric oracle equivalence.
Outcome criterion_metric_oracles() {
  Outcome out;
  double worst_basic = 0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(10000 + seed);
    Tensor<double> p = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> g = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    worst_basic = std::max(worst_basic, std::abs(metric_sad(p, g) - oracles::sad(p, g)));
    worst_basic = std::max(worst_basic, std::abs(metric_mse(p, g) - oracles::mse(p, g)));
    Tensor<double> pf = rand_tensor<double>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> gf = rand_tensor<double>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> mask = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, -0.5, 1.0);
    for (int64_t i = 0; i < mask.numel(); ++i) mask.data()[i] = std::max(0.0, mask.data()[i]);
    worst_basic =
        std::max(worst_basic, std::abs(metric_fg_mse(pf, gf, mask, nullptr) - oracles::fg_mse(pf, gf, mask)));
  }
  out.require(worst_basic < 1e-10, "sad/mse/fg_mse vs brute force, worst " + std::to_string(worst_basic));

  bool conn_exact = true;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(20000 + seed);
    Tensor<double> p = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> g = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    conn_exact &= metric_conn(p, g, 0.1, 0.15) == oracles::conn(p, g, 0.1, 0.15);
  }
  out.require(conn_exact, "conn vs flood-fill oracle exact equality");

  double worst_grad = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(30000 + seed);
    Tensor<double> p = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    Tensor<double> g = rand_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
    worst_grad = std::max(worst_grad, std::abs(metric_grad(p, g, 1.4) - oracles::grad(p, g, 1.4)));
  }
  out.require(worst_grad < 1e-8, "grad vs straight-loop oracle, worst " + std::to_string(worst_grad));
  return out;
}

// 4. Optimizer/schedule exactness.
Outcome criterion_optimizer() {
  Outcome out;
  {
    ParamStore<double> store;
    store.add("w.weight", Tensor<double>::full(Shape{1, 1, 1, 1}, 1.0));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("w.weight", Tensor<double>::full(Shape{1, 1, 1, 1}, 1.0));
    double m1 = 0, m2 = 0, theta = 1.0;
    for (int t = 1; t <= 2; ++t) {
      m1 = 0.9 * m1 + 0.1;
      m2 = 0.999 * m2 + 0.001;
      theta -= 0.1 * ((m1 / (1.0 - std::pow(0.9, t))) /
                      (std::sqrt(m2 / (1.0 - std::pow(0.999, t))) + 1e-8));
      opt.step(store, grads, 0.1);
      out.require(std::abs(store.value("w.weight").data()[0] - theta) < 1e-12,
                  "adamw step " + std::to_string(t));
    }
  }
  {
    OneCycleSchedule s;
    s.max_lr = 1e-4;
    s.total_steps = 1000;
    out.require(std::abs(s.lr(0) - 4e-6) < 1e-12, "onecycle lr(0)");
    out.require(std::abs(s.lr(300) - 1e-4) < 1e-12, "onecycle lr(0.3T)");
    out.require(std::abs(s.lr(1000) - 4e-10) < 1e-12, "onecycle lr(T)");
  }
  return out;
}

// 5. Overfit experiment: oracle flow, motion config, one 3-frame 64x64
//    sequence, <= 2000 iterations, raw alpha MSE < 1e-3, 200-step window
//    averages of the total loss decreasing, < 15 min.
Outcome criterion_overfit() {
  Outcome out;
  OverfitOptions opt;  // 64x64, motion + oracle, max 2000 iters
  OverfitResult res = run_overfit<float>(opt);
  out.require(res.alpha_mse < 1e-3, "alpha mse " + std::to_string(res.alpha_mse));
  out.require(res.windows_monotone, "200-step loss windows not monotone");
  out.require(res.seconds < 900.0, "runtime " + std::to_string(res.seconds) + "s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "steps %lld, alpha mse %.2e, %.0fs", static_cast<long long>(res.steps),
                res.alpha_mse, res.seconds);
  out.note(buf);
  // regression check recorded with the criterion: re-reading one frame keeps
  // the hidden-state delta non-increasing after step 3
  bool settled = true;
  for (size_t i = 3; i < res.hidden_deltas.size(); ++i)
    settled &= res.hidden_deltas[i] <= res.hidden_deltas[i - 1];
  out.require(settled, "hidden-state deltas not settling");
  return out;
}

// 6. Ablation ordering on the occlusion benchmark.
Outcome criterion_ablation() {
  Outcome out;
  AblationOptions opt;  // 20 eval sequences, oracle flow, 5000 iters, 3 seeds
  AblationResult res = run_ablation<float>(opt);
  std::ostringstream table;
  table << "\n" << res.table();
  out.note(table.str());
  const double b = res.mean_sad(0), g = res.mean_sad(1), m = res.mean_sad(2);
  const double sb = res.std_sad(0), sg = res.std_sad(1), sm = res.std_sad(2);
  char buf[200];
  std::snprintf(buf, sizeof buf, "baseline %.5f+-%.5f, gru %.5f+-%.5f, motion %.5f+-%.5f", b, sb, g,
                sg, m, sm);
  out.note(buf);
  out.require((b - g) > std::max(sb, sg), "+ConvGRU does not beat Baseline by > seed std");
  out.require((g - m) > std::max(sg, sm), "+Motion does not beat +ConvGRU by > seed std");
  return out;
}

// 7. Two-phase schedule with the tiny flow provider.
Outcome criterion_two_phase() {
  Outcome out;
  GeneratorConfig gc;
  gc.width = 32;
  gc.height = 32;
  gc.frames = 3;
  FrameSequence<float> seq = generate_sequence<float>(gc, 7);

  ModelConfig mc;
  mc.flow = FlowProviderKind::Tiny;
  mc.ablation = Ablation::Motion;
  mc.reduction = 4;
  mc.context_channels = 32;
  mc.hidden_channels = 32;
  Model<float> model(mc);
  model.init_params(21);

  TrainConfig tc;
  tc.iters = 200;
  tc.batch = 1;
  tc.frames = 3;
  tc.seed = 21;
  tc.augment_enabled = false;
  tc.loss.lap_levels = 4;
  tc.sched.max_lr = 1e-3;
  tc.phase_split = 0.5;
  Trainer<float> trainer(model, tc, {seq});

  const uint64_t h0 = hash_prefix(model.params(), "flow.");
  std::vector<uint64_t> hashes;
  trainer.on_step = [&](int64_t) { hashes.push_back(hash_prefix(model.params(), "flow.")); };
  trainer.run();
  const int64_t boundary = trainer.phase1_end();
  bool constant_phase1 = true;
  for (int64_t i = 0; i < boundary; ++i) constant_phase1 &= hashes[static_cast<size_t>(i)] == h0;
  out.require(constant_phase1, "flow.* changed during phase 1");
  out.require(hashes.back() != h0, "flow.* unchanged by end of phase 2");
  return out;
}

// 8. Format round-trips and magic rejection.
Outcome criterion_formats() {
  Outcome out;
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "cmnet_acceptance_fmt").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(4242);

  {  // image: 16-bit png bitwise on the 16-bit grid
    Tensor<float> img(Shape{1, 3, 6, 5});
    for (int64_t i = 0; i < img.numel(); ++i)
      img.data()[i] = static_cast<float>(rng.next_below(65536)) / 65535.0f;
    write_image(dir + "/img.png", img, 16);
    Tensor<float> back = read_image<float>(dir + "/img.png");
    bool ok = true;
    for (int64_t i = 0; i < img.numel(); ++i) ok &= back.data()[i] == img.data()[i];
    out.require(ok, "png 16-bit roundtrip");
    std::ofstream bad(dir + "/bad.png", std::ios::binary);
    bad << "XXXXXXXXXXXX";
    bad.close();
    try {
      read_image<float>(dir + "/bad.png");
      out.require(false, "corrupt png accepted");
    } catch (const FormatError&) {
    }
  }

  {  // flow
    Tensor<float> flow = rand_tensor<float>(Shape{1, 2, 7, 4}, rng, -5.0, 5.0);
    write_flo(dir + "/f.flo", flow);
    Tensor<float> back = read_flo<float>(dir + "/f.flo");
    bool ok = true;
    for (int64_t i = 0; i < flow.numel(); ++i) ok &= back.data()[i] == flow.data()[i];
    out.require(ok, "flo roundtrip");
    std::ofstream bad(dir + "/bad.flo", std::ios::binary);
    const float magic = 202021.24f;
    const int32_t one = 1;
    bad.write(reinterpret_cast<const char*>(&magic), 4);
    bad.write(reinterpret_cast<const char*>(&one), 4);
    bad.write(reinterpret_cast<const char*>(&one), 4);
    bad.close();
    try {
      read_flo<float>(dir + "/bad.flo");
      out.require(false, "corrupt flo accepted");
    } catch (const FormatError&) {
    }
  }

  {  // checkpoint
    ModelConfig mc;
    mc.reduction = 4;
    mc.context_channels = 16;
    mc.hidden_channels = 16;
    Model<float> model(mc);
    model.init_params(5);
    AdamW<float> opt(AdamWConfig{});
    std::map<std::string, Tensor<float>> grads;
    for (const auto& name : model.params().names())
      grads.emplace(name, rand_tensor<float>(model.params().value(name).shape(), rng, -0.1, 0.1));
    opt.step(model.params(), grads, 1e-3);
    save_checkpoint(dir + "/a.cmck", model.params(), opt, 7, 99);
    ParamStore<float> params;
    AdamW<float> opt2(AdamWConfig{});
    uint64_t seed = 0;
    const uint64_t step = load_checkpoint(dir + "/a.cmck", params, &opt2, &seed);
    save_checkpoint(dir + "/b.cmck", params, opt2, step, seed);
    std::ifstream fa(dir + "/a.cmck", std::ios::binary), fb(dir + "/b.cmck", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    out.require(!sa.empty() && sa == sb, "checkpoint save->load->save bytes");
    std::ofstream bad(dir + "/bad.cmck", std::ios::binary);
    bad << "JUNKJUNKJUNK";
    bad.close();
    try {
      ParamStore<float> sink;
      load_checkpoint<float>(dir + "/bad.cmck", sink, nullptr, nullptr);
      out.require(false, "corrupt checkpoint accepted");
    } catch (const FormatError&) {
    }
  }
  return out;
}

struct Criterion {
  int number;
  const char* title;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite < 1e-4 (double), < 2 min", criterion_gradients},
      {2, "algebraic identities", criterion_identities},
      {3, "metric oracle equivalence", criterion_metric_oracles},
      {4, "optimizer/schedule exactness", criterion_optimizer},
      {5, "overfit: alpha MSE < 1e-3, monotone loss windows, < 15 min", criterion_overfit},
      {6, "ablation ordering: Motion < +ConvGRU < Baseline", criterion_ablation},
      {7, "two-phase flow freeze/unfreeze", criterion_two_phase},
      {8, "format round-trips and magic rejection", criterion_formats},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.number) == wanted.end()) continue;
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.note(std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d: %s%s%s\n", out.pass ? "PASS" : "FAIL", c.number, c.title,
                out.detail.empty() ? "" : " -- ", out.detail.c_str());
    std::fflush(stdout);
    all_pass &= out.pass;
  }
  return all_pass ? 0 : 1;
}
