#include <cmath>

#include "cmnet/gradcheck.hpp"
#include "cmnet/loss.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace cmnet;
using cmnet::testing::max_abs_diff;
using cmnet::testing::random_tensor;

namespace {

// straight-loop pyramid, independent of the tape implementation
struct PyramidOracle {
  static int64_t mirror(int64_t i, int64_t lim) {
    if (i < 0) return -i;
    if (i >= lim) return 2 * lim - 2 - i;
    return i;
  }

  static std::vector<std::vector<double>> run(const Tensor<double>& x, int levels, int64_t& h0,
                                              int64_t& w0) {
    const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    h0 = x.shape().h;
    w0 = x.shape().w;
    std::vector<double> g(static_cast<size_t>(h0 * w0));
    for (int64_t i = 0; i < h0 * w0; ++i) g[static_cast<size_t>(i)] = x.data()[i];
    int64_t h = h0, w = w0;
    std::vector<std::vector<double>> bands;
    for (int lvl = 0; lvl < levels - 1; ++lvl) {
      // blur with reflect borders
      std::vector<double> t(g.size()), b(g.size());
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x2 = 0; x2 < w; ++x2) {
          double acc = 0;
          for (int64_t j = -2; j <= 2; ++j) acc += k[j + 2] * g[static_cast<size_t>(mirror(y + j, h) * w + x2)];
          t[static_cast<size_t>(y * w + x2)] = acc;
        }
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x2 = 0; x2 < w; ++x2) {
          double acc = 0;
          for (int64_t j = -2; j <= 2; ++j) acc += k[j + 2] * t[static_cast<size_t>(y * w + mirror(x2 + j, w))];
          b[static_cast<size_t>(y * w + x2)] = acc;
        }
      // decimate even rows/cols
      const int64_t h2 = h / 2, w2 = w / 2;
      std::vector<double> down(static_cast<size_t>(h2 * w2));
      for (int64_t y = 0; y < h2; ++y)
        for (int64_t x2 = 0; x2 < w2; ++x2)
          down[static_cast<size_t>(y * w2 + x2)] = b[static_cast<size_t>(2 * y * w + 2 * x2)];
      // bilinear x2 upsample (align-corners=false, border clamp)
      std::vector<double> up(static_cast<size_t>(h * w));
      auto coord = [](int64_t i, int64_t lim) {
        double s = (i + 0.5) * 0.5 - 0.5;
        return std::min(std::max(s, 0.0), static_cast<double>(lim - 1));
      };
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x2 = 0; x2 < w; ++x2) {
          const double sy = coord(y, h2), sx = coord(x2, w2);
          const int64_t y0 = static_cast<int64_t>(std::floor(sy)), x0 = static_cast<int64_t>(std::floor(sx));
          const int64_t y1 = std::min(y0 + 1, h2 - 1), x1 = std::min(x0 + 1, w2 - 1);
          const double fy = sy - y0, fx = sx - x0;
          up[static_cast<size_t>(y * w + x2)] =
              (1 - fy) * ((1 - fx) * down[static_cast<size_t>(y0 * w2 + x0)] + fx * down[static_cast<size_t>(y0 * w2 + x1)]) +
              fy * ((1 - fx) * down[static_cast<size_t>(y1 * w2 + x0)] + fx * down[static_cast<size_t>(y1 * w2 + x1)]);
        }
      std::vector<double> band(static_cast<size_t>(h * w));
      for (int64_t i = 0; i < h * w; ++i) band[static_cast<size_t>(i)] = g[static_cast<size_t>(i)] - up[static_cast<size_t>(i)];
      bands.push_back(std::move(band));
      g = std::move(down);
      h = h2;
      w = w2;
    }
    bands.push_back(std::move(g));
    return bands;
  }
};

}  // namespace

TEST_CASE("alpha_l1 examples") {
  Tape<double> t;
  NodeId a = t.leaf(Tensor<double>::full(Shape{1, 1, 4, 4}, 0.25));
  NodeId b = t.leaf(Tensor<double>::full(Shape{1, 1, 4, 4}, 0.75));
  CHECK(t.item(alpha_l1(t, a, a)) == 0.0);
  CHECK(t.item(alpha_l1(t, a, b)) == doctest::Approx(0.5).epsilon(1e-12));
  NodeId z = t.leaf(Tensor<double>::zeros(Shape{1, 1, 4, 4}));
  NodeId o = t.leaf(Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0));
  CHECK(t.item(alpha_l1(t, z, o)) == 1.0);
}

TEST_CASE("laplacian pyramid reconstruction and structure") {
  Rng rng(101);
  Tensor<double> img = random_tensor<double>(Shape{1, 1, 32, 32}, rng, 0.0, 1.0);

  Tape<double> t;
  NodeId x = t.leaf(img);
  std::vector<NodeId> bands = laplacian_pyramid(t, x, 5);
  REQUIRE(bands.size() == 5);
  CHECK(t.value(bands[0]).shape() == Shape{1, 1, 32, 32});
  CHECK(t.value(bands[4]).shape() == Shape{1, 1, 2, 2});

  SUBCASE("reconstruction is exact to 1e-6") {
    NodeId rebuilt = rebuild_pyramid<double>(t, bands);
    CHECK(max_abs_diff(t.value(rebuilt), img) < 1e-6);
  }

  SUBCASE("constant image has zero difference bands") {
    NodeId c = t.leaf(Tensor<double>::full(Shape{1, 1, 32, 32}, 0.4));
    std::vector<NodeId> cb = laplacian_pyramid(t, c, 5);
    for (int i = 0; i < 4; ++i) {
      const Tensor<double>& band = t.value(cb[static_cast<size_t>(i)]);
      for (int64_t j = 0; j < band.numel(); ++j) CHECK(std::abs(band.data()[j]) < 1e-12);
    }
    const Tensor<double>& coarse = t.value(cb[4]);
    for (int64_t j = 0; j < coarse.numel(); ++j)
      CHECK(coarse.data()[j] == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("matches the straight-loop oracle and frozen band energies") {
    int64_t h0, w0;
    auto oracle = PyramidOracle::run(img, 5, h0, w0);
    double energies[5];
    for (int i = 0; i < 5; ++i) {
      const Tensor<double>& band = t.value(bands[static_cast<size_t>(i)]);
      REQUIRE(band.numel() == static_cast<int64_t>(oracle[static_cast<size_t>(i)].size()));
      double mean_abs = 0;
      for (int64_t j = 0; j < band.numel(); ++j) {
        CHECK(std::abs(band.data()[j] - oracle[static_cast<size_t>(i)][static_cast<size_t>(j)]) < 1e-12);
        mean_abs += std::abs(band.data()[j]);
      }
      energies[i] = mean_abs / static_cast<double>(band.numel());
    }
    // golden values frozen from the first verified run (seed 101 image)
    const double frozen[5] = {0.23077445587573164, 0.051298464864470032, 0.026421903770573844,
                              0.017199620219480776, 0.5035280527639433};
    for (int i = 0; i < 5; ++i) CHECK(energies[i] == doctest::Approx(frozen[i]).epsilon(1e-9));
  }

  SUBCASE("indivisible dims raise") {
    NodeId bad = t.leaf(Tensor<double>::zeros(Shape{1, 1, 24, 24}));
    CHECK_THROWS_AS(laplacian_pyramid(t, bad, 5), ShapeError);
  }
}

TEST_CASE("lap_loss weights and symmetry") {
  Rng rng(103);
  Tensor<double> p = random_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> g = random_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
  Tape<double> t;
  NodeId np = t.leaf(p), ng = t.leaf(g);
  const int levels = 4;  // 16x16 supports 4 levels

  CHECK(t.item(lap_loss(t, np, np, levels)) == 0.0);

  // weights are exactly 1,2,4,8(,16): recompute from the per-level bands
  auto bp = laplacian_pyramid(t, np, levels);
  auto bg = laplacian_pyramid(t, ng, levels);
  double expect = 0;
  for (int i = 0; i < levels; ++i) {
    const double w = static_cast<double>(1 << i);
    expect += w * t.item(t.l1_against(bp[static_cast<size_t>(i)], bg[static_cast<size_t>(i)]));
  }
  const double got = t.item(lap_loss(t, np, ng, levels));
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));

  CHECK(t.item(lap_loss(t, ng, np, levels)) == doctest::Approx(got).epsilon(1e-12));
}

TEST_CASE("fg_l1 masking") {
  Tape<double> t;
  Rng rng(105);
  Tensor<double> pred = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0.0, 1.0);
  Tensor<double> gt = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0.0, 1.0);

  SUBCASE("empty mask gives zero") {
    Tensor<double> alpha = Tensor<double>::zeros(Shape{1, 1, 4, 4});
    CHECK(t.item(fg_l1(t, t.leaf(pred), t.leaf(gt), alpha)) == 0.0);
  }
  SUBCASE("full mask, equal inputs give zero") {
    Tensor<double> alpha = Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0);
    CHECK(t.item(fg_l1(t, t.leaf(pred), t.leaf(pred), alpha)) == 0.0);
  }
  SUBCASE("mean runs over the masked region only") {
    Tensor<double> alpha = Tensor<double>::zeros(Shape{1, 1, 4, 4});
    for (int64_t x = 0; x < 4; ++x) alpha.at(0, 0, 0, x) = 1.0;  // one row masked
    Tensor<double> a = Tensor<double>::zeros(Shape{1, 3, 4, 4});
    Tensor<double> b = Tensor<double>::zeros(Shape{1, 3, 4, 4});
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t x = 0; x < 4; ++x) b.at(0, c, 0, x) = 0.2;
    CHECK(t.item(fg_l1(t, t.leaf(a), t.leaf(b), alpha)) == doctest::Approx(0.2).epsilon(1e-12));
  }
}

TEST_CASE("total loss follows the frame sum with 0.1 fg weight") {
  Rng rng(107);
  const Shape as{1, 1, 16, 16}, fs{1, 3, 16, 16};
  std::vector<Tensor<double>> alpha_gt{random_tensor<double>(as, rng, 0.0, 1.0),
                                       random_tensor<double>(as, rng, 0.0, 1.0)};
  std::vector<Tensor<double>> fg_gt{random_tensor<double>(fs, rng, 0.0, 1.0),
                                    random_tensor<double>(fs, rng, 0.0, 1.0)};
  Tape<double> t;
  std::vector<NodeId> ap{t.leaf(random_tensor<double>(as, rng, 0.0, 1.0)),
                         t.leaf(random_tensor<double>(as, rng, 0.0, 1.0))};
  std::vector<NodeId> fp{t.leaf(random_tensor<double>(fs, rng, 0.0, 1.0)),
                         t.leaf(random_tensor<double>(fs, rng, 0.0, 1.0))};
  LossConfig cfg;
  cfg.lap_levels = 4;
  LossNodes<double> nodes = total_loss<double>(t, ap, alpha_gt, fp, fg_gt, cfg);
  const double total = t.item(nodes.total);
  CHECK(total == doctest::Approx(t.item(nodes.l1_alpha) + t.item(nodes.lap_alpha) +
                                 0.1 * t.item(nodes.l1_fg))
                     .epsilon(1e-12));
  CHECK(t.item(nodes.l1_alpha) >= 0.0);
  CHECK(t.item(nodes.lap_alpha) >= 0.0);
  CHECK(t.item(nodes.l1_fg) >= 0.0);

  // doubling identical frames doubles the total
  std::vector<Tensor<double>> a1{alpha_gt[0]}, f1{fg_gt[0]};
  std::vector<NodeId> ap1{ap[0]}, fp1{fp[0]};
  LossNodes<double> one = total_loss<double>(t, ap1, a1, fp1, f1, cfg);
  std::vector<Tensor<double>> a2{alpha_gt[0], alpha_gt[0]}, f2{fg_gt[0], fg_gt[0]};
  std::vector<NodeId> ap2{ap[0], ap[0]}, fp2{fp[0], fp[0]};
  LossNodes<double> two = total_loss<double>(t, ap2, a2, fp2, f2, cfg);
  CHECK(t.item(two.total) == doctest::Approx(2.0 * t.item(one.total)).epsilon(1e-12));

  std::vector<NodeId> none;
  std::vector<Tensor<double>> none_t;
  CHECK_THROWS_AS(total_loss<double>(t, none, none_t, none, none_t, cfg), UsageError);
}

TEST_CASE("loss gradients pass grad_check at 1e-5") {
  Rng rng(109);
  Tensor<double> gt = random_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> pred = random_tensor<double>(Shape{1, 1, 16, 16}, rng, 0.05, 0.95);
  GradCheckOptions opt;
  opt.eps = 1e-6;

  double e1 = grad_check(
      [&](Tape<double>& t, NodeId id) { return alpha_l1(t, id, t.constant(gt)); }, pred, opt);
  CHECK(e1 < 1e-5);

  double e2 = grad_check(
      [&](Tape<double>& t, NodeId id) { return lap_loss(t, id, t.constant(gt), 4); }, pred, opt);
  CHECK(e2 < 1e-5);

  Tensor<double> fg_gt = random_tensor<double>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensor<double> fg_pred = random_tensor<double>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensor<double> mask_alpha = random_tensor<double>(Shape{1, 1, 8, 8}, rng, -0.5, 1.0);
  for (int64_t i = 0; i < mask_alpha.numel(); ++i)
    mask_alpha.data()[i] = std::max(0.0, mask_alpha.data()[i]);
  double e3 = grad_check(
      [&](Tape<double>& t, NodeId id) { return fg_l1(t, id, t.constant(fg_gt), mask_alpha); }, fg_pred,
      opt);
  CHECK(e3 < 1e-5);
}
