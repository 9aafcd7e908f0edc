#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmnet/data.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace cmnet;
using cmnet::testing::bitwise_equal;
using cmnet::testing::random_tensor;

namespace {

std::string temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("cmnet_test_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

GeneratorConfig small_gen(int64_t size = 32, int64_t frames = 3) {
  GeneratorConfig g;
  g.width = size;
  g.height = size;
  g.frames = frames;
  return g;
}

}  // namespace

TEST_CASE("composite follows the blend exactly") {
  Rng rng(1);
  Tensor<double> fg = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0.0, 1.0);
  Tensor<double> bg = random_tensor<double>(Shape{1, 3, 4, 4}, rng, 0.0, 1.0);

  CHECK(bitwise_equal(composite(fg, bg, Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0)), fg));
  CHECK(bitwise_equal(composite(fg, bg, Tensor<double>::full(Shape{1, 1, 4, 4}, 0.0)), bg));

  Tensor<double> half = composite(Tensor<double>::full(Shape{1, 3, 4, 4}, 1.0),
                                  Tensor<double>::zeros(Shape{1, 3, 4, 4}),
                                  Tensor<double>::full(Shape{1, 1, 4, 4}, 0.5));
  for (int64_t i = 0; i < half.numel(); ++i) CHECK(half.data()[i] == 0.5);

  Tensor<double> bad = Tensor<double>::full(Shape{1, 1, 4, 4}, 1.5);
  CHECK_THROWS_AS(composite(fg, bg, bad), ValidationError);
}

TEST_CASE("generator determinism and structure") {
  const GeneratorConfig cfg = small_gen();
  FrameSequence<double> a = generate_sequence<double>(cfg, 99);
  FrameSequence<double> b = generate_sequence<double>(cfg, 99);
  REQUIRE(a.length() == 3);
  a.validate();
  for (int64_t t = 0; t < 3; ++t) {
    CHECK(bitwise_equal(a.frames[static_cast<size_t>(t)], b.frames[static_cast<size_t>(t)]));
    CHECK(bitwise_equal(a.flow[static_cast<size_t>(t)], b.flow[static_cast<size_t>(t)]));
  }
  FrameSequence<double> c = generate_sequence<double>(cfg, 100);
  CHECK_FALSE(bitwise_equal(a.frames[0], c.frames[0]));

  // alpha hits exactly 1 somewhere (sprite core), exactly 0 somewhere (far
  // field), and has a fractional feather band
  bool has_one = false, has_zero = false, has_frac = false;
  for (int64_t i = 0; i < a.alpha[0].numel(); ++i) {
    const double v = a.alpha[0].data()[i];
    has_one = has_one || v == 1.0;
    has_zero = has_zero || v == 0.0;
    has_frac = has_frac || (v > 0.0 && v < 1.0);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(has_one);
  CHECK(has_zero);
  CHECK(has_frac);

  // frames are in range and alpha=1 pixels show the foreground exactly
  for (int64_t i = 0; i < a.frames[0].numel(); ++i) {
    CHECK(a.frames[0].data()[i] >= 0.0);
    CHECK(a.frames[0].data()[i] <= 1.0);
  }
}

TEST_CASE("emitted flow warps the previous frame onto the current one") {
  FrameSequence<double> seq = generate_sequence<double>(small_gen(48), 7);
  for (int64_t t = 1; t < seq.length(); ++t) {
    const Tensor<double>& prev = seq.frames[static_cast<size_t>(t - 1)];
    const Tensor<double>& cur = seq.frames[static_cast<size_t>(t)];
    const Tensor<double>& flow = seq.flow[static_cast<size_t>(t)];
    const Tensor<double>& occl = seq.occlusion[static_cast<size_t>(t)];
    const int64_t H = 48, W = 48;
    int64_t checked = 0, good = 0;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        if (occl.at(0, 0, y, x) > 0.5) continue;
        const double sx = x + flow.at(0, 0, y, x);
        const double sy = y + flow.at(0, 1, y, x);
        if (sx < 0 || sy < 0 || sx > W - 1 || sy > H - 1) continue;
        // brute-force bilinear sample of the previous frame
        const int64_t x0 = static_cast<int64_t>(std::floor(sx)), y0 = static_cast<int64_t>(std::floor(sy));
        const int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const double fx = sx - x0, fy = sy - y0;
        double err = 0;
        for (int64_t c = 0; c < 3; ++c) {
          const double v = (1 - fy) * ((1 - fx) * prev.at(0, c, y0, x0) + fx * prev.at(0, c, y0, x1)) +
                           fy * ((1 - fx) * prev.at(0, c, y1, x0) + fx * prev.at(0, c, y1, x1));
          err = std::max(err, std::abs(v - cur.at(0, c, y, x)));
        }
        ++checked;
        if (err < 0.05) ++good;
      }
    }
    REQUIRE(checked > 500);
    INFO("frame ", t, ": ", good, "/", checked);
    CHECK(static_cast<double>(good) >= 0.95 * static_cast<double>(checked));
  }
}

TEST_CASE("augment: collapsed ranges with full-size crop is the identity") {
  FrameSequence<double> seq = generate_sequence<double>(small_gen(), 3);
  AugmentConfig cfg;
  cfg.crop = 32;
  cfg.flip = false;
  FrameSequence<double> out = augment(seq, cfg, 1);
  for (int64_t t = 0; t < seq.length(); ++t) {
    CHECK(bitwise_equal(out.frames[static_cast<size_t>(t)], seq.frames[static_cast<size_t>(t)]));
    CHECK(bitwise_equal(out.alpha[static_cast<size_t>(t)], seq.alpha[static_cast<size_t>(t)]));
    CHECK(bitwise_equal(out.fg[static_cast<size_t>(t)], seq.fg[static_cast<size_t>(t)]));
    CHECK(bitwise_equal(out.flow[static_cast<size_t>(t)], seq.flow[static_cast<size_t>(t)]));
  }

  cfg.crop = 64;
  CHECK_THROWS_AS(augment(seq, cfg, 1), UsageError);
}

TEST_CASE("augment: gamma acts on alpha only") {
  FrameSequence<double> seq = generate_sequence<double>(small_gen(), 3);
  AugmentConfig cfg;
  cfg.crop = 32;
  cfg.flip = false;
  cfg.gamma_lo = cfg.gamma_hi = 2.0;
  FrameSequence<double> out = augment(seq, cfg, 5);
  for (int64_t i = 0; i < seq.alpha[0].numel(); ++i) {
    const double expect = std::pow(seq.alpha[0].data()[i], 2.0);
    CHECK(out.alpha[0].data()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(bitwise_equal(out.frames[0], seq.frames[0]));
  // gamma=1 is the identity on alpha
  cfg.gamma_lo = cfg.gamma_hi = 1.0;
  FrameSequence<double> same = augment(seq, cfg, 5);
  CHECK(bitwise_equal(same.alpha[0], seq.alpha[0]));
  CHECK(std::pow(0.5, 2.0) == 0.25);
}

TEST_CASE("augment: flipped flow mirrors and negates u") {
  // hand-built 4x4 flow field checked by brute-force index arithmetic
  FrameSequence<double> seq;
  Tensor<double> frame = Tensor<double>::zeros(Shape{1, 3, 4, 4});
  Tensor<double> flow(Shape{1, 2, 4, 4});
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 4; ++x) {
      flow.at(0, 0, y, x) = 10 * y + x;       // u
      flow.at(0, 1, y, x) = 100 + 10 * y + x; // v
    }
  seq.frames = {frame};
  seq.flow = {Tensor<double>::zeros(Shape{1, 2, 4, 4})};
  seq.flow[0] = flow;  // single-frame sequence; flow[0]==0 not enforced by augment

  AugmentConfig cfg;
  cfg.crop = 4;
  cfg.flip = true;
  // find a seed whose flip coin lands true
  for (uint64_t seed = 0;; ++seed) {
    FrameSequence<double> out = augment(seq, cfg, seed);
    bool flipped = out.flow[0].at(0, 0, 0, 0) != flow.at(0, 0, 0, 0);
    if (!flipped) continue;
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x) {
        CHECK(out.flow[0].at(0, 0, y, x) == -flow.at(0, 0, y, 3 - x));
        CHECK(out.flow[0].at(0, 1, y, x) == flow.at(0, 1, y, 3 - x));
      }
    break;
  }
}

TEST_CASE("augment: jitter touches fg only and clamps") {
  FrameSequence<double> seq = generate_sequence<double>(small_gen(), 9);
  AugmentConfig cfg;
  cfg.crop = 32;
  cfg.flip = false;
  cfg.brightness_lo = cfg.brightness_hi = 1.15;
  cfg.saturation_lo = cfg.saturation_hi = 1.3;
  cfg.hue_lo = cfg.hue_hi = 1.1;
  FrameSequence<double> out = augment(seq, cfg, 3);
  CHECK(bitwise_equal(out.frames[0], seq.frames[0]));
  CHECK(bitwise_equal(out.alpha[0], seq.alpha[0]));
  CHECK_FALSE(bitwise_equal(out.fg[0], seq.fg[0]));
  for (int64_t i = 0; i < out.fg[0].numel(); ++i) {
    CHECK(out.fg[0].data()[i] >= 0.0);
    CHECK(out.fg[0].data()[i] <= 1.0);
  }
}

TEST_CASE("trimap labels partition and match a brute-force oracle") {
  SUBCASE("binary step edge: radius 3 band is exactly 7 px wide") {
    Tensor<double> alpha = Tensor<double>::zeros(Shape{1, 1, 16, 16});
    for (int64_t y = 0; y < 16; ++y)
      for (int64_t x = 8; x < 16; ++x) alpha.at(0, 0, y, x) = 1.0;
    Trimap tri = dilate_trimap(alpha, 3);
    for (int64_t y = 0; y < 16; ++y) {
      for (int64_t x = 0; x < 16; ++x) {
        TrimapLabel expect;
        if (x >= 5 && x <= 11)
          expect = TrimapLabel::Unknown;  // boundary col 8 dilated by 3
        else if (x < 5)
          expect = TrimapLabel::Background;
        else
          expect = TrimapLabel::Foreground;
        CHECK(tri.at(y, x) == expect);
      }
    }
  }

  SUBCASE("all-zero and all-one alphas") {
    Tensor<double> zero = Tensor<double>::zeros(Shape{1, 1, 8, 8});
    Trimap t0 = dilate_trimap(zero, 5);
    for (uint8_t l : t0.labels) CHECK(l == static_cast<uint8_t>(TrimapLabel::Background));
    Tensor<double> one = Tensor<double>::full(Shape{1, 1, 8, 8}, 1.0);
    Trimap t1 = dilate_trimap(one, 5);
    for (uint8_t l : t1.labels) CHECK(l == static_cast<uint8_t>(TrimapLabel::Foreground));
  }

  SUBCASE("random alpha matches the O(N r^2) oracle and covers each pixel once") {
    FrameSequence<double> seq = generate_sequence<double>(small_gen(16, 1), 31);
    const Tensor<double>& alpha = seq.alpha[0];
    for (int radius : {1, 2, 4}) {
      Trimap tri = dilate_trimap(alpha, radius);
      // oracle: mark band, dilate with explicit square loop
      auto a = [&](int64_t y, int64_t x) { return alpha.at(0, 0, y, x); };
      for (int64_t y = 0; y < 16; ++y) {
        for (int64_t x = 0; x < 16; ++x) {
          bool unknown = false;
          for (int64_t dy = -radius; dy <= radius && !unknown; ++dy) {
            for (int64_t dx = -radius; dx <= radius && !unknown; ++dx) {
              const int64_t yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= 16 || xx < 0 || xx >= 16) continue;
              const double v = a(yy, xx);
              bool band = v > 0.0 && v < 1.0;
              if (!band && v >= 0.5) {
                band = (yy > 0 && a(yy - 1, xx) < 0.5) || (yy + 1 < 16 && a(yy + 1, xx) < 0.5) ||
                       (xx > 0 && a(yy, xx - 1) < 0.5) || (xx + 1 < 16 && a(yy, xx + 1) < 0.5);
              }
              unknown = unknown || band;
            }
          }
          TrimapLabel expect = unknown                ? TrimapLabel::Unknown
                               : (a(y, x) == 1.0 ? TrimapLabel::Foreground : TrimapLabel::Background);
          CHECK(tri.at(y, x) == expect);
        }
      }
    }
  }
}

TEST_CASE("image io roundtrips") {
  const std::string dir = temp_dir("img");
  Rng rng(55);

  SUBCASE("16-bit png on-grid values roundtrip bitwise") {
    Tensor<float> img(Shape{1, 3, 9, 7});
    for (int64_t i = 0; i < img.numel(); ++i)
      img.data()[i] = static_cast<float>(rng.next_below(65536)) / 65535.0f;
    write_image(dir + "/a.png", img, 16);
    Tensor<float> back = read_image<float>(dir + "/a.png");
    CHECK(bitwise_equal(back, img));
  }
  SUBCASE("8-bit png and gray png") {
    Tensor<float> img(Shape{1, 1, 5, 5});
    for (int64_t i = 0; i < img.numel(); ++i)
      img.data()[i] = static_cast<float>(rng.next_below(256)) / 255.0f;
    write_image(dir + "/g.png", img, 8);
    CHECK(bitwise_equal(read_image<float>(dir + "/g.png"), img));
  }
  SUBCASE("ppm and pgm") {
    Tensor<float> rgbv(Shape{1, 3, 4, 6});
    for (int64_t i = 0; i < rgbv.numel(); ++i)
      rgbv.data()[i] = static_cast<float>(rng.next_below(256)) / 255.0f;
    write_image(dir + "/a.ppm", rgbv, 8);
    CHECK(bitwise_equal(read_image<float>(dir + "/a.ppm"), rgbv));

    Tensor<float> gray(Shape{1, 1, 4, 6});
    for (int64_t i = 0; i < gray.numel(); ++i)
      gray.data()[i] = static_cast<float>(rng.next_below(65536)) / 65535.0f;
    write_image(dir + "/a.pgm", gray, 16);
    CHECK(bitwise_equal(read_image<float>(dir + "/a.pgm"), gray));
  }
  SUBCASE("bad magic rejected") {
    std::ofstream os(dir + "/bad.ppm", std::ios::binary);
    os << "P9\n2 2\n255\n";
    os.close();
    CHECK_THROWS_AS(read_image<float>(dir + "/bad.ppm"), FormatError);
    std::ofstream os2(dir + "/bad.png", std::ios::binary);
    os2 << "not a png at all";
    os2.close();
    CHECK_THROWS_AS(read_image<float>(dir + "/bad.png"), FormatError);
  }
}

TEST_CASE("flo io") {
  const std::string dir = temp_dir("flo");
  Rng rng(66);
  Tensor<float> flow = random_tensor<float>(Shape{1, 2, 5, 3}, rng, -8.0, 8.0);
  write_flo(dir + "/f.flo", flow);
  CHECK(bitwise_equal(read_flo<float>(dir + "/f.flo"), flow));

  // a 2x1 flow file is exactly 4+4+4+16 bytes
  Tensor<float> tiny = random_tensor<float>(Shape{1, 2, 1, 2}, rng);
  write_flo(dir + "/tiny.flo", tiny);
  CHECK(std::filesystem::file_size(dir + "/tiny.flo") == 28);

  // wrong magic
  std::ofstream os(dir + "/bad.flo", std::ios::binary);
  const float magic = 202021.24f;
  const int32_t one = 1;
  os.write(reinterpret_cast<const char*>(&magic), 4);
  os.write(reinterpret_cast<const char*>(&one), 4);
  os.write(reinterpret_cast<const char*>(&one), 4);
  const float uv[2] = {0, 0};
  os.write(reinterpret_cast<const char*>(uv), 8);
  os.close();
  CHECK_THROWS_AS(read_flo<float>(dir + "/bad.flo"), FormatError);
}

TEST_CASE("sequence save/load through the dataset layout") {
  const std::string root = temp_dir("ds");
  FrameSequence<float> seq = generate_sequence<float>(small_gen(), 123);
  save_sequence(root + "/seq_000", seq);
  save_sequence(root + "/seq_001", generate_sequence<float>(small_gen(), 124));

  auto dirs = list_sequence_dirs(root);
  REQUIRE(dirs.size() == 2);
  FrameSequence<float> back = load_sequence<float>(dirs[0]);
  REQUIRE(back.length() == seq.length());
  CHECK(back.meta.at("seed") == "123");
  // 16-bit quantization bounds the reload error
  for (int64_t t = 0; t < seq.length(); ++t) {
    for (int64_t i = 0; i < seq.frames[static_cast<size_t>(t)].numel(); ++i) {
      CHECK(std::abs(back.frames[static_cast<size_t>(t)].data()[i] -
                     seq.frames[static_cast<size_t>(t)].data()[i]) < 1.0f / 65535.0f);
    }
    CHECK(bitwise_equal(back.flow[static_cast<size_t>(t)], seq.flow[static_cast<size_t>(t)]));
  }
}
