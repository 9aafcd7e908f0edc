#include <algorithm>
#include <cmath>

#include "cmnet/data.hpp"

namespace cmnet {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Sum-of-sinusoids texture, smooth and exactly evaluable at fractional
// coordinates; amplitude budget keeps values inside [0.05, 0.95].
struct SinTexture {
  static constexpr int kWaves = 4;
  double amp[3][kWaves];
  double wx[3][kWaves], wy[3][kWaves], phase[3][kWaves];

  static SinTexture random(Rng& rng) {
    SinTexture t;
    for (int c = 0; c < 3; ++c) {
      double raw[kWaves];
      double total = 0;
      for (int k = 0; k < kWaves; ++k) {
        raw[k] = rng.uniform(0.2, 1.0);
        total += raw[k];
      }
      const double budget = rng.uniform(0.25, 0.45);
      for (int k = 0; k < kWaves; ++k) {
        t.amp[c][k] = raw[k] / total * budget;
        const double dir = rng.uniform(0.0, kTwoPi);
        const double mag = rng.uniform(0.08, 0.45);
        t.wx[c][k] = mag * std::cos(dir);
        t.wy[c][k] = mag * std::sin(dir);
        t.phase[c][k] = rng.uniform(0.0, kTwoPi);
      }
    }
    return t;
  }

  double eval(int c, double x, double y) const {
    double v = 0.5;
    for (int k = 0; k < kWaves; ++k) v += amp[c][k] * std::sin(wx[c][k] * x + wy[c][k] * y + phase[c][k]);
    return v;
  }
};

struct SpriteSpec {
  double cx0 = 0, cy0 = 0;
  double vx = 0, vy = 0;
  double radius = 0;
  double feather = 1;
  double tex_offset_x = 0, tex_offset_y = 0;
  SinTexture tex;

  double cx(double t) const { return cx0 + vx * t; }
  double cy(double t) const { return cy0 + vy * t; }

  // 1 inside the core, Gaussian falloff over the feather band, 0 past 3 sigma
  double alpha_at(double x, double y, double t) const {
    const double dx = x - cx(t), dy = y - cy(t);
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d <= radius) return 1.0;
    if (d >= radius + 3.0 * feather) return 0.0;
    const double e = (d - radius) / feather;
    return std::exp(-0.5 * e * e);
  }
};

struct SceneSpec {
  SinTexture bg;
  double bg_vx = 0, bg_vy = 0;
  std::vector<SpriteSpec> sprites;
  double sprite_contrast = 0.5;

  double bg_at(int c, double x, double y, double t) const {
    return bg.eval(c, x - bg_vx * t, y - bg_vy * t);
  }
  double sprite_color(const SpriteSpec& s, int c, double x, double y, double t) const {
    const double lx = x - s.cx(t), ly = y - s.cy(t);
    const double camo = bg.eval(c, lx + s.tex_offset_x, ly + s.tex_offset_y);
    const double own = s.tex.eval(c, lx, ly);
    return (1.0 - sprite_contrast) * camo + sprite_contrast * own;
  }

  // topmost sprite whose visible coverage exceeds 0.5, else background (-1)
  int id_at(double x, double y, double t) const {
    double transmitted = 1.0;
    for (size_t i = 0; i < sprites.size(); ++i) {
      const double a = sprites[i].alpha_at(x, y, t);
      if (transmitted * a > 0.5) return static_cast<int>(i);
      transmitted *= 1.0 - a;
    }
    return -1;
  }

  double total_alpha(double x, double y, double t) const {
    double transmitted = 1.0;
    for (const SpriteSpec& s : sprites) transmitted *= 1.0 - s.alpha_at(x, y, t);
    return 1.0 - transmitted;
  }

  void velocity_of(int id, double& vx, double& vy) const {
    if (id < 0) {
      vx = bg_vx;
      vy = bg_vy;
    } else {
      vx = sprites[static_cast<size_t>(id)].vx;
      vy = sprites[static_cast<size_t>(id)].vy;
    }
  }
};

SceneSpec build_scene(const GeneratorConfig& cfg, Rng& rng) {
  SceneSpec scene;
  scene.bg = SinTexture::random(rng);
  scene.bg_vx = rng.uniform(-cfg.max_bg_translation, cfg.max_bg_translation);
  scene.bg_vy = rng.uniform(-cfg.max_bg_translation, cfg.max_bg_translation);
  scene.sprite_contrast = cfg.sprite_contrast;

  const double side = static_cast<double>(std::min(cfg.width, cfg.height));
  int nsprites = cfg.sprites;
  if (cfg.occlusion && nsprites < 2) nsprites = 2;

  auto draw_velocity = [&](double other_vx, double other_vy) {
    double vx = 0, vy = 0;
    for (int attempt = 0; attempt < 20; ++attempt) {
      vx = rng.uniform(-cfg.max_translation, cfg.max_translation);
      vy = rng.uniform(-cfg.max_translation, cfg.max_translation);
      if (std::max(std::abs(vx - other_vx), std::abs(vy - other_vy)) >= 0.75) break;
    }
    // guarantee relative motion even if sampling kept colliding
    if (std::max(std::abs(vx - other_vx), std::abs(vy - other_vy)) < 0.75)
      vx = other_vx + (vx >= other_vx ? 1.0 : -1.0);
    return std::pair{vx, vy};
  };

  for (int i = 0; i < nsprites; ++i) {
    SpriteSpec s;
    s.radius = rng.uniform(side / 6.0, side / 3.5);
    s.feather = rng.uniform(cfg.feather_min, cfg.feather_max);
    auto [vx, vy] = draw_velocity(scene.bg_vx, scene.bg_vy);
    s.vx = vx;
    s.vy = vy;
    s.tex = SinTexture::random(rng);
    s.tex_offset_x = rng.uniform(0.0, 37.0);
    s.tex_offset_y = rng.uniform(0.0, 37.0);
    s.cx0 = rng.uniform(s.radius, cfg.width - 1 - s.radius);
    s.cy0 = rng.uniform(s.radius, cfg.height - 1 - s.radius);
    scene.sprites.push_back(s);
  }

  if (cfg.occlusion && scene.sprites.size() >= 2) {
    // route the first two sprites through a shared meet point mid-sequence so
    // one covers and then reveals the other
    SpriteSpec& a = scene.sprites[0];
    SpriteSpec& b = scene.sprites[1];
    if (std::max(std::abs(a.vx - b.vx), std::abs(a.vy - b.vy)) < 1.0) {
      b.vx = a.vx + (b.vx >= a.vx ? 1.5 : -1.5);
      b.vy = a.vy + (b.vy >= a.vy ? 1.0 : -1.0);
    }
    const double t_meet = static_cast<double>(cfg.frames - 1) / 2.0;
    const double mx = cfg.width / 2.0 + rng.uniform(-cfg.width / 8.0, cfg.width / 8.0);
    const double my = cfg.height / 2.0 + rng.uniform(-cfg.height / 8.0, cfg.height / 8.0);
    const double jit = std::min(a.radius, b.radius) / 4.0;
    a.cx0 = mx - a.vx * t_meet + rng.uniform(-jit, jit);
    a.cy0 = my - a.vy * t_meet + rng.uniform(-jit, jit);
    b.cx0 = mx - b.vx * t_meet + rng.uniform(-jit, jit);
    b.cy0 = my - b.vy * t_meet + rng.uniform(-jit, jit);
  }
  return scene;
}

template <typename T>
void store_meta(FrameSequence<T>& seq, const GeneratorConfig& cfg, uint64_t seed,
                const SceneSpec& scene) {
  auto put = [&](const std::string& k, double v) { seq.meta[k] = std::to_string(v); };
  seq.meta["seed"] = std::to_string(seed);
  seq.meta["width"] = std::to_string(cfg.width);
  seq.meta["height"] = std::to_string(cfg.height);
  seq.meta["frames"] = std::to_string(cfg.frames);
  seq.meta["occlusion"] = cfg.occlusion ? "1" : "0";
  seq.meta["sprites"] = std::to_string(scene.sprites.size());
  put("bg.vx", scene.bg_vx);
  put("bg.vy", scene.bg_vy);
  for (size_t i = 0; i < scene.sprites.size(); ++i) {
    const std::string p = "sprite" + std::to_string(i) + ".";
    const SpriteSpec& s = scene.sprites[i];
    put(p + "vx", s.vx);
    put(p + "vy", s.vy);
    put(p + "radius", s.radius);
    put(p + "feather", s.feather);
    put(p + "cx0", s.cx0);
    put(p + "cy0", s.cy0);
  }
}

}  // namespace

GeneratorConfig GeneratorConfig::from(const Config& cfg) {
  GeneratorConfig g;
  g.width = cfg.integer("data.width");
  g.height = cfg.integer("data.height");
  g.frames = cfg.integer("data.frames");
  g.sprites = static_cast<int>(cfg.integer("data.sprites"));
  g.occlusion = cfg.boolean("data.occlusion");
  g.max_translation = cfg.real("data.max_translation");
  g.sprite_contrast = cfg.real("data.sprite_contrast");
  return g;
}

template <typename T>
void FrameSequence<T>::validate() const {
  if (frames.empty()) throw ValidationError("sequence has no frames");
  const Shape s = frames[0].shape();
  auto check_list = [&](const std::vector<Tensor<T>>& v, int64_t c, const char* what) {
    if (v.empty()) return;
    if (v.size() != frames.size()) throw ValidationError(std::string(what) + ": length mismatch");
    for (const auto& t : v) {
      const Shape ts = t.shape();
      if (ts.n != s.n || ts.h != s.h || ts.w != s.w || ts.c != c)
        throw ValidationError(std::string(what) + ": bad shape " + ts.str());
    }
  };
  check_list(alpha, 1, "alpha");
  check_list(fg, 3, "fg");
  check_list(flow, 2, "flow");
  check_list(occlusion, 1, "occlusion");
  if (!flow.empty()) {
    for (int64_t i = 0; i < flow[0].numel(); ++i) {
      if (flow[0].data()[i] != T(0)) throw ValidationError("flow[0] must be zero");
    }
  }
}

template <typename T>
Tensor<T> composite(const Tensor<T>& fg, const Tensor<T>& bg, const Tensor<T>& alpha) {
  const Shape fs = fg.shape(), as = alpha.shape();
  if (!(fs == bg.shape()) || as.n != fs.n || as.h != fs.h || as.w != fs.w || as.c != 1)
    throw ShapeError("composite: inconsistent shapes");
  for (int64_t i = 0; i < alpha.numel(); ++i) {
    const T a = alpha.data()[i];
    if (!(a >= T(0) && a <= T(1))) throw ValidationError("composite: alpha outside [0,1]");
  }
  Tensor<T> out(fs);
  const int64_t plane = fs.h * fs.w;
  for (int64_t n = 0; n < fs.n; ++n) {
    const T* ap = alpha.data() + n * plane;
    for (int64_t c = 0; c < fs.c; ++c) {
      const T* fp = fg.data() + (n * fs.c + c) * plane;
      const T* bp = bg.data() + (n * fs.c + c) * plane;
      T* op = out.data() + (n * fs.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) op[i] = ap[i] * fp[i] + (T(1) - ap[i]) * bp[i];
    }
  }
  return out;
}

template <typename T>
FrameSequence<T> generate_sequence(const GeneratorConfig& cfg, uint64_t seed) {
  Rng rng = Rng(seed).child("generate");
  SceneSpec scene = build_scene(cfg, rng);

  FrameSequence<T> seq;
  const int64_t H = cfg.height, W = cfg.width;
  const Shape rgb{1, 3, H, W}, mono{1, 1, H, W}, two{1, 2, H, W};

  for (int64_t t = 0; t < cfg.frames; ++t) {
    const double td = static_cast<double>(t);
    Tensor<T> alpha(mono), fgimg(rgb), bgimg(rgb);
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const double xd = static_cast<double>(x), yd = static_cast<double>(y);
        // front-to-back over compositing of sprite layers
        double a_total = 0, transmitted = 1.0, wsum[3] = {0, 0, 0};
        for (const SpriteSpec& s : scene.sprites) {
          const double a = s.alpha_at(xd, yd, td);
          const double wgt = transmitted * a;
          if (wgt > 0) {
            for (int c = 0; c < 3; ++c) wsum[c] += wgt * scene.sprite_color(s, c, xd, yd, td);
          }
          a_total += wgt;
          transmitted *= 1.0 - a;
        }
        alpha.at(0, 0, y, x) = static_cast<T>(a_total);
        for (int c = 0; c < 3; ++c) {
          bgimg.at(0, c, y, x) = static_cast<T>(scene.bg_at(c, xd, yd, td));
          fgimg.at(0, c, y, x) = static_cast<T>(a_total > 0 ? wsum[c] / a_total : 0.0);
        }
      }
    }
    seq.alpha.push_back(alpha);
    seq.fg.push_back(fgimg);
    seq.frames.push_back(composite(fgimg, bgimg, alpha));

    Tensor<T> flow(two), occl(mono);
    if (t > 0) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          const double xd = static_cast<double>(x), yd = static_cast<double>(y);
          const int id = scene.id_at(xd, yd, td);
          double vx, vy;
          scene.velocity_of(id, vx, vy);
          flow.at(0, 0, y, x) = static_cast<T>(-vx);
          flow.at(0, 1, y, x) = static_cast<T>(-vy);
          const double qx = xd - vx, qy = yd - vy;
          const int id_src = scene.id_at(qx, qy, td - 1.0);
          const double a_here = scene.total_alpha(xd, yd, td);
          const double a_src = scene.total_alpha(qx, qy, td - 1.0);
          const bool fractional = (a_here > 1e-4 && a_here < 1.0 - 1e-4) ||
                                  (a_src > 1e-4 && a_src < 1.0 - 1e-4);
          occl.at(0, 0, y, x) = static_cast<T>((id != id_src || fractional) ? 1 : 0);
        }
      }
    }
    seq.flow.push_back(flow);
    seq.occlusion.push_back(occl);
  }
  store_meta(seq, cfg, seed, scene);
  return seq;
}

AugmentConfig AugmentConfig::from(const Config& cfg) {
  AugmentConfig a;
  a.crop = cfg.integer("aug.crop");
  a.flip = cfg.boolean("aug.flip");
  a.brightness_lo = cfg.real("aug.brightness_lo");
  a.brightness_hi = cfg.real("aug.brightness_hi");
  a.contrast_lo = cfg.real("aug.contrast_lo");
  a.contrast_hi = cfg.real("aug.contrast_hi");
  a.hue_lo = cfg.real("aug.hue_lo");
  a.hue_hi = cfg.real("aug.hue_hi");
  a.saturation_lo = cfg.real("aug.saturation_lo");
  a.saturation_hi = cfg.real("aug.saturation_hi");
  a.gamma_lo = cfg.real("aug.gamma_lo");
  a.gamma_hi = cfg.real("aug.gamma_hi");
  a.noise_sigma = cfg.real("aug.noise_sigma");
  return a;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  const double d = mx - mn;
  s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int i = std::min(5, static_cast<int>(hh));
  const double f = hh - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

template <typename T>
Tensor<T> crop_tensor(const Tensor<T>& t, int64_t y0, int64_t x0, int64_t size) {
  const Shape s = t.shape();
  Tensor<T> out(Shape{s.n, s.c, size, size});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) out.at(n, c, y, x) = t.at(n, c, y0 + y, x0 + x);
  return out;
}

template <typename T>
Tensor<T> hflip_tensor(const Tensor<T>& t, bool negate_channel0) {
  const Shape s = t.shape();
  Tensor<T> out(s);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x) {
          T v = t.at(n, c, y, s.w - 1 - x);
          if (negate_channel0 && c == 0) v = -v;
          out.at(n, c, y, x) = v;
        }
  return out;
}

}  // namespace

template <typename T>
FrameSequence<T> augment(const FrameSequence<T>& seq, const AugmentConfig& cfg, uint64_t seed) {
  const Shape fs = seq.frame_shape();
  if (cfg.crop > fs.h || cfg.crop > fs.w)
    throw UsageError("augment: crop " + std::to_string(cfg.crop) + " larger than frame " + fs.str());
  Rng rng = Rng(seed).child("augment");
  const int64_t y0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(fs.h - cfg.crop + 1)));
  const int64_t x0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(fs.w - cfg.crop + 1)));
  const bool flip = cfg.flip && rng.next_double() < 0.5;
  const double brightness = rng.uniform(cfg.brightness_lo, cfg.brightness_hi);
  const double contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
  const double hue_shift = rng.uniform(cfg.hue_lo, cfg.hue_hi) - 1.0;  // turns
  const double saturation = rng.uniform(cfg.saturation_lo, cfg.saturation_hi);
  const double gamma = rng.uniform(cfg.gamma_lo, cfg.gamma_hi);

  const bool jitter_active = brightness != 1.0 || contrast != 1.0 || hue_shift != 0.0 || saturation != 1.0;

  FrameSequence<T> out;
  out.meta = seq.meta;
  auto window = [&](const Tensor<T>& t, bool is_flow) {
    Tensor<T> c = crop_tensor(t, y0, x0, cfg.crop);
    if (flip) c = hflip_tensor(c, is_flow);
    return c;
  };

  for (int64_t t = 0; t < seq.length(); ++t) {
    Tensor<T> frame = window(seq.frames[static_cast<size_t>(t)], false);
    if (cfg.noise_sigma > 0) {
      for (int64_t i = 0; i < frame.numel(); ++i) {
        const double v = static_cast<double>(frame.data()[i]) + rng.normal() * cfg.noise_sigma;
        frame.data()[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
    out.frames.push_back(std::move(frame));

    if (!seq.alpha.empty()) {
      Tensor<T> a = window(seq.alpha[static_cast<size_t>(t)], false);
      if (gamma != 1.0) {
        for (int64_t i = 0; i < a.numel(); ++i)
          a.data()[i] = static_cast<T>(std::pow(static_cast<double>(a.data()[i]), gamma));
      }
      out.alpha.push_back(std::move(a));
    }
    if (!seq.fg.empty()) {
      Tensor<T> f = window(seq.fg[static_cast<size_t>(t)], false);
      if (jitter_active) {
        const int64_t plane = f.shape().plane();
        T* r = f.data();
        T* g = f.data() + plane;
        T* b = f.data() + 2 * plane;
        for (int64_t i = 0; i < plane; ++i) {
          double rr = r[i] * brightness, gg = g[i] * brightness, bb = b[i] * brightness;
          rr = (rr - 0.5) * contrast + 0.5;
          gg = (gg - 0.5) * contrast + 0.5;
          bb = (bb - 0.5) * contrast + 0.5;
          if (hue_shift != 0.0 || saturation != 1.0) {
            double h, s, v;
            rgb_to_hsv(std::clamp(rr, 0.0, 1.0), std::clamp(gg, 0.0, 1.0), std::clamp(bb, 0.0, 1.0), h,
                       s, v);
            h += hue_shift;
            s = std::clamp(s * saturation, 0.0, 1.0);
            hsv_to_rgb(h, s, v, rr, gg, bb);
          }
          r[i] = static_cast<T>(std::clamp(rr, 0.0, 1.0));
          g[i] = static_cast<T>(std::clamp(gg, 0.0, 1.0));
          b[i] = static_cast<T>(std::clamp(bb, 0.0, 1.0));
        }
      }
      out.fg.push_back(std::move(f));
    }
    if (!seq.flow.empty()) out.flow.push_back(window(seq.flow[static_cast<size_t>(t)], true));
    if (!seq.occlusion.empty())
      out.occlusion.push_back(window(seq.occlusion[static_cast<size_t>(t)], false));
  }
  return compression_noise_stage(std::move(out));
}

template <typename T>
Trimap dilate_trimap(const Tensor<T>& alpha, int radius) {
  if (radius < 1) throw UsageError("dilate_trimap: radius must be >= 1");
  const Shape s = alpha.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("dilate_trimap: expects (1,1,H,W) alpha");
  const int64_t h = s.h, w = s.w;
  auto a = [&](int64_t y, int64_t x) { return alpha.at(0, 0, y, x); };

  std::vector<uint8_t> band(static_cast<size_t>(h * w), 0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const T v = a(y, x);
      bool mark = v > T(0) && v < T(1);
      if (!mark && v >= T(0.5)) {
        // inner boundary of the alpha>=0.5 region
        const bool edge = (y > 0 && a(y - 1, x) < T(0.5)) || (y + 1 < h && a(y + 1, x) < T(0.5)) ||
                          (x > 0 && a(y, x - 1) < T(0.5)) || (x + 1 < w && a(y, x + 1) < T(0.5));
        mark = edge;
      }
      band[static_cast<size_t>(y * w + x)] = mark ? 1 : 0;
    }
  }

  // separable Chebyshev (square) dilation
  std::vector<uint8_t> tmp(band.size(), 0), dil(band.size(), 0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int64_t k = std::max<int64_t>(0, x - radius); k <= std::min<int64_t>(w - 1, x + radius); ++k)
        v |= band[static_cast<size_t>(y * w + k)];
      tmp[static_cast<size_t>(y * w + x)] = v;
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      uint8_t v = 0;
      for (int64_t k = std::max<int64_t>(0, y - radius); k <= std::min<int64_t>(h - 1, y + radius); ++k)
        v |= tmp[static_cast<size_t>(k * w + x)];
      dil[static_cast<size_t>(y * w + x)] = v;
    }
  }

  Trimap tri;
  tri.h = h;
  tri.w = w;
  tri.labels.resize(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) {
    if (dil[static_cast<size_t>(i)])
      tri.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(TrimapLabel::Unknown);
    else if (alpha.data()[i] == T(1))
      tri.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(TrimapLabel::Foreground);
    else
      tri.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(TrimapLabel::Background);
  }
  return tri;
}

#define CMNET_INSTANTIATE_DATA(T)                                                       \
  template struct FrameSequence<T>;                                                     \
  template Tensor<T> composite<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template FrameSequence<T> generate_sequence<T>(const GeneratorConfig&, uint64_t);     \
  template FrameSequence<T> augment<T>(const FrameSequence<T>&, const AugmentConfig&, uint64_t); \
  template Trimap dilate_trimap<T>(const Tensor<T>&, int);

CMNET_INSTANTIATE_DATA(float)
CMNET_INSTANTIATE_DATA(double)
#undef CMNET_INSTANTIATE_DATA

}  // namespace cmnet
