#pragma once

#include <map>
#include <string>
#include <vector>

#include "cmnet/config.hpp"
#include "cmnet/rng.hpp"
#include "cmnet/tensor.hpp"

namespace cmnet {

// A synthetic clip with ground truth. All lists share one length and one
// resolution; flow[0] is zero flow; occlusion masks are in-memory only
// (regenerate by seed rather than serializing them).
template <typename T>
struct FrameSequence {
  std::vector<Tensor<T>> frames;     // (1,3,H,W) in [0,1]
  std::vector<Tensor<T>> alpha;      // (1,1,H,W) in [0,1]
  std::vector<Tensor<T>> fg;         // (1,3,H,W)
  std::vector<Tensor<T>> flow;       // (1,2,H,W) backward, pixel units
  std::vector<Tensor<T>> occlusion;  // (1,1,H,W), 1 = flow invalid near here
  std::map<std::string, std::string> meta;

  int64_t length() const { return static_cast<int64_t>(frames.size()); }
  Shape frame_shape() const { return frames.empty() ? Shape{} : frames[0].shape(); }
  void validate() const;
};

struct GeneratorConfig {
  int64_t width = 64, height = 64;
  int64_t frames = 3;
  int sprites = 2;
  bool occlusion = true;
  double max_translation = 4.0;     // sprite speed bound, px/frame per axis
  double max_bg_translation = 2.0;  // background scroll bound
  double feather_min = 1.0, feather_max = 3.0;
  double sprite_contrast = 0.5;  // 0 = background-camouflaged sprite texture

  static GeneratorConfig from(const Config& cfg);
};

// Eq.-1 exact linear blend. alpha must lie in [0,1].
template <typename T>
Tensor<T> composite(const Tensor<T>& fg, const Tensor<T>& bg, const Tensor<T>& alpha);

// Textured feathered sprites over a scrolling textured background, with
// exact alpha, foreground, backward flow, and occlusion masks. Deterministic
// in (cfg, seed).
template <typename T>
FrameSequence<T> generate_sequence(const GeneratorConfig& cfg, uint64_t seed);

struct AugmentConfig {
  int64_t crop = 64;
  bool flip = true;
  double brightness_lo = 1.0, brightness_hi = 1.0;
  double contrast_lo = 1.0, contrast_hi = 1.0;
  double hue_lo = 1.0, hue_hi = 1.0;  // interpreted as +-(hi-1) turns of the hue circle
  double saturation_lo = 1.0, saturation_hi = 1.0;
  double gamma_lo = 1.0, gamma_hi = 1.0;
  double noise_sigma = 0.0;  // optional Gaussian frame noise (compression-noise stand-in)

  static AugmentConfig from(const Config& cfg);
};

// Shared random crop + horizontal flip across all channels; color jitter on
// the foreground frames; alpha gamma; flow cropped with values unchanged and
// u negated under flip. One draw of each factor per sequence.
template <typename T>
FrameSequence<T> augment(const FrameSequence<T>& seq, const AugmentConfig& cfg, uint64_t seed);

// Stage kept so the pipeline shape matches video-compression augmentation;
// codec simulation is out of scope and this is the identity.
template <typename T>
FrameSequence<T> compression_noise_stage(FrameSequence<T> seq) {
  return seq;
}

enum class TrimapLabel : uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

struct Trimap {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> labels;  // TrimapLabel values, row-major

  TrimapLabel at(int64_t y, int64_t x) const { return static_cast<TrimapLabel>(labels[y * w + x]); }
};

// Unknown band: square (Chebyshev) dilation of the fractional-alpha set plus
// the inner boundary of {alpha >= 0.5}; fg = exact-1 region minus the band.
template <typename T>
Trimap dilate_trimap(const Tensor<T>& alpha, int radius);

// ---- file I/O ----

// PNG (8/16-bit gray or RGB) and binary PPM/PGM by extension. Values scale
// to [0,1] on read; writes clamp then quantize to the requested depth.
template <typename T>
Tensor<T> read_image(const std::string& path);
template <typename T>
void write_image(const std::string& path, const Tensor<T>& img, int bit_depth = 16);

// Middlebury .flo (float magic 202021.25, little-endian).
template <typename T>
Tensor<T> read_flo(const std::string& path);
template <typename T>
void write_flo(const std::string& path, const Tensor<T>& flow);

// Dataset layout: <root>/<seq_id>/frame_%03d.png, alpha_%03d.png,
// fg_%03d.png, flow_%03d.flo, meta.txt.
template <typename T>
void save_sequence(const std::string& dir, const FrameSequence<T>& seq);
template <typename T>
FrameSequence<T> load_sequence(const std::string& dir);
std::vector<std::string> list_sequence_dirs(const std::string& root);

void write_trimap_image(const std::string& path, const Trimap& trimap);

}  // namespace cmnet
