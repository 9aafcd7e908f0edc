#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cmnet/data.hpp"

namespace fs = std::filesystem;

namespace cmnet {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

std::string lower_ext(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string e = path.substr(dot + 1);
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

uint16_t quantize(double v, int maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint16_t>(std::lround(c * maxval));
}

// ---- PNG ----

template <typename T>
Tensor<T> read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": malformed PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if ((depth != 8 && depth != 16) || (channels != 1 && channels != 3)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": unsupported PNG layout");
  }

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<T> out(Shape{1, channels, static_cast<int64_t>(h), static_cast<int64_t>(w)});
  const double maxval = depth == 8 ? 255.0 : 65535.0;
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t y = 0; y < static_cast<int64_t>(h); ++y) {
    const unsigned char* row = raw.data() + static_cast<size_t>(y) * rowbytes;
    for (int64_t x = 0; x < static_cast<int64_t>(w); ++x) {
      for (int64_t c = 0; c < channels; ++c) {
        uint32_t v;
        if (depth == 8) {
          v = row[x * channels + c];
        } else {
          const unsigned char* p = row + 2 * (x * channels + c);  // PNG 16-bit is big-endian
          v = (static_cast<uint32_t>(p[0]) << 8) | p[1];
        }
        out.data()[c * plane + y * w + x] = static_cast<T>(v / maxval);
      }
    }
  }
  return out;
}

template <typename T>
void write_png(const std::string& path, const Tensor<T>& img, int bit_depth) {
  const Shape s = img.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw UsageError("write_png: expects (1,{1,3},H,W)");
  if (bit_depth != 8 && bit_depth != 16) throw UsageError("write_png: bit depth must be 8 or 16");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path + ": PNG write failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), bit_depth,
               s.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int maxval = bit_depth == 8 ? 255 : 65535;
  const int bytes = bit_depth / 8;
  const int64_t plane = s.h * s.w;
  std::vector<unsigned char> row(static_cast<size_t>(s.w * s.c * bytes));
  for (int64_t y = 0; y < s.h; ++y) {
    for (int64_t x = 0; x < s.w; ++x) {
      for (int64_t c = 0; c < s.c; ++c) {
        const uint16_t v = quantize(static_cast<double>(img.data()[c * plane + y * s.w + x]), maxval);
        unsigned char* p = row.data() + static_cast<size_t>((x * s.c + c) * bytes);
        if (bit_depth == 8) {
          p[0] = static_cast<unsigned char>(v);
        } else {
          p[0] = static_cast<unsigned char>(v >> 8);
          p[1] = static_cast<unsigned char>(v & 0xff);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- PPM / PGM (binary) ----

int read_pnm_token(std::istream& is) {
  // skips whitespace and '#' comments
  while (true) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v;
  if (!(is >> v)) throw FormatError("malformed PNM header");
  return v;
}

template <typename T>
Tensor<T> read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  int channels;
  if (m0 == 'P' && m1 == '5')
    channels = 1;
  else if (m0 == 'P' && m1 == '6')
    channels = 3;
  else
    throw FormatError(path + ": bad PNM magic");
  const int w = read_pnm_token(is);
  const int h = read_pnm_token(is);
  const int maxval = read_pnm_token(is);
  if (w < 1 || h < 1 || (maxval != 255 && maxval != 65535))
    throw FormatError(path + ": unsupported PNM header");
  is.get();  // single whitespace after maxval

  const int bytes = maxval == 255 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels * bytes);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw FormatError(path + ": truncated PNM payload");

  Tensor<T> out(Shape{1, channels, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < static_cast<int64_t>(w) * h; ++i) {
    for (int c = 0; c < channels; ++c) {
      uint32_t v;
      const unsigned char* p = raw.data() + static_cast<size_t>((i * channels + c) * bytes);
      v = bytes == 1 ? p[0] : ((static_cast<uint32_t>(p[0]) << 8) | p[1]);  // big-endian per Netpbm
      out.data()[c * plane + i] = static_cast<T>(v / static_cast<double>(maxval));
    }
  }
  return out;
}

template <typename T>
void write_pnm(const std::string& path, const Tensor<T>& img, int bit_depth) {
  const Shape s = img.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw UsageError("write_pnm: expects (1,{1,3},H,W)");
  const std::string ext = lower_ext(path);
  if ((ext == "pgm") != (s.c == 1)) throw UsageError("write_pnm: extension/channel mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const int maxval = bit_depth == 8 ? 255 : 65535;
  os << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n" << maxval << "\n";
  const int bytes = bit_depth / 8;
  const int64_t plane = s.h * s.w;
  std::vector<unsigned char> raw(static_cast<size_t>(plane * s.c * bytes));
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < s.c; ++c) {
      const uint16_t v = quantize(static_cast<double>(img.data()[c * plane + i]), maxval);
      unsigned char* p = raw.data() + static_cast<size_t>((i * s.c + c) * bytes);
      if (bytes == 1) {
        p[0] = static_cast<unsigned char>(v);
      } else {
        p[0] = static_cast<unsigned char>(v >> 8);
        p[1] = static_cast<unsigned char>(v & 0xff);
      }
    }
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

constexpr float kFloMagic = 202021.25f;

}  // namespace

template <typename T>
Tensor<T> read_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") return read_png<T>(path);
  if (ext == "ppm" || ext == "pgm") return read_pnm<T>(path);
  throw UsageError("read_image: unsupported extension ." + ext);
}

template <typename T>
void write_image(const std::string& path, const Tensor<T>& img, int bit_depth) {
  const std::string ext = lower_ext(path);
  if (ext == "png")
    write_png(path, img, bit_depth);
  else if (ext == "ppm" || ext == "pgm")
    write_pnm(path, img, bit_depth);
  else
    throw UsageError("write_image: unsupported extension ." + ext);
}

template <typename T>
Tensor<T> read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  float magic = 0;
  int32_t w = 0, h = 0;
  is.read(reinterpret_cast<char*>(&magic), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&h), 4);
  if (!is || magic != kFloMagic) throw FormatError(path + ": bad .flo magic");
  if (w < 1 || h < 1 || w > 1 << 16 || h > 1 << 16) throw FormatError(path + ": bad .flo dims");
  std::vector<float> raw(static_cast<size_t>(w) * h * 2);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!is) throw FormatError(path + ": truncated .flo payload");
  Tensor<T> out(Shape{1, 2, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    out.data()[i] = static_cast<T>(raw[static_cast<size_t>(2 * i)]);
    out.data()[plane + i] = static_cast<T>(raw[static_cast<size_t>(2 * i + 1)]);
  }
  return out;
}

template <typename T>
void write_flo(const std::string& path, const Tensor<T>& flow) {
  const Shape s = flow.shape();
  if (s.n != 1 || s.c != 2) throw UsageError("write_flo: expects (1,2,H,W)");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const float magic = kFloMagic;
  const int32_t w = static_cast<int32_t>(s.w), h = static_cast<int32_t>(s.h);
  os.write(reinterpret_cast<const char*>(&magic), 4);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  const int64_t plane = s.h * s.w;
  std::vector<float> raw(static_cast<size_t>(plane) * 2);
  for (int64_t i = 0; i < plane; ++i) {
    raw[static_cast<size_t>(2 * i)] = static_cast<float>(flow.data()[i]);
    raw[static_cast<size_t>(2 * i + 1)] = static_cast<float>(flow.data()[plane + i]);
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

namespace {

std::string frame_name(const char* stem, int64_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d.%s", stem, static_cast<int>(i), ext);
  return buf;
}

}  // namespace

template <typename T>
void save_sequence(const std::string& dir, const FrameSequence<T>& seq) {
  seq.validate();
  fs::create_directories(dir);
  for (int64_t t = 0; t < seq.length(); ++t) {
    const size_t i = static_cast<size_t>(t);
    write_image(dir + "/" + frame_name("frame", t, "png"), seq.frames[i], 16);
    if (!seq.alpha.empty()) write_image(dir + "/" + frame_name("alpha", t, "png"), seq.alpha[i], 16);
    if (!seq.fg.empty()) write_image(dir + "/" + frame_name("fg", t, "png"), seq.fg[i], 16);
    if (!seq.flow.empty()) write_flo(dir + "/" + frame_name("flow", t, "flo"), seq.flow[i]);
  }
  std::ofstream meta(dir + "/meta.txt");
  for (const auto& [k, v] : seq.meta) meta << k << "=" << v << "\n";
}

template <typename T>
FrameSequence<T> load_sequence(const std::string& dir) {
  FrameSequence<T> seq;
  for (int64_t t = 0;; ++t) {
    const std::string frame = dir + "/" + frame_name("frame", t, "png");
    if (!fs::exists(frame)) break;
    seq.frames.push_back(read_image<T>(frame));
    const std::string alpha = dir + "/" + frame_name("alpha", t, "png");
    if (fs::exists(alpha)) seq.alpha.push_back(read_image<T>(alpha));
    const std::string fg = dir + "/" + frame_name("fg", t, "png");
    if (fs::exists(fg)) seq.fg.push_back(read_image<T>(fg));
    const std::string flo = dir + "/" + frame_name("flow", t, "flo");
    if (fs::exists(flo)) seq.flow.push_back(read_flo<T>(flo));
  }
  if (seq.frames.empty()) throw FormatError("no frames found under " + dir);
  std::ifstream meta(dir + "/meta.txt");
  std::string line;
  while (std::getline(meta, line)) {
    const size_t eq = line.find('=');
    if (eq != std::string::npos) seq.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return seq;
}

std::vector<std::string> list_sequence_dirs(const std::string& root) {
  std::vector<std::string> out;
  if (!fs::is_directory(root)) throw FormatError("dataset root is not a directory: " + root);
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "frame_000.png")) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_trimap_image(const std::string& path, const Trimap& trimap) {
  Tensor<float> img(Shape{1, 1, trimap.h, trimap.w});
  for (int64_t i = 0; i < trimap.h * trimap.w; ++i) {
    switch (static_cast<TrimapLabel>(trimap.labels[static_cast<size_t>(i)])) {
      case TrimapLabel::Background:
        img.data()[i] = 0.0f;
        break;
      case TrimapLabel::Unknown:
        img.data()[i] = 128.0f / 255.0f;
        break;
      case TrimapLabel::Foreground:
        img.data()[i] = 1.0f;
        break;
    }
  }
  write_image(path, img, 8);
}

#define CMNET_INSTANTIATE_IO(T)                                         \
  template Tensor<T> read_image<T>(const std::string&);                 \
  template void write_image<T>(const std::string&, const Tensor<T>&, int); \
  template Tensor<T> read_flo<T>(const std::string&);                   \
  template void write_flo<T>(const std::string&, const Tensor<T>&);     \
  template void save_sequence<T>(const std::string&, const FrameSequence<T>&); \
  template FrameSequence<T> load_sequence<T>(const std::string&);

CMNET_INSTANTIATE_IO(float)
CMNET_INSTANTIATE_IO(double)
#undef CMNET_INSTANTIATE_IO

}  // namespace cmnet
