#include "cmnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cmnet {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'N', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("tensor stream truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw FormatError("tensor stream truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

// The format stores raw IEEE754 values little-endian; this code targets
// little-endian hosts and asserts so at compile time where possible.
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
  if (empty()) return true;
  const T* p = data();
  const int64_t n = numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p[i]))) return false;
  }
  return true;
}

template <typename T>
void Tensor<T>::require_finite(const char* what) const {
  if (!all_finite()) throw NumericError(std::string(what) + ": non-finite value in tensor " + shape_.str());
}

template <typename T>
void dump_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  os.put(static_cast<char>(Tensor<T>::precision()));
  const Shape& s = t.shape();
  write_u64(os, static_cast<uint64_t>(s.n));
  write_u64(os, static_cast<uint64_t>(s.c));
  write_u64(os, static_cast<uint64_t>(s.h));
  write_u64(os, static_cast<uint64_t>(s.w));
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <typename T>
Tensor<T> load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad tensor magic (want CMNT)");
  uint32_t version = read_u32(is);
  if (version != kVersion) throw FormatError("unsupported tensor version " + std::to_string(version));
  int prec = is.get();
  if (prec != 0 && prec != 1) throw FormatError("bad precision byte");
  Shape s;
  s.n = static_cast<int64_t>(read_u64(is));
  s.c = static_cast<int64_t>(read_u64(is));
  s.h = static_cast<int64_t>(read_u64(is));
  s.w = static_cast<int64_t>(read_u64(is));
  const int64_t numel = s.numel();

  auto read_raw = [&](auto* dst, size_t elem) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(numel * elem));
    if (!is) throw FormatError("tensor stream truncated");
  };

  if ((prec == 0) == (Tensor<T>::precision() == Precision::Single)) {
    Tensor<T> t(s);
    read_raw(t.data(), sizeof(T));
    return t;
  }
  // Precision differs from T: convert on load.
  if (prec == 0) {
    std::vector<float> tmp(static_cast<size_t>(numel));
    read_raw(tmp.data(), sizeof(float));
    std::vector<T> out(tmp.begin(), tmp.end());
    return Tensor<T>::from(s, std::move(out));
  }
  std::vector<double> tmp(static_cast<size_t>(numel));
  read_raw(tmp.data(), sizeof(double));
  std::vector<T> out(static_cast<size_t>(numel));
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(tmp[i]);
  return Tensor<T>::from(s, std::move(out));
}

template <typename T>
void save_tensor_file(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  dump_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return load_tensor<T>(is);
}

template class Tensor<float>;
template class Tensor<double>;
template void dump_tensor<float>(std::ostream&, const Tensor<float>&);
template void dump_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(std::istream&);
template Tensor<double> load_tensor<double>(std::istream&);
template void save_tensor_file<float>(const std::string&, const Tensor<float>&);
template void save_tensor_file<double>(const std::string&, const Tensor<double>&);
template Tensor<float> load_tensor_file<float>(const std::string&);
template Tensor<double> load_tensor_file<double>(const std::string&);

}  // namespace cmnet
