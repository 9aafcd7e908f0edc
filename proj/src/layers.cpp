#include "cmnet/layers.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace cmnet {

namespace {

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
  if (!is) throw FormatError("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw FormatError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr char kStoreMagic[4] = {'C', 'M', 'C', 'K'};
constexpr uint32_t kStoreVersion = 1;

}  // namespace

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(value), false});
  if (!inserted) throw StateError("parameter already exists: " + name);
  return it->second.value;
}

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("no such parameter: " + name);
  return it->second;
}

template <typename T>
const typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("no such parameter: " + name);
  return it->second;
}

template <typename T>
int ParamStore<T>::set_frozen_prefix(const std::string& prefix, bool frozen) {
  int touched = 0;
  for (auto& [name, e] : entries_) {
    if (name.rfind(prefix, 0) == 0) {
      e.frozen = frozen;
      ++touched;
    }
  }
  return touched;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

template <typename T>
int64_t ParamStore<T>::total_values() const {
  int64_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

template <typename T>
void save_store(std::ostream& os, const ParamStore<T>& store, uint64_t step) {
  os.write(kStoreMagic, 4);
  write_u32(os, kStoreVersion);
  write_u64(os, step);
  write_u32(os, static_cast<uint32_t>(store.size()));
  for (const auto& [name, e] : store.entries()) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(e.frozen ? 1 : 0);
    dump_tensor(os, e.value);
  }
}

template <typename T>
uint64_t load_store(std::istream& is, ParamStore<T>& store) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kStoreMagic, 4) != 0)
    throw FormatError("bad checkpoint magic (want CMCK)");
  const uint32_t version = read_u32(is);
  if (version != kStoreVersion) throw FormatError("unsupported checkpoint version");
  const uint64_t step = read_u64(is);
  const uint32_t count = read_u32(is);
  ParamStore<T> loaded;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = read_u32(is);
    if (len > 4096) throw FormatError("suspicious parameter name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const int frozen = is.get();
    if (!is || (frozen != 0 && frozen != 1)) throw FormatError("checkpoint truncated");
    Tensor<T> t = load_tensor<T>(is);
    loaded.add(name, std::move(t));
    loaded.entry(name).frozen = frozen == 1;
  }
  store = std::move(loaded);
  return step;
}

template <typename T>
void init_conv(ParamStore<T>& store, const std::string& prefix, int64_t ci, int64_t co, int64_t kh,
               int64_t kw, const Rng& rng) {
  if (ci < 1 || co < 1 || kh < 1 || kw < 1) throw UsageError("init_conv: dims must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(ci * kh * kw));
  Tensor<T> w(Shape{co, ci, kh, kw});
  Rng stream = rng.child(prefix);
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<T>(stream.uniform(-bound, bound));
  store.add(prefix + ".weight", std::move(w));
  store.add(prefix + ".bias", Tensor<T>::zeros(Shape{1, co, 1, 1}));
}

template <typename T>
void init_conv_zero(ParamStore<T>& store, const std::string& prefix, int64_t ci, int64_t co, int64_t kh,
                    int64_t kw) {
  store.add(prefix + ".weight", Tensor<T>::zeros(Shape{co, ci, kh, kw}));
  store.add(prefix + ".bias", Tensor<T>::zeros(Shape{1, co, 1, 1}));
}

template <typename T>
NodeId BoundParams<T>::at(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) throw StateError("parameter not bound: " + name);
  return it->second;
}

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store) {
  BoundParams<T> bound;
  bound.ids.reserve(store.size());
  for (const auto& [name, e] : store.entries()) {
    bound.ids.emplace(name, tape.leaf(e.value, !e.frozen));
  }
  return bound;
}

template <typename T>
NodeId apply_conv(Tape<T>& tape, const BoundParams<T>& bound, const ConvRef& conv, NodeId x) {
  return tape.conv2d(x, bound.at(conv.prefix + ".weight"), bound.at(conv.prefix + ".bias"), conv.stride,
                     conv.pad_h, conv.pad_w);
}

template <typename T>
SepConvGRU<T>::SepConvGRU(std::string prefix, int64_t input_channels, int64_t hidden_channels)
    : prefix_(std::move(prefix)), input_(input_channels), hidden_(hidden_channels) {
  z1_ = {prefix_ + ".z1", 1, 0, 2};
  r1_ = {prefix_ + ".r1", 1, 0, 2};
  h1_ = {prefix_ + ".h1", 1, 0, 2};
  z2_ = {prefix_ + ".z2", 1, 2, 0};
  r2_ = {prefix_ + ".r2", 1, 2, 0};
  h2_ = {prefix_ + ".h2", 1, 2, 0};
}

template <typename T>
void SepConvGRU<T>::init(ParamStore<T>& store, const Rng& rng) const {
  const int64_t in = hidden_ + input_;
  init_conv(store, z1_.prefix, in, hidden_, 1, 5, rng);
  init_conv(store, r1_.prefix, in, hidden_, 1, 5, rng);
  init_conv(store, h1_.prefix, in, hidden_, 1, 5, rng);
  init_conv(store, z2_.prefix, in, hidden_, 5, 1, rng);
  init_conv(store, r2_.prefix, in, hidden_, 5, 1, rng);
  init_conv(store, h2_.prefix, in, hidden_, 5, 1, rng);
}

template <typename T>
NodeId SepConvGRU<T>::half_step(Tape<T>& tape, const BoundParams<T>& bound, NodeId h, NodeId x,
                                const ConvRef& z, const ConvRef& r, const ConvRef& hcand) const {
  std::vector<NodeId> hx{h, x};
  NodeId cat = tape.concat_channels(hx);
  NodeId zt = tape.sigmoid(apply_conv(tape, bound, z, cat));
  NodeId rt = tape.sigmoid(apply_conv(tape, bound, r, cat));
  std::vector<NodeId> rhx{tape.mul(rt, h), x};
  NodeId cand = tape.tanh_(apply_conv(tape, bound, hcand, tape.concat_channels(rhx)));
  return tape.add(tape.mul(tape.one_minus(zt), h), tape.mul(zt, cand));
}

template <typename T>
NodeId SepConvGRU<T>::step(Tape<T>& tape, const BoundParams<T>& bound, NodeId h_prev, NodeId x) const {
  const Shape hs = tape.value(h_prev).shape();
  const Shape xs = tape.value(x).shape();
  if (hs.c != hidden_) throw ShapeError("gru_step: hidden channels " + std::to_string(hs.c) +
                                        " != " + std::to_string(hidden_));
  if (xs.c != input_) throw ShapeError("gru_step: input channels " + std::to_string(xs.c) +
                                       " != " + std::to_string(input_));
  if (xs.h != hs.h || xs.w != hs.w || xs.n != hs.n)
    throw ShapeError("gru_step: spatial mismatch " + xs.str() + " vs " + hs.str());
  NodeId mid = half_step(tape, bound, h_prev, x, z1_, r1_, h1_);
  return half_step(tape, bound, mid, x, z2_, r2_, h2_);
}

template class ParamStore<float>;
template class ParamStore<double>;
template void save_store<float>(std::ostream&, const ParamStore<float>&, uint64_t);
template void save_store<double>(std::ostream&, const ParamStore<double>&, uint64_t);
template uint64_t load_store<float>(std::istream&, ParamStore<float>&);
template uint64_t load_store<double>(std::istream&, ParamStore<double>&);
template void init_conv<float>(ParamStore<float>&, const std::string&, int64_t, int64_t, int64_t,
                               int64_t, const Rng&);
template void init_conv<double>(ParamStore<double>&, const std::string&, int64_t, int64_t, int64_t,
                                int64_t, const Rng&);
template void init_conv_zero<float>(ParamStore<float>&, const std::string&, int64_t, int64_t, int64_t,
                                    int64_t);
template void init_conv_zero<double>(ParamStore<double>&, const std::string&, int64_t, int64_t,
                                     int64_t, int64_t);
template struct BoundParams<float>;
template struct BoundParams<double>;
template BoundParams<float> bind_params<float>(Tape<float>&, const ParamStore<float>&);
template BoundParams<double> bind_params<double>(Tape<double>&, const ParamStore<double>&);
template NodeId apply_conv<float>(Tape<float>&, const BoundParams<float>&, const ConvRef&, NodeId);
template NodeId apply_conv<double>(Tape<double>&, const BoundParams<double>&, const ConvRef&, NodeId);
template class SepConvGRU<float>;
template class SepConvGRU<double>;

}  // namespace cmnet
