#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmnet/rng.hpp"
#include "cmnet/tape.hpp"

namespace cmnet {

// Named parameter store. Names are dotted paths ("flow.level0.conv1.weight");
// iteration is sorted by name, so seeding and serialization are order-stable.
// Single writer between steps; read-only during forward passes.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    bool frozen = false;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor<T>& value(const std::string& name) { return entry(name).value; }

  // Freeze/unfreeze every parameter whose name starts with prefix.
  // Returns the number of entries touched.
  int set_frozen_prefix(const std::string& prefix, bool frozen);

  std::vector<std::string> names() const;
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  int64_t total_values() const;

 private:
  std::map<std::string, Entry> entries_;
};

// Checkpoint container, magic "CMCK": u32 version, u64 step counter,
// u32 entry count, then per entry u32 name length + UTF-8 name + frozen byte
// + tensor payload. Optimizer moments ride along as ".m1"/".m2" entries.
template <typename T>
void save_store(std::ostream& os, const ParamStore<T>& store, uint64_t step);
template <typename T>
uint64_t load_store(std::istream& is, ParamStore<T>& store);

// Fan-in-scaled uniform init in +-sqrt(6/(ci*kh*kw)); bias zero. Adds
// "<prefix>.weight" and "<prefix>.bias". The rng stream is derived from the
// name, so init order does not matter.
template <typename T>
void init_conv(ParamStore<T>& store, const std::string& prefix, int64_t ci, int64_t co, int64_t kh,
               int64_t kw, const Rng& rng);
// Zero-initialized variant (residual-flow output layers).
template <typename T>
void init_conv_zero(ParamStore<T>& store, const std::string& prefix, int64_t ci, int64_t co, int64_t kh,
                    int64_t kw);

// Parameters registered as tape leaves for one forward/backward pass.
// Frozen parameters are bound without gradient tracking.
template <typename T>
struct BoundParams {
  std::unordered_map<std::string, NodeId> ids;
  NodeId at(const std::string& name) const;
};

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamStore<T>& store);

// A convolution referenced by parameter name.
struct ConvRef {
  std::string prefix;
  int stride = 1;
  int pad_h = 0, pad_w = 0;
};

template <typename T>
NodeId apply_conv(Tape<T>& tape, const BoundParams<T>& bound, const ConvRef& conv, NodeId x);

// Separable ConvGRU: two chained gated updates, the first with 1x5 gates
// (pad 0,2), the second with 5x1 gates (pad 2,0). Gates map
// (hidden + input) channels -> hidden channels; sigmoid on z and r, tanh on
// the candidate state.
template <typename T>
class SepConvGRU {
 public:
  SepConvGRU(std::string prefix, int64_t input_channels, int64_t hidden_channels);

  void init(ParamStore<T>& store, const Rng& rng) const;
  NodeId step(Tape<T>& tape, const BoundParams<T>& bound, NodeId h_prev, NodeId x) const;

  int64_t hidden_channels() const { return hidden_; }

 private:
  NodeId half_step(Tape<T>& tape, const BoundParams<T>& bound, NodeId h, NodeId x, const ConvRef& z,
                   const ConvRef& r, const ConvRef& hcand) const;

  std::string prefix_;
  int64_t input_ = 0, hidden_ = 0;
  ConvRef z1_, r1_, h1_, z2_, r2_, h2_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class SepConvGRU<float>;
extern template class SepConvGRU<double>;

}  // namespace cmnet
