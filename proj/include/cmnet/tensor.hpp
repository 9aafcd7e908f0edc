#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cmnet/errors.hpp"

namespace cmnet {

enum class Precision : uint8_t { Single = 0, Double = 1 };

struct Shape {
  int64_t n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense rank-4 array in row-major (n, c, h, w) order. Copies share storage;
// clone() makes a deep copy. Confined to one logical thread while a tape
// that references it is live.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s) : shape_(s), data_(std::make_shared<std::vector<T>>(check_shape(s), T(0))) {}

  static Tensor zeros(Shape s) { return Tensor(s); }

  static Tensor full(Shape s, T v) {
    Tensor t(s);
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }

  static Tensor from(Shape s, std::vector<T> values) {
    if (static_cast<int64_t>(values.size()) != s.numel())
      throw ShapeError("tensor data length " + std::to_string(values.size()) + " != shape " + s.str());
    Tensor t;
    t.shape_ = s;
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }
  bool empty() const { return !data_ || data_->empty(); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }

  T& at(int64_t n, int64_t c, int64_t y, int64_t x) { return (*data_)[offset(n, c, y, x)]; }
  T at(int64_t n, int64_t c, int64_t y, int64_t x) const { return (*data_)[offset(n, c, y, x)]; }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>::from(shape_, std::move(out));
  }

  bool all_finite() const;
  void require_finite(const char* what) const;

  static constexpr Precision precision() {
    return sizeof(T) == sizeof(float) ? Precision::Single : Precision::Double;
  }

 private:
  static int64_t check_shape(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("negative dim in shape " + s.str());
    return s.numel();
  }

  int64_t offset(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

// Versioned little-endian binary tensor format, magic "CMNT". Used by
// checkpoints and golden tests.
template <typename T>
void dump_tensor(std::ostream& os, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(std::istream& is);

template <typename T>
void save_tensor_file(const std::string& path, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor_file(const std::string& path);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cmnet
