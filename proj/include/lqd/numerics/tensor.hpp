#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lqd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Tape;

/// Dense row-major array of doubles.
///
/// Storage is shared and immutable, so copying a Tensor is cheap and a
/// Tensor without a tape may be shared freely across threads. A Tensor that
/// participates in a Tape carries the tape pointer and its node index; every
/// op that sees an attached input records itself on that tape.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<const std::vector<double>>()) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
    for (auto extent : shape_) {
      if (extent == 0) throw std::invalid_argument("Tensor: zero extent in " + shape_str(shape_));
    }
    if (data.size() != shape_numel(shape_)) {
      throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape_));
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

  static Tensor full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_->size(); }
  bool empty() const { return data_->empty(); }

  std::span<const double> data() const { return *data_; }
  const std::vector<double>& vec() const { return *data_; }
  std::shared_ptr<const std::vector<double>> storage() const { return data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  double item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item on non-scalar " + shape_str(shape_));
    return (*data_)[0];
  }

  bool attached() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

  /// Same values, no tape participation.
  Tensor detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = 0;
    return t;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size()) {
      throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

}  // namespace lqd
