#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace maskma {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor of 64-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  // Convenience for small literal matrices in tests and examples.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  // Last dimension; a rank-0 tensor has one column.
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  // Product of all leading dimensions.
  std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(double value);
  void reshape(Shape shape);
  bool all_finite() const;

  bool requires_grad = false;

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool operator==(const Tensor& a, const Tensor& b);

// Dense boolean matrix used to gate attention and score rows.
struct BoolMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  BoolMatrix() = default;
  BoolMatrix(std::size_t r, std::size_t c, bool value = false)
      : rows(r), cols(c), cells(r * c, value ? 1 : 0) {}

  bool operator()(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { cells[r * cols + c] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;
};

}  // namespace maskma
