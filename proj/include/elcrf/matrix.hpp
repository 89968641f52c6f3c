#ifndef ELCRF_MATRIX_HPP
#define ELCRF_MATRIX_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace elcrf {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> row(std::size_t r) {
    return std::span<double>(values_.data() + r * cols_, cols_);
  }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_.data() + r * cols_, cols_);
  }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double value) {
    for (double& v : values_) v = value;
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline void check_same_shape(const Matrix& a, const Matrix& b,
                             const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace elcrf

#endif  // ELCRF_MATRIX_HPP
