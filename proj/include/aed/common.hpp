#pragma once

// Shared vocabulary for the aed library: error types, a dense row-major
// matrix, region boxes and the warning sink.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aed {

/// Input violated a documented contract (bad dimensions, malformed files,
/// out-of-range parameters). Mapped to exit code 2 by the CLI.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation failed on valid input (e.g. solver non-convergence).
/// Mapped to exit code 3 by the CLI.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

template <class... Args>
[[noreturn]] void fail_validation(Args&&... args) {
  throw ValidationError(detail::concat(std::forward<Args>(args)...));
}

using WarningSink = std::function<void(std::string_view)>;

/// Process-wide destination for non-fatal diagnostics. Defaults to stderr.
inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

template <class... Args>
void warn(Args&&... args) {
  if (auto& sink = warning_sink()) sink(detail::concat(std::forward<Args>(args)...));
}

/// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      fail_validation("matrix storage has ", data_.size(), " values, expected ",
                      rows_, "x", cols_);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  void append_row(std::span<const T> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_)
      fail_validation("row has ", values.size(), " values, matrix has ", cols_, " columns");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  template <class U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

/// Rows `indices` of `m`, in the given order.
template <class T>
Matrix<T> select_rows(const Matrix<T>& m, std::span<const std::size_t> indices) {
  Matrix<T> out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

/// Axis-aligned region box in pixels: top-left corner plus extent.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double center_x() const noexcept { return x + w / 2.0; }
  double center_y() const noexcept { return y + h / 2.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

inline double squared_l2(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

inline void check_dim(std::size_t got, std::size_t expected, std::string_view what) {
  if (got != expected)
    fail_validation(what, ": dimension mismatch (got ", got, ", expected ", expected, ")");
}

/// Score assigned to regions that fall in a grid cell without training data.
inline constexpr double kUntrainedScore = std::numeric_limits<double>::max();

}  // namespace aed
