#ifndef DECUR_TENSOR_HPP
#define DECUR_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace decur {

// Error taxonomy shared by every module.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericDomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Raised when training or attribution produces a non-finite value.
class NumericFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape &s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i)
    os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape &s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. Batches are rank-2 (samples x dims).
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)) {
    for (auto e : shape)
      if (e == 0)
        throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    data.assign(shape_numel(shape), fill);
  }
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor " + shape_str(shape) + " cannot hold " +
                       std::to_string(data.size()) + " values");
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor row(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor column(std::vector<double> v) {
    const auto n = v.size();
    return Tensor({n, 1}, std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto &row : rows) {
      if (row.size() != c)
        throw ShapeError("ragged matrix literal");
      d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_matrix() const { return shape.size() == 2; }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

  double &operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
  double item() const {
    if (!is_scalar())
      throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  bool operator==(const Tensor &) const = default;
};

inline bool all_finite(const Tensor &t) {
  return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

/// Gathers the listed rows of a rank-2 tensor.
inline Tensor take_rows(const Tensor &t, const std::vector<std::size_t> &idx) {
  Tensor out({idx.size(), t.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * t.cols()), t.cols(),
                out.data.begin() + static_cast<std::ptrdiff_t>(i * t.cols()));
  return out;
}

inline Tensor column_block(const Tensor &t, std::size_t c0, std::size_t c1) {
  if (c0 >= c1 || c1 > t.cols())
    throw ShapeError("column block [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of range for " + shape_str(t.shape));
  Tensor out({t.rows(), c1 - c0});
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j)
      out(i, j - c0) = t(i, j);
  return out;
}

inline Tensor hconcat(const Tensor &a, const Tensor &b) {
  if (a.rows() != b.rows())
    throw ShapeError("hconcat row mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out({a.rows(), a.cols() + b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j)
      out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j)
      out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

} // namespace decur

#endif
