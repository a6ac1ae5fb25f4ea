#pragma once

// Dense row-major vectors/matrices in double precision, plus the elementwise
// nonlinearities used by the recurrent cells. Sizes here are small (n <= 128),
// so everything is plain loops over std::vector storage.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace polyrnn {

class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vec&) const = default;

 private:
  std::vector<double> data_;
};

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Row-major nested initializer, e.g. Mat{{1, 2}, {3, 4}}.
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);
  static Mat diagonal(const Vec& d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A·x
Vec matvec(const Mat& a, const Vec& x);
// Aᵀ·x
Vec matvec_transposed(const Mat& a, const Vec& x);
// A·B
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
// A += scale · u vᵀ
void add_outer(Mat& a, const Vec& u, const Vec& v, double scale = 1.0);
// diag(d)·A, i.e. row i scaled by d[i].
Mat scale_rows(const Vec& d, const Mat& a);

// U·h + W·x + b. Throws DimensionError on any shape mismatch.
Vec affine(const Mat& u, const Vec& h, const Mat& w, const Vec& x, const Vec& b);

Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& a);
Vec& operator+=(Vec& a, const Vec& b);
Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);
Mat& operator+=(Mat& a, const Mat& b);
Vec hadamard(const Vec& a, const Vec& b);

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
double frobenius_norm(const Mat& a);
bool all_finite(std::span<const double> values) noexcept;

double sigmoid(double v) noexcept;
Vec tanh_vec(const Vec& v);
Vec sigmoid_vec(const Vec& v);
// Derivative maps evaluated at the pre-activation v.
Vec tanh_derivative(const Vec& v);
Vec sigmoid_derivative(const Vec& v);

}  // namespace polyrnn
