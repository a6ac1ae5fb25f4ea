#include "polyrnn/linalg.hpp"

#include <cmath>
#include <string>

#include "polyrnn/errors.hpp"

namespace polyrnn {

namespace {

void require(bool ok, const char* op, std::size_t got, std::size_t want) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": dimension " + std::to_string(got) +
                         " does not match " + std::to_string(want));
  }
}

}  // namespace

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Mat", r.size(), cols_);
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(const Vec& d) {
  Mat m(d.dim(), d.dim());
  for (std::size_t i = 0; i < d.dim(); ++i) m(i, i) = d[i];
  return m;
}

Vec matvec(const Mat& a, const Vec& x) {
  require(a.cols() == x.dim(), "matvec", x.dim(), a.cols());
  Vec y(a.rows());
  const double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) acc += p[c] * x[c];
    y[r] = acc;
    p += a.cols();
  }
  return y;
}

Vec matvec_transposed(const Mat& a, const Vec& x) {
  require(a.rows() == x.dim(), "matvec_transposed", x.dim(), a.rows());
  Vec y(a.cols());
  const double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += p[c] * xr;
    p += a.cols();
  }
  return y;
}

Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), "matmul", b.rows(), a.cols());
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void add_outer(Mat& a, const Vec& u, const Vec& v, double scale) {
  require(a.rows() == u.dim(), "add_outer", u.dim(), a.rows());
  require(a.cols() == v.dim(), "add_outer", v.dim(), a.cols());
  double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double ur = scale * u[r];
    if (ur != 0.0) {
      for (std::size_t c = 0; c < a.cols(); ++c) p[c] += ur * v[c];
    }
    p += a.cols();
  }
}

Mat scale_rows(const Vec& d, const Mat& a) {
  require(a.rows() == d.dim(), "scale_rows", d.dim(), a.rows());
  Mat out = a;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) *= d[r];
  return out;
}

Vec affine(const Mat& u, const Vec& h, const Mat& w, const Vec& x, const Vec& b) {
  require(u.rows() == b.dim(), "affine (U rows vs b)", u.rows(), b.dim());
  require(w.rows() == b.dim(), "affine (W rows vs b)", w.rows(), b.dim());
  require(u.cols() == h.dim(), "affine (U cols vs h)", h.dim(), u.cols());
  require(w.cols() == x.dim(), "affine (W cols vs x)", x.dim(), w.cols());
  Vec out(b.dim());
  for (std::size_t r = 0; r < b.dim(); ++r) {
    double acc = 0.0;
    const auto ur = u.row(r);
    for (std::size_t c = 0; c < ur.size(); ++c) acc += ur[c] * h[c];
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * x[c];
    out[r] = acc + b[r];
  }
  return out;
}

Vec operator+(const Vec& a, const Vec& b) {
  require(a.dim() == b.dim(), "vector add", b.dim(), a.dim());
  Vec out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec operator-(const Vec& a, const Vec& b) {
  require(a.dim() == b.dim(), "vector subtract", b.dim(), a.dim());
  Vec out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec operator*(double s, const Vec& a) {
  Vec out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = s * a[i];
  return out;
}

Vec& operator+=(Vec& a, const Vec& b) {
  require(a.dim() == b.dim(), "vector add", b.dim(), a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) a[i] += b[i];
  return a;
}

Mat operator+(const Mat& a, const Mat& b) {
  Mat out = a;
  out += b;
  return out;
}

Mat operator-(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix subtract", b.size(), a.size());
  Mat out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Mat operator*(double s, const Mat& a) {
  Mat out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Mat& operator+=(Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix add", b.size(), a.size());
  auto o = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a;
}

Vec hadamard(const Vec& a, const Vec& b) {
  require(a.dim() == b.dim(), "hadamard", b.dim(), a.dim());
  Vec out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * b[i];
  return out;
}

double dot(const Vec& a, const Vec& b) {
  require(a.dim() == b.dim(), "dot", b.dim(), a.dim());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Mat& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return std::sqrt(acc);
}

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

double sigmoid(double v) noexcept {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Vec tanh_vec(const Vec& v) {
  Vec out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

Vec sigmoid_vec(const Vec& v) {
  Vec out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

Vec tanh_derivative(const Vec& v) {
  Vec out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    const double t = std::tanh(v[i]);
    out[i] = 1.0 - t * t;
  }
  return out;
}

Vec sigmoid_derivative(const Vec& v) {
  Vec out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    const double s = sigmoid(v[i]);
    out[i] = s * (1.0 - s);
  }
  return out;
}

}  // namespace polyrnn
