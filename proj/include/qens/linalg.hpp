#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/container/small_vector.hpp>

namespace qens {

using Complex = std::complex<double>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

/// Scalar field of a matrix or vector: `double` or `std::complex<double>`.
template <class S>
concept Field = std::is_same_v<S, double> || std::is_same_v<S, Complex>;

template <Field S>
constexpr S conj(S x) {
  if constexpr (is_complex_v<S>)
    return std::conj(x);
  else
    return x;
}

template <Field S>
constexpr double real_part(S x) {
  if constexpr (is_complex_v<S>)
    return x.real();
  else
    return x;
}

template <Field S>
inline bool is_finite(S x) {
  if constexpr (is_complex_v<S>)
    return std::isfinite(x.real()) && std::isfinite(x.imag());
  else
    return std::isfinite(x);
}

// Inline capacity covers every benchmark (N ≤ 6) without touching the heap.
inline constexpr std::size_t kInlineDim = 6;

template <class S, std::size_t N>
using SmallBuffer = boost::container::small_vector<S, N>;

namespace detail {
// Plain complex product; skips the C99 Annex G inf/nan recovery path that
// std::complex operator* calls into.
template <Field S>
inline S mul(S a, S b) {
  if constexpr (is_complex_v<S>)
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  else
    return a * b;
}
}  // namespace detail

class LinalgError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense column vector.
template <Field S>
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n) : data_(n, S{}) {}
  Vector(std::initializer_list<S> values) : data_(values) {}
  explicit Vector(std::span<const S> values) : data_(values.begin(), values.end()) {}

  static Vector unit(std::size_t n, std::size_t j) {
    Vector v(n);
    v[j] = S{1};
    return v;
  }

  std::size_t size() const { return data_.size(); }
  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }
  std::span<S> values() { return {data_.data(), data_.size()}; }
  std::span<const S> values() const { return {data_.data(), data_.size()}; }

  Vector& operator+=(const Vector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Vector& operator-=(const Vector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Vector& operator*=(S a) {
    for (auto& x : data_) x = detail::mul(x, a);
    return *this;
  }
  friend Vector operator+(Vector a, const Vector& b) { return a += b; }
  friend Vector operator-(Vector a, const Vector& b) { return a -= b; }
  friend Vector operator*(S a, Vector v) { return v *= a; }

  bool operator==(const Vector&) const = default;

 private:
  void check_same(const Vector& o) const {
    if (o.size() != size()) throw LinalgError("vector dimension mismatch");
  }
  SmallBuffer<S, kInlineDim> data_;
};

/// Dense square matrix, row-major.
template <Field S>
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), data_(n * n, S{}) {}
  Matrix(std::initializer_list<std::initializer_list<S>> rows) : n_(rows.size()) {
    data_.reserve(n_ * n_);
    for (const auto& row : rows) {
      if (row.size() != n_) throw LinalgError("matrix literal is not square");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S{1};
    return m;
  }
  static Matrix diagonal(std::span<const S> d) {
    Matrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t dim() const { return n_; }
  S& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<S> values() { return {data_.data(), data_.size()}; }
  std::span<const S> values() const { return {data_.data(), data_.size()}; }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(S a) {
    for (auto& x : data_) x = detail::mul(x, a);
    return *this;
  }
  /// this += a·o
  Matrix& add_scaled(S a, const Matrix& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += detail::mul(a, o.data_[i]);
    return *this;
  }
  Matrix& add_identity(S a) {
    for (std::size_t i = 0; i < n_; ++i) (*this)(i, i) += a;
    return *this;
  }
  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(S a, Matrix m) { return m *= a; }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    a.check_same(b);
    const std::size_t n = a.n_;
    Matrix c(n);
    const S* pa = a.data_.data();
    const S* pb = b.data_.data();
    S* pc = c.data_.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const S aik = pa[i * n + k];
        for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += detail::mul(aik, pb[k * n + j]);
      }
    return c;
  }

  friend Vector<S> operator*(const Matrix& a, const Vector<S>& v) {
    if (v.size() != a.n_) throw LinalgError("matrix-vector dimension mismatch");
    Vector<S> r(a.n_);
    for (std::size_t i = 0; i < a.n_; ++i) {
      S acc{};
      for (std::size_t j = 0; j < a.n_; ++j) acc += detail::mul(a(i, j), v[j]);
      r[i] = acc;
    }
    return r;
  }

  /// Conjugate transpose; plain transpose for real matrices.
  Matrix adjoint() const {
    Matrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) t(j, i) = qens::conj((*this)(i, j));
    return t;
  }

  bool operator==(const Matrix&) const = default;

 private:
  void check_same(const Matrix& o) const {
    if (o.n_ != n_) throw LinalgError("matrix dimension mismatch");
  }
  std::size_t n_ = 0;
  SmallBuffer<S, kInlineDim * kInlineDim> data_;
};

/// ⟨a, b⟩ = Σ conj(aᵢ)·bᵢ
template <Field S>
S inner(const Vector<S>& a, const Vector<S>& b) {
  if (a.size() != b.size()) throw LinalgError("inner product dimension mismatch");
  S acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += detail::mul(qens::conj(a[i]), b[i]);
  return acc;
}

template <Field S>
double norm2(const Vector<S>& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += std::norm(v[i]);
  return std::sqrt(acc);
}

/// Maximum absolute column sum.
template <Field S>
double norm1(const Matrix<S>& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.dim(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) col += std::abs(a(i, j));
    best = std::max(best, col);
  }
  return best;
}

template <Field S>
double max_abs(const Matrix<S>& a) {
  double best = 0.0;
  for (const S& x : a.values()) best = std::max(best, std::abs(x));
  return best;
}

template <Field S>
bool all_finite(const Matrix<S>& a) {
  for (const S& x : a.values())
    if (!is_finite(x)) return false;
  return true;
}

template <Field S>
struct ExpmResult {
  Matrix<S> exponential;
  Matrix<S> derivative;
};

/// Exponential together with derivatives along several directions.
template <Field S>
struct ExpmDirectional {
  Matrix<S> exponential;
  std::vector<Matrix<S>> derivatives;
};

namespace detail {

inline constexpr int kTaylorDegree = 8;

// Truncation bound of the degree-8 remainder at this norm is below 4e-17.
inline constexpr double kScalingThreshold = 0.0625;

inline int scaling_exponent(double norm) {
  if (norm <= kScalingThreshold) return 0;
  return std::max(0, static_cast<int>(std::ceil(std::log2(norm / kScalingThreshold))));
}

template <Field S>
void validate_square(const Matrix<S>& a) {
  if (a.dim() == 0) throw LinalgError("matrix must have dimension >= 1");
  if (!all_finite(a)) throw LinalgError("matrix has non-finite entries");
}

// 1/k! for k = 0..8
inline constexpr double kInvFactorial[kTaylorDegree + 1] = {
    1.0,         1.0,          1.0 / 2.0,     1.0 / 6.0,     1.0 / 24.0,
    1.0 / 120.0, 1.0 / 720.0, 1.0 / 5040.0, 1.0 / 40320.0};

// c0·I + c1·A + c2·A² + c3·A³
template <Field S>
Matrix<S> cubic(const Matrix<S>& a, const Matrix<S>& a2, const Matrix<S>& a3, const double* c) {
  Matrix<S> r = S{c[3]} * a3;
  r.add_scaled(S{c[2]}, a2).add_scaled(S{c[1]}, a).add_identity(S{c[0]});
  return r;
}

// Degree-8 Taylor polynomial split as
//   P(A) = L(A) + A⁴·H(A),  L = Σ_{k<4} A^k/k!,  H = Σ_{k=4..8} A^{k-4}/k!
// which costs four products. Directional derivatives follow by the product
// rule on every factor.
template <Field S>
ExpmDirectional<S> taylor_with_derivatives(const Matrix<S>& a,
                                           std::span<const Matrix<S>> directions) {
  const double* c = kInvFactorial;
  const Matrix<S> a2 = a * a;
  const Matrix<S> a3 = a2 * a;
  const Matrix<S> a4 = a2 * a2;

  Matrix<S> high = cubic(a, a2, a3, c + 4);
  high.add_scaled(S{c[8]}, a4);
  Matrix<S> p = cubic(a, a2, a3, c);
  p += a4 * high;

  std::vector<Matrix<S>> dp;
  dp.reserve(directions.size());
  for (const auto& b : directions) {
    const Matrix<S> da2 = a * b + b * a;
    const Matrix<S> da3 = da2 * a + a2 * b;
    const Matrix<S> da4 = da2 * a2 + a2 * da2;
    Matrix<S> dhigh = S{c[5]} * b;
    dhigh.add_scaled(S{c[6]}, da2).add_scaled(S{c[7]}, da3).add_scaled(S{c[8]}, da4);
    Matrix<S> d = S{c[1]} * b;
    d.add_scaled(S{c[2]}, da2).add_scaled(S{c[3]}, da3);
    d += da4 * high;
    d += a4 * dhigh;
    dp.push_back(std::move(d));
  }
  return {std::move(p), std::move(dp)};
}

}  // namespace detail

/// e^A by scaling and squaring around a degree-8 Taylor polynomial.
template <Field S>
Matrix<S> expm_order8(const Matrix<S>& a) {
  detail::validate_square(a);
  const int s = detail::scaling_exponent(norm1(a));
  const Matrix<S> scaled = std::ldexp(1.0, -s) * a;
  Matrix<S> e = std::move(detail::taylor_with_derivatives<S>(scaled, {}).exponential);
  for (int i = 0; i < s; ++i) e = e * e;
  return e;
}

/// e^A and the Fréchet derivative of exp at A along each direction.
///
/// The scaled pair (A/2^s, B/2^s) is pushed through the polynomial, then every
/// squaring E ← E·E carries D ← E·D + D·E.
template <Field S>
ExpmDirectional<S> expm_frechet(const Matrix<S>& a, std::span<const Matrix<S>> directions) {
  detail::validate_square(a);
  for (const auto& b : directions) {
    if (b.dim() != a.dim()) throw LinalgError("expm_frechet: dimension mismatch");
    if (!all_finite(b)) throw LinalgError("expm_frechet: non-finite direction");
  }
  const int s = detail::scaling_exponent(norm1(a));
  const double scale = std::ldexp(1.0, -s);
  std::vector<Matrix<S>> scaled_dirs;
  scaled_dirs.reserve(directions.size());
  for (const auto& b : directions) scaled_dirs.push_back(scale * b);

  auto result = detail::taylor_with_derivatives<S>(scale * a, scaled_dirs);
  for (int i = 0; i < s; ++i) {
    const Matrix<S>& e = result.exponential;
    for (auto& d : result.derivatives) d = e * d + d * e;
    result.exponential = e * e;
  }
  return result;
}

template <Field S>
ExpmResult<S> expm_frechet(const Matrix<S>& a, const Matrix<S>& b) {
  auto r = expm_frechet<S>(a, std::span<const Matrix<S>>(&b, 1));
  return {std::move(r.exponential), std::move(r.derivatives.front())};
}

/// Top-right block of exp([[A, B], [0, A]]), which is the Fréchet derivative.
template <Field S>
Matrix<S> expm_frechet_oracle(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.dim() != b.dim()) throw LinalgError("expm_frechet_oracle: dimension mismatch");
  const std::size_t n = a.dim();
  Matrix<S> block(2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      block(i, j) = a(i, j);
      block(i, j + n) = b(i, j);
      block(i + n, j + n) = a(i, j);
    }
  const Matrix<S> e = expm_order8(block);
  Matrix<S> d(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = e(i, j + n);
  return d;
}

}  // namespace qens
