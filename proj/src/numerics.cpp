#include "kff/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "kff/error.hpp"
#include "kff/kernels.hpp"

namespace kff {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

Vector::Vector(std::size_t n, double fill) : values_(n, fill) {
  require_finite(values_, "Vector");
}

Vector::Vector(std::initializer_list<double> values) : values_(values) {
  require_finite(values_, "Vector");
}

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
  require_finite(values_, "Vector");
}

bool Vector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

Vector operator+(const Vector& a, const Vector& b) {
  Vector out = a;
  out += b;
  return out;
}

Vector operator-(const Vector& a, const Vector& b) {
  Vector out = a;
  out -= b;
  return out;
}

Vector operator*(double s, const Vector& v) {
  Vector out = v;
  kernels::scale(out.span(), s);
  return out;
}

Vector& operator+=(Vector& a, const Vector& b) {
  require_same_dim(a.size(), b.size(), "vector add");
  kernels::add_scaled(a.span(), 1.0, b.span());
  return a;
}

Vector& operator-=(Vector& a, const Vector& b) {
  require_same_dim(a.size(), b.size(), "vector subtract");
  kernels::add_scaled(a.span(), -1.0, b.span());
  return a;
}

double norm(const Vector& v) { return std::sqrt(kernels::dot(v.span(), v.span())); }

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) throw DimensionError("Matrix: data size does not match shape");
  require_finite(data_, "Matrix");
}

Vector multiply(const Matrix& m, std::span<const double> x) {
  require_same_dim(m.cols(), x.size(), "matrix-vector product");
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = kernels::dot(m.row(r), x);
  return out;
}

Vector multiply_transposed(const Matrix& m, std::span<const double> g) {
  require_same_dim(m.rows(), g.size(), "transposed matrix-vector product");
  Vector out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) kernels::add_scaled(out.span(), g[r], m.row(r));
  return out;
}

Vector BatchStats::concatenated() const {
  std::vector<double> out;
  out.reserve(mean.size() + std.size());
  out.insert(out.end(), mean.begin(), mean.end());
  out.insert(out.end(), std.begin(), std.end());
  return Vector(std::move(out));
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - peak);
  const double total = kernels::sum(out.span());
  kernels::scale(out.span(), 1.0 / total);
  return out;
}

Vector log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("log_softmax: empty input");
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector shifted(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) shifted[i] = std::exp(logits[i] - peak);
  const double lse = peak + std::log(kernels::sum(shifted.span()));
  Vector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw DomainError("entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

BatchStats batch_stats(std::span<const Vector> features) {
  if (features.size() < 2) throw InsufficientDataError("batch_stats: need at least 2 samples");
  const std::size_t dim = features.front().size();
  for (const Vector& f : features) require_same_dim(dim, f.size(), "batch_stats");

  const double inv_b = 1.0 / static_cast<double>(features.size());
  // Accumulate relative to the first row so identical rows give an exact
  // mean and a zero std.
  const Vector& origin = features.front();
  Vector mean(dim);
  for (const Vector& f : features) {
    for (std::size_t k = 0; k < dim; ++k) mean[k] += f[k] - origin[k];
  }
  kernels::scale(mean.span(), inv_b);
  kernels::add_scaled(mean.span(), 1.0, origin.span());

  Vector var(dim);
  for (const Vector& f : features) kernels::add_squared_deviation(var.span(), f.span(), mean.span());
  for (std::size_t k = 0; k < dim; ++k) var[k] = std::sqrt(var[k] * inv_b);
  return BatchStats{std::move(mean), std::move(var)};
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "cosine_sim");
  const double na = std::sqrt(kernels::dot(a, a));
  const double nb = std::sqrt(kernels::dot(b, b));
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_sim: similarity undefined for zero-norm input");
  return std::clamp(kernels::dot(a, b) / (na * nb), -1.0, 1.0);
}

double euclid(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "euclid");
  return std::sqrt(kernels::squared_distance(a, b));
}

double stats_distance(const BatchStats& a, const BatchStats& b) {
  require_same_dim(a.dim(), b.dim(), "stats_distance");
  const double dm = kernels::squared_distance(a.mean.span(), b.mean.span());
  const double ds = kernels::squared_distance(a.std.span(), b.std.span());
  return std::sqrt(dm + ds);
}

bool is_probability_vector(std::span<const double> v, double tolerance) noexcept {
  if (v.empty()) return false;
  double total = 0.0;
  for (double p : v) {
    if (!std::isfinite(p) || p < 0.0) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= tolerance;
}

}  // namespace kff
