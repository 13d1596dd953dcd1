#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kff {

// Fixed-dimension real vector. Construction from raw values rejects NaN/Inf;
// element access is unchecked so the hot loops stay tight.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0);
  Vector(std::initializer_list<double> values);
  explicit Vector(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }
  operator std::span<const double>() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> values_;
};

// Exact representation equality (distinguishes -0.0 from 0.0).
bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept;

Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);
Vector& operator+=(Vector& a, const Vector& b);
Vector& operator-=(Vector& a, const Vector& b);
double norm(const Vector& v);

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// M x
Vector multiply(const Matrix& m, std::span<const double> x);
// M^T g
Vector multiply_transposed(const Matrix& m, std::span<const double> g);

// Per-dimension batch mean and population standard deviation (the matching
// key Gamma for domain prompts).
struct BatchStats {
  Vector mean;
  Vector std;

  std::size_t dim() const noexcept { return mean.size(); }
  // (mean, std) as one vector of length 2 * dim.
  Vector concatenated() const;

  friend bool operator==(const BatchStats&, const BatchStats&) = default;
};

// Max-subtracted softmax. Throws DimensionError on an empty input.
Vector softmax(std::span<const double> logits);
Vector log_softmax(std::span<const double> logits);

// -sum p ln p with 0 ln 0 = 0. Throws DomainError on a negative entry.
double entropy(std::span<const double> probs);

// Throws InsufficientDataError for fewer than two samples.
BatchStats batch_stats(std::span<const Vector> features);

// Throws DomainError if either input has zero norm.
double cosine_sim(std::span<const double> a, std::span<const double> b);
double euclid(std::span<const double> a, std::span<const double> b);
// Distance between two keys over concatenated (mean, std).
double stats_distance(const BatchStats& a, const BatchStats& b);

bool is_probability_vector(std::span<const double> v, double tolerance = 1e-6) noexcept;

void require_same_dim(std::size_t a, std::size_t b, const char* what);

}  // namespace kff
