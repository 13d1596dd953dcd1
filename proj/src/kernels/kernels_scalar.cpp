#include "kernels_impl.hpp"

namespace kff::kernels::detail {

namespace {

// Lane-blocked accumulation; must mirror the AVX2 register layout exactly.
template <typename Term>
double blocked_sum(std::size_t n, Term term) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lane[0] += term(i);
    lane[1] += term(i + 1);
    lane[2] += term(i + 2);
    lane[3] += term(i + 3);
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) total += term(i);
  return total;
}

double dot(const double* a, const double* b, std::size_t n) {
  return blocked_sum(n, [&](std::size_t i) { return a[i] * b[i]; });
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  return blocked_sum(n, [&](std::size_t i) {
    const double d = a[i] - b[i];
    return d * d;
  });
}

double sum(const double* a, std::size_t n) {
  return blocked_sum(n, [&](std::size_t i) { return a[i]; });
}

void add_scaled(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void blend(double* y, double w, const double* x, std::size_t n) {
  const double keep = 1.0 - w;
  for (std::size_t i = 0; i < n; ++i) y[i] = w * x[i] + keep * y[i];
}

void add_squared_deviation(double* acc, const double* x, const double* mean, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean[i];
    acc[i] += d * d;
  }
}

void scale(double* y, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= s;
}

}  // namespace

const KernelTable kScalarTable{Backend::kScalar, dot,   squared_distance,     sum,
                               add_scaled,       blend, add_squared_deviation, scale};

}  // namespace kff::kernels::detail
