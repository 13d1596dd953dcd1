#pragma once

// Data-parallel inner loops used by the numerics layer.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 implementation. Reductions use a fixed four-lane
// blocked summation order in both variants, and no variant fuses multiply and
// add, so the two backends produce bitwise-identical results. The active
// backend is picked once at startup from CPU features and can be overridden
// with the KFF_KERNELS environment variable ("scalar" or "avx2") or
// set_backend().

#include <cstddef>
#include <span>
#include <string_view>

namespace kff::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, std::size_t n);
  // y[i] += alpha * x[i]
  void (*add_scaled)(double* y, double alpha, const double* x, std::size_t n);
  // y[i] = w * x[i] + (1 - w) * y[i]
  void (*blend)(double* y, double w, const double* x, std::size_t n);
  // acc[i] += (x[i] - mean[i])^2
  void (*add_squared_deviation)(double* acc, const double* x, const double* mean,
                                std::size_t n);
  // y[i] *= s
  void (*scale)(double* y, double s, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the build has no AVX2 kernels or the CPU lacks AVX2.
const KernelTable* avx2_table() noexcept;

const KernelTable& active() noexcept;
// Returns false (and leaves the backend unchanged) if unavailable.
bool set_backend(Backend backend) noexcept;
std::string_view backend_name(Backend backend) noexcept;

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }
inline void add_scaled(std::span<double> y, double alpha, std::span<const double> x) {
  active().add_scaled(y.data(), alpha, x.data(), y.size());
}
inline void blend(std::span<double> y, double w, std::span<const double> x) {
  active().blend(y.data(), w, x.data(), y.size());
}
inline void add_squared_deviation(std::span<double> acc, std::span<const double> x,
                                  std::span<const double> mean) {
  active().add_squared_deviation(acc.data(), x.data(), mean.data(), acc.size());
}
inline void scale(std::span<double> y, double s) { active().scale(y.data(), s, y.size()); }

}  // namespace kff::kernels
