#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kff/error.hpp"
#include "kff/numerics.hpp"

namespace kff {

class SeededRng;

// Pseudo-label key (probability vector) plus prompt.
struct ClassPromptEntry {
  Vector key;
  Vector prompt;
  std::uint64_t created_at = 0;

  friend bool operator==(const ClassPromptEntry&, const ClassPromptEntry&) = default;
};

// Batch-statistics key plus prompt.
struct DomainPromptEntry {
  BatchStats key;
  Vector prompt;
  std::uint64_t created_at = 0;

  friend bool operator==(const DomainPromptEntry&, const DomainPromptEntry&) = default;
};

// Ordered, capacity-bounded prompt pool. Every mutation bumps version() so
// that stale fission outcomes can be detected by the fusion step.
template <typename Entry>
class PromptPool {
 public:
  PromptPool(std::size_t capacity, std::size_t prompt_dim)
      : capacity_(capacity), prompt_dim_(prompt_dim) {
    if (capacity == 0) throw ConfigError("prompt pool capacity must be positive");
    if (prompt_dim == 0) throw DimensionError("prompt pool: zero prompt dimension");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t prompt_dim() const noexcept { return prompt_dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::uint64_t version() const noexcept { return version_; }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& operator[](std::size_t i) const noexcept { return entries_[i]; }

  // Mutation access for the fusion step. Callers must bump the version.
  std::vector<Entry>& mutable_entries() noexcept { return entries_; }
  void bump_version() noexcept { ++version_; }

  // Restores a pool exactly as snapshotted.
  void restore(std::vector<Entry> entries, std::uint64_t version) {
    entries_ = std::move(entries);
    version_ = version;
  }

  friend bool operator==(const PromptPool&, const PromptPool&) = default;

 private:
  std::size_t capacity_;
  std::size_t prompt_dim_;
  std::uint64_t version_ = 0;
  std::vector<Entry> entries_;
};

using ClassPromptPool = PromptPool<ClassPromptEntry>;
using DomainPromptPool = PromptPool<DomainPromptEntry>;

struct CandidateWeight {
  std::size_t index;
  double weight;

  friend bool operator==(const CandidateWeight&, const CandidateWeight&) = default;
};

// Result of matching one query against a pool. `weights` is absent exactly
// when nothing cleared the threshold and a fresh prompt was fissioned.
struct FissionOutcome {
  Vector composed_prompt;
  std::optional<std::vector<CandidateWeight>> weights;
  std::uint64_t pool_version = 0;

  bool fissioned() const noexcept { return !weights.has_value(); }
};

struct FissionParams {
  double threshold;    // gamma_c (cosine, exclusive lower bound) or gamma_d (distance, exclusive upper bound)
  double temperature;  // tau_c / tau_d
  double init_scale = 0.01;
  // Normalize weights over the whole pool instead of only over candidates.
  bool softmax_over_all = false;
};

FissionOutcome fission_class(const ClassPromptPool& pool, std::span<const double> pseudo_label,
                             const FissionParams& params, SeededRng& rng);

std::vector<FissionOutcome> fission_class_batch(const ClassPromptPool& pool,
                                                std::span<const Vector> pseudo_labels,
                                                const FissionParams& params, SeededRng& rng);

FissionOutcome fission_domain(const DomainPromptPool& pool, const BatchStats& stats,
                              const FissionParams& params, SeededRng& rng);

}  // namespace kff
