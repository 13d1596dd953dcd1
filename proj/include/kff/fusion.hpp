#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "kff/pools.hpp"

namespace kff {

// One batch sample as seen by the class-pool update.
struct ClassUpdateRecord {
  Vector learned_prompt;  // P_t^*
  Vector prediction;      // y_hat_t, made with the learned prompts
  Vector pseudo_label;    // y_tilde_t, prompt-free
  FissionOutcome outcome;
};

struct DomainUpdateRecord {
  Vector learned_prompt;  // P_d^*
  BatchStats batch_key;   // Gamma of the batch
  FissionOutcome outcome;
};

enum class ClassUpdateMode {
  kSequential,  // per-sample in-order convex updates
  kAveraged,    // batch-averaged form: mean over samples of the per-sample update
};

struct ClassFusionParams {
  double gamma_h = 2.0;  // entropy gate; samples above it are skipped
  double alpha_c = 0.1;
  ClassUpdateMode mode = ClassUpdateMode::kSequential;
};

// Single-linkage grouping of class-pool entries.
struct MstClustering {
  std::vector<std::size_t> group_of;  // pool index -> group id
  std::size_t num_groups = 0;

  friend bool operator==(const MstClustering&, const MstClustering&) = default;
};

struct ClassUpdateSummary {
  std::size_t gated = 0;
  std::size_t appended = 0;
  std::size_t blended = 0;  // (sample, entry) convex updates applied
  std::optional<MstClustering> compaction;
};

struct DomainUpdateSummary {
  bool appended = false;
  std::size_t blended = 0;
  std::optional<std::pair<std::size_t, std::size_t>> fused;
};

// Weighted edge of the single-linkage tree, distance = 1 - cosine similarity.
struct MstEdge {
  std::size_t a;
  std::size_t b;
  double distance;
};

// Kruskal over the complete graph of keys; edges ordered by (distance, a, b).
std::vector<MstEdge> minimum_spanning_tree(std::span<const Vector> keys);

// Cuts the spanning tree into `groups` components by dropping its heaviest
// edges. Group ids follow the smallest member index.
MstClustering single_linkage(std::span<const Vector> keys, std::size_t groups);

// Merges the class pool down to its capacity. Requires size() > capacity().
// Singleton groups keep their entry untouched; larger groups become one entry
// whose key (renormalized) and prompt are the unweighted member means.
MstClustering mst_compact(ClassPromptPool& pool);

ClassUpdateSummary update_class_pool(ClassPromptPool& pool, std::span<const ClassUpdateRecord> records,
                                     const ClassFusionParams& params, std::uint64_t batch_index);

// Requires size() >= 2. Returns the fused (i, j), i < j; the merged entry
// takes slot i.
std::pair<std::size_t, std::size_t> fuse_nearest_pair(DomainPromptPool& pool);

DomainUpdateSummary update_domain_pool(DomainPromptPool& pool, const DomainUpdateRecord& record,
                                       double alpha_d, std::uint64_t batch_index);

// Rescales a non-negative vector to unit sum (sequential summation).
void renormalize(Vector& key);

}  // namespace kff
