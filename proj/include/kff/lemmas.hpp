#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kff/harness.hpp"

namespace kff {

// Observer-only bookkeeping of which ground-truth cluster each domain-pool
// entry came from. Mirrors every append and fusion the engine performs.
class ClusterLedger {
 public:
  void observe(const LabeledBatch& batch, const BatchStep& step, const KffEngine& engine);

  std::size_t assignment_violations() const noexcept { return assignment_violations_; }
  std::size_t fusion_violations() const noexcept { return fusion_violations_; }
  std::size_t first_encounter_violations() const noexcept { return first_encounter_violations_; }
  std::size_t bound_violations() const noexcept { return bound_violations_; }
  std::size_t fusions() const noexcept { return fusions_; }
  std::size_t fissions() const noexcept { return fissions_; }
  const std::vector<std::string>& log() const noexcept { return log_; }
  // Cluster id per live domain-pool entry; -1 marks a mixed entry.
  const std::vector<int>& entry_clusters() const noexcept { return entry_cluster_; }

 private:
  void record(std::string message);

  std::vector<int> entry_cluster_;
  std::set<int> seen_;
  std::size_t assignment_violations_ = 0;
  std::size_t fusion_violations_ = 0;
  std::size_t first_encounter_violations_ = 0;
  std::size_t bound_violations_ = 0;
  std::size_t fusions_ = 0;
  std::size_t fissions_ = 0;
  std::vector<std::string> log_;
};

struct LemmaReport {
  std::vector<std::string> hypothesis_violations;
  std::size_t batches = 0;
  std::size_t clusters = 0;
  std::size_t fissions = 0;
  std::size_t fusions = 0;
  std::size_t assignment_violations = 0;
  std::size_t fusion_violations = 0;
  std::size_t first_encounter_violations = 0;
  std::size_t bound_violations = 0;
  std::vector<std::string> details;
  std::optional<RunMetrics> metrics;

  bool hypotheses_hold() const noexcept { return hypothesis_violations.empty(); }
  bool passed() const noexcept {
    return hypotheses_hold() && assignment_violations == 0 && fusion_violations == 0 &&
           first_encounter_violations == 0 && bound_violations == 0;
  }
};

// Checks the separation hypotheses (certificate valid and re-measured on the
// stream itself, gamma_d < theta, n_d > number of clusters), then runs the
// engine with a ClusterLedger attached. A failed hypothesis is reported as
// such and the run is skipped.
LemmaReport verify_lemmas(const ToyModel& model, const SourceStats& source, std::span<const LabeledBatch> stream,
                          const SeparationCertificate& certificate, const Hyperparams& hp, std::uint64_t seed);

struct SuiteParams {
  std::size_t streams = 200;
  std::uint64_t first_seed = 0;
  std::size_t min_domains = 2;
  std::size_t max_domains = 6;
  std::size_t batches_per_domain = 30;
  std::size_t visits = 2;  // each domain's batches are split over this many visits
  std::size_t batch_size = 16;
  std::size_t input_dim = 8;
  std::size_t num_classes = 4;
  double theta_margin = 1.1;
  std::size_t extra_pool_slots = 3;  // n_d = N + extra
};

struct SuiteReport {
  std::size_t streams = 0;
  std::size_t passed = 0;
  std::size_t total_fusions = 0;
  std::size_t total_fissions = 0;
  std::vector<std::string> failures;
  std::vector<RunMetrics> runs;
};

// Randomized certified streams, gamma_d = theta / 2.
SuiteReport run_lemma_suite(const SuiteParams& params, const Hyperparams& base, bool keep_metrics = false);

}  // namespace kff
