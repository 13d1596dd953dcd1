#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kff/engine.hpp"
#include "kff/stream.hpp"

namespace kff {

// Below this many source samples compute_source_stats warns.
inline constexpr std::size_t kRecommendedSourceSamples = 300;

// Feature mean/std of prompt-free source features. Throws below two samples;
// writes a warning to `warnings` (if given) below the recommended count.
SourceStats compute_source_stats(const ToyModel& model, std::span<const Vector> source_samples,
                                 std::vector<std::string>* warnings = nullptr);

// Knobs for the synthetic model and data generator.
struct GeneratorSetup {
  std::size_t feature_dim = 16;
  double class_separation = 4.0;
  double noise_std = 1.0;
  std::size_t num_domains = 3;
  std::size_t rounds = 1;
  double theta_margin = 3.0;   // theta = margin * intra spread when theta is unset
  double shift_scale = 5.0;    // single-domain streams: |A delta| / rms source feature std
  std::size_t source_samples = 300;
  std::size_t train_samples = 600;
  std::size_t probes_per_domain = 20;
};

struct SourceModel {
  ToyModel model;
  DomainSpec source_domain;
  SourceStats source;
};

SourceModel build_source_model(const StreamConfig& stream, const GeneratorSetup& setup, std::uint64_t seed);

struct GeneratedStream {
  SourceModel source;
  std::vector<DomainSpec> domains;
  std::vector<LabeledBatch> batches;
  SeparationCertificate certificate;
};

// Builds a source model and a certified stream. With one domain, the domain
// is a shift of norm shift_scale (in feature units) and the certificate only
// bounds the intra spread.
GeneratedStream generate_certified_stream(StreamConfig stream, const GeneratorSetup& setup,
                                          std::uint64_t seed);

struct BatchMetrics {
  std::size_t batch_idx = 0;
  int domain_id_true = 0;
  std::size_t round = 0;
  double error_rate = 0.0;
  double mean_entropy = 0.0;
  double loss_d = 0.0;
  double loss_c = 0.0;
  std::size_t pool_d_size = 0;
  std::size_t pool_c_size = 0;
  int fissioned_d = 0;
  std::size_t fissioned_c = 0;
  int fused_d = 0;
  std::size_t fused_c = 0;  // class entries removed by compaction
  std::size_t param_count = 0;
};

struct RunMetrics {
  std::vector<BatchMetrics> batches;
};

struct RunSummary {
  std::map<int, double> domain_mean_error;
  double overall_mean_error = 0.0;
  std::vector<double> round_mean_error;
  std::size_t final_pool_d_size = 0;
  std::size_t final_pool_c_size = 0;
  std::size_t domain_fissions = 0;
  std::size_t class_fissions = 0;
  std::size_t domain_fusions = 0;
  std::size_t class_fusions = 0;
};

RunSummary summarize(const RunMetrics& metrics);

// Called after every batch with the labeled batch and the engine's decisions.
// Observers never feed back into the engine.
using BatchObserver = std::function<void(const LabeledBatch&, const BatchStep&, const KffEngine&)>;

struct RunResult {
  RunMetrics metrics;
  ClassPromptPool class_pool;
  DomainPromptPool domain_pool;
};

// Rounds: a visit is a maximal run of batches of one domain; its round is the
// number of earlier visits to that domain.
std::vector<std::size_t> round_of_batches(std::span<const LabeledBatch> stream);

RunResult run_ctta(const ToyModel& model, std::span<const LabeledBatch> stream, const Hyperparams& hp,
                   const SourceStats& source, std::uint64_t seed, const BatchObserver& observer = {});

// Same as run_ctta but on an engine prepared by the caller (pre-seeded pools).
RunResult run_ctta(KffEngine& engine, std::span<const LabeledBatch> stream, const BatchObserver& observer = {});

double error_rate(std::span<const Vector> predictions, std::span<const int> labels);

void write_metrics_csv(const RunMetrics& metrics, std::ostream& out);

}  // namespace kff
