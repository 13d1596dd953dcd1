#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kff/fusion.hpp"
#include "kff/model.hpp"
#include "kff/objective.hpp"
#include "kff/pools.hpp"
#include "kff/rng.hpp"

namespace kff {

struct Hyperparams {
  double gamma_d = 25.0;
  double gamma_c = 0.005;
  double gamma_h = 2.0;
  double alpha_d = 0.1;
  double alpha_c = 0.1;
  double tau_d = 3.0;
  double tau_c = 1.0;
  double a = 3.0;
  double alpha_std = 1.0;
  std::size_t n_d = 20;
  std::size_t n_c = 100;
  double lr_domain = 0.1;
  double lr_class = 0.001;
  int steps = 1;
  double init_scale = 0.01;
  bool softmax_over_all = false;
  ClassUpdateMode class_update = ClassUpdateMode::kSequential;
  double prompt_scale = 1.0;
};

// Throws ConfigError when a field is outside its documented range.
void validate(const Hyperparams& hp);

// Everything the engine decided for one batch.
struct BatchStep {
  std::uint64_t batch_counter = 0;
  std::vector<Vector> pseudo_labels;
  std::vector<FissionOutcome> class_outcomes;
  BatchStats batch_key;
  FissionOutcome domain_outcome;
  OptimizedPrompts learned;
  std::vector<Vector> predictions;  // with the learned prompts
  double mean_entropy = 0.0;
  ClassUpdateSummary class_update;
  DomainUpdateSummary domain_update;
  std::size_t domain_pool_size = 0;
  std::size_t class_pool_size = 0;
};

// The online adapt-then-predict loop for one stream. Sees unlabeled samples
// only. Not thread-safe; one engine per stream.
class KffEngine {
 public:
  KffEngine(ToyModel model, SourceStats source, Hyperparams hp, std::uint64_t seed);

  // pseudo-labels -> class fission -> batch key -> domain fission ->
  // prompt optimization -> prediction -> class fusion -> domain fusion.
  BatchStep step(std::span<const Vector> samples);

  const ToyModel& model() const noexcept { return model_; }
  const Hyperparams& hyperparams() const noexcept { return hp_; }
  const SourceStats& source() const noexcept { return source_; }
  const ClassPromptPool& class_pool() const noexcept { return class_pool_; }
  const DomainPromptPool& domain_pool() const noexcept { return domain_pool_; }
  ClassPromptPool& mutable_class_pool() noexcept { return class_pool_; }
  DomainPromptPool& mutable_domain_pool() noexcept { return domain_pool_; }
  std::uint64_t batches_seen() const noexcept { return counter_; }
  std::size_t param_count() const noexcept {
    return (domain_pool_.size() + class_pool_.size()) * model_.dims().input_dim;
  }

 private:
  ToyModel model_;
  SourceStats source_;
  Hyperparams hp_;
  SeededRng rng_;
  ClassPromptPool class_pool_;
  DomainPromptPool domain_pool_;
  std::uint64_t counter_ = 0;
};

}  // namespace kff
