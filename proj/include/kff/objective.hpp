#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kff/model.hpp"
#include "kff/numerics.hpp"
#include "kff/pools.hpp"

namespace kff {

// Feature statistics of unlabeled source samples.
struct SourceStats {
  Vector mean;
  Vector std;
  std::size_t sample_count = 0;

  friend bool operator==(const SourceStats&, const SourceStats&) = default;
};

struct LossWeights {
  double a = 3.0;          // weight of the entropy term
  double alpha_std = 1.0;  // weight of the std-alignment term
  double prompt_scale = 1.0;
};

struct LossBreakdown {
  double domain = 0.0;   // L_d
  double entropy = 0.0;  // L_c
  double a = 0.0;
  double total = 0.0;    // L_d + a * L_c
};

// L_d = |mu_s - mu(P)| + alpha_std |sigma_s - sigma(P)| over prompted
// features, L_c = mean prediction entropy.
LossBreakdown loss(const ToyModel& model, std::span<const Vector> batch, const Vector& domain_prompt,
                   std::span<const Vector> class_prompts, const SourceStats& source,
                   const LossWeights& weights);

struct PromptGradients {
  Vector domain;                 // d total / d P_d
  std::vector<Vector> per_sample;  // d total / d P^t
  LossBreakdown loss;
};

// Closed-form gradient of loss(). A norm term that is exactly zero, and any
// feature dimension whose batch std is exactly zero, contributes the zero
// subgradient.
PromptGradients grad(const ToyModel& model, std::span<const Vector> batch, const Vector& domain_prompt,
                     std::span<const Vector> class_prompts, const SourceStats& source,
                     const LossWeights& weights);

struct AdamWParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  explicit AdamWState(std::size_t dim) : m(dim), v(dim) {}
};

// One bias-corrected AdamW step with decoupled weight decay. Rejects
// non-finite gradients before touching the state.
void adamw_step(AdamWState& state, const AdamWParams& params, Vector& prompt, const Vector& gradient);

struct OptimizeParams {
  int steps = 1;
  double lr_domain = 0.1;
  double lr_class = 0.001;
  LossWeights weights;
  AdamWParams adam;  // lr field ignored; per-kind rates above apply
};

struct OptimizedPrompts {
  Vector domain;
  std::vector<Vector> per_sample;
  LossBreakdown initial;
  LossBreakdown final;
};

// Runs `steps` AdamW steps from the composed prompts with fresh optimizer
// state. Pools are not touched.
OptimizedPrompts optimize_prompts(const ToyModel& model, std::span<const Vector> batch,
                                  const Vector& domain_prompt, std::span<const Vector> class_prompts,
                                  const SourceStats& source, const OptimizeParams& params);

OptimizedPrompts optimize_prompts(const ToyModel& model, std::span<const Vector> batch,
                                  const FissionOutcome& domain, std::span<const FissionOutcome> classes,
                                  const SourceStats& source, const OptimizeParams& params);

}  // namespace kff
