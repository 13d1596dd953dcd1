#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kff/objective.hpp"

namespace kff {

// Central finite differences of loss().total with respect to every
// coordinate of the domain prompt and of each class prompt. Independent of
// grad(): it only ever evaluates the loss.
PromptGradients finite_difference_grad(const ToyModel& model, std::span<const Vector> batch,
                                       const Vector& domain_prompt, std::span<const Vector> class_prompts,
                                       const SourceStats& source, const LossWeights& weights, double h = 1e-5);

// |g_a - g_f| / max(|g_a|, |g_f|, 1e-8) over all prompt coordinates.
double relative_gradient_error(const PromptGradients& analytic, const PromptGradients& numeric);

struct GradcheckCase {
  double relative_error = 0.0;
  bool skipped_kink = false;
  std::size_t batch_size = 0;
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Random models, batches, and pool-composed prompts: b in [4, 16], each
// dimension in [3, 8]. Configurations within kink_margin of a norm kink
// are skipped.
GradcheckReport run_gradcheck(std::size_t configs, std::uint64_t seed, double h = 1e-5, double kink_margin = 1e-6);

}  // namespace kff
