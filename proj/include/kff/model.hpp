#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kff/numerics.hpp"

namespace kff {

class SeededRng;

struct ModelDims {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// The frozen source model: linear extractor A followed by a softmax head
// (W, c). Immutable after construction; only prompts are ever learned.
class ToyModel {
 public:
  ToyModel(Matrix extractor, Matrix head, Vector bias, std::uint64_t seed);

  ModelDims dims() const noexcept { return dims_; }
  const Matrix& extractor() const noexcept { return extractor_; }
  const Matrix& head() const noexcept { return head_; }
  const Vector& bias() const noexcept { return bias_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Vector features(std::span<const double> input) const;
  Vector logits(std::span<const double> features) const;

  friend bool operator==(const ToyModel&, const ToyModel&) = default;

 private:
  ModelDims dims_;
  Matrix extractor_;
  Matrix head_;
  Vector bias_;
  std::uint64_t seed_;
};

struct ForwardResult {
  std::vector<Vector> features;
  std::vector<Vector> logits;
  std::vector<Vector> probs;
};

// z_t = A (x_t + s (P_d + P^t)), y_t = softmax(W z_t + c), s = prompt_scale.
ForwardResult forward(const ToyModel& model, std::span<const Vector> batch,
                      const Vector& domain_prompt, std::span<const Vector> class_prompts,
                      double prompt_scale = 1.0);

// Prompt-free predictions, used as class-pool matching keys.
std::vector<Vector> pseudo_labels(const ToyModel& model, std::span<const Vector> batch);

// Mean/std of prompt-free features: the domain-pool matching key.
BatchStats key_stats(const ToyModel& model, std::span<const Vector> batch);

// Gaussian extractor scaled by 1/sqrt(input_dim).
Matrix random_extractor(std::size_t feature_dim, std::size_t input_dim, SeededRng& rng);

struct HeadFitOptions {
  double l2 = 1e-3;
  double tolerance = 1e-5;
  int max_iterations = 20000;
};

struct HeadFit {
  Matrix head;
  Vector bias;
  int iterations = 0;
  double gradient_norm = 0.0;
};

// Multinomial logistic regression on extracted features, accelerated full-batch
// gradient descent until the gradient norm drops below tolerance.
HeadFit fit_head(const Matrix& extractor, std::span<const Vector> inputs,
                 std::span<const int> labels, std::size_t num_classes,
                 const HeadFitOptions& options = {});

}  // namespace kff
