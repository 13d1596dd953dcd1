#include "kff/model.hpp"

#include <cmath>

#include "kff/error.hpp"
#include "kff/kernels.hpp"
#include "kff/rng.hpp"

namespace kff {

ToyModel::ToyModel(Matrix extractor, Matrix head, Vector bias, std::uint64_t seed)
    : dims_{extractor.cols(), extractor.rows(), head.rows()},
      extractor_(std::move(extractor)),
      head_(std::move(head)),
      bias_(std::move(bias)),
      seed_(seed) {
  if (dims_.input_dim == 0 || dims_.feature_dim == 0 || dims_.num_classes == 0) {
    throw DimensionError("ToyModel: zero dimension");
  }
  require_same_dim(head_.cols(), dims_.feature_dim, "ToyModel head columns");
  require_same_dim(bias_.size(), dims_.num_classes, "ToyModel bias");
}

Vector ToyModel::features(std::span<const double> input) const {
  return multiply(extractor_, input);
}

Vector ToyModel::logits(std::span<const double> features) const {
  Vector out = multiply(head_, features);
  out += bias_;
  return out;
}

ForwardResult forward(const ToyModel& model, std::span<const Vector> batch,
                      const Vector& domain_prompt, std::span<const Vector> class_prompts,
                      double prompt_scale) {
  if (batch.empty()) throw DimensionError("forward: empty batch");
  require_same_dim(batch.size(), class_prompts.size(), "forward: one class prompt per sample");
  const std::size_t n = model.dims().input_dim;
  require_same_dim(domain_prompt.size(), n, "forward: domain prompt");

  ForwardResult out;
  out.features.reserve(batch.size());
  out.logits.reserve(batch.size());
  out.probs.reserve(batch.size());
  Vector prompted(n);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    require_same_dim(batch[t].size(), n, "forward: sample");
    require_same_dim(class_prompts[t].size(), n, "forward: class prompt");
    for (std::size_t i = 0; i < n; ++i) {
      prompted[i] = batch[t][i] + prompt_scale * (domain_prompt[i] + class_prompts[t][i]);
    }
    Vector z = model.features(prompted.span());
    Vector y = model.logits(z.span());
    out.probs.push_back(softmax(y.span()));
    out.logits.push_back(std::move(y));
    out.features.push_back(std::move(z));
  }
  return out;
}

std::vector<Vector> pseudo_labels(const ToyModel& model, std::span<const Vector> batch) {
  if (batch.empty()) throw DimensionError("pseudo_labels: empty batch");
  std::vector<Vector> out;
  out.reserve(batch.size());
  for (const Vector& x : batch) {
    require_same_dim(x.size(), model.dims().input_dim, "pseudo_labels: sample");
    out.push_back(softmax(model.logits(model.features(x.span()).span()).span()));
  }
  return out;
}

BatchStats key_stats(const ToyModel& model, std::span<const Vector> batch) {
  if (batch.size() < 2) throw InsufficientDataError("key_stats: batch size must be at least 2");
  std::vector<Vector> features;
  features.reserve(batch.size());
  for (const Vector& x : batch) {
    require_same_dim(x.size(), model.dims().input_dim, "key_stats: sample");
    features.push_back(model.features(x.span()));
  }
  return batch_stats(features);
}

Matrix random_extractor(std::size_t feature_dim, std::size_t input_dim, SeededRng& rng) {
  if (feature_dim == 0 || input_dim == 0) throw DimensionError("random_extractor: zero dimension");
  const double s = 1.0 / std::sqrt(static_cast<double>(input_dim));
  std::vector<double> values(feature_dim * input_dim);
  for (double& v : values) v = s * rng.gaussian();
  return Matrix(feature_dim, input_dim, std::move(values));
}

HeadFit fit_head(const Matrix& extractor, std::span<const Vector> inputs,
                 std::span<const int> labels, std::size_t num_classes,
                 const HeadFitOptions& options) {
  require_same_dim(inputs.size(), labels.size(), "fit_head: labels");
  if (inputs.empty()) throw InsufficientDataError("fit_head: no samples");
  if (num_classes == 0) throw DimensionError("fit_head: zero classes");

  const std::size_t m = extractor.rows();
  std::vector<Vector> feats;
  feats.reserve(inputs.size());
  double mean_sq = 0.0;
  for (const Vector& x : inputs) {
    feats.push_back(multiply(extractor, x.span()));
    mean_sq += kernels::dot(feats.back().span(), feats.back().span()) + 1.0;
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("fit_head: label out of range");
    }
  }
  mean_sq /= static_cast<double>(inputs.size());
  // Step 1/L with L bounding the softmax cross-entropy curvature.
  const double step = 1.0 / (0.5 * mean_sq + options.l2);
  const double inv_n = 1.0 / static_cast<double>(inputs.size());

  // Nesterov-accelerated gradient descent with gradient-based restart.
  HeadFit fit{Matrix(num_classes, m), Vector(num_classes), 0, 0.0};
  Matrix look_w = fit.head;
  Vector look_c = fit.bias;
  Matrix grad_w(num_classes, m);
  Vector grad_c(num_classes);
  Vector p(num_classes);
  double t = 1.0;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (std::size_t r = 0; r < num_classes; ++r) {
      for (std::size_t k = 0; k < m; ++k) grad_w(r, k) = options.l2 * look_w(r, k);
      grad_c[r] = 0.0;
    }
    for (std::size_t s = 0; s < feats.size(); ++s) {
      double peak = -INFINITY;
      for (std::size_t r = 0; r < num_classes; ++r) {
        p[r] = kernels::dot(look_w.row(r), feats[s].span()) + look_c[r];
        peak = std::max(peak, p[r]);
      }
      double total = 0.0;
      for (std::size_t r = 0; r < num_classes; ++r) {
        p[r] = std::exp(p[r] - peak);
        total += p[r];
      }
      for (std::size_t r = 0; r < num_classes; ++r) p[r] /= total;
      p[static_cast<std::size_t>(labels[s])] -= 1.0;
      for (std::size_t r = 0; r < num_classes; ++r) {
        kernels::add_scaled(grad_w.row(r), p[r] * inv_n, feats[s].span());
        grad_c[r] += p[r] * inv_n;
      }
    }
    double gsq = kernels::dot(grad_c.span(), grad_c.span());
    gsq += kernels::dot(grad_w.data(), grad_w.data());
    fit.gradient_norm = std::sqrt(gsq);
    fit.iterations = iter;
    if (fit.gradient_norm < options.tolerance) {
      fit.head = look_w;
      fit.bias = look_c;
      break;
    }
    Matrix next_w = look_w;
    Vector next_c = look_c;
    double progress = 0.0;
    for (std::size_t r = 0; r < num_classes; ++r) {
      kernels::add_scaled(next_w.row(r), -step, grad_w.row(r));
      next_c[r] -= step * grad_c[r];
      for (std::size_t k = 0; k < m; ++k) progress += grad_w(r, k) * (next_w(r, k) - fit.head(r, k));
      progress += grad_c[r] * (next_c[r] - fit.bias[r]);
    }
    if (progress > 0.0) t = 1.0;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double momentum = (t - 1.0) / t_next;
    t = t_next;
    look_w = next_w;
    look_c = next_c;
    for (std::size_t r = 0; r < num_classes; ++r) {
      for (std::size_t k = 0; k < m; ++k) look_w(r, k) += momentum * (next_w(r, k) - fit.head(r, k));
      look_c[r] += momentum * (next_c[r] - fit.bias[r]);
    }
    fit.head = std::move(next_w);
    fit.bias = std::move(next_c);
  }
  return fit;
}

}  // namespace kff
