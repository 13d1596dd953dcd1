#include "kff/objective.hpp"

#include <cmath>

#include "kff/error.hpp"
#include "kff/kernels.hpp"

namespace kff {

namespace {

void check_source(const ToyModel& model, const SourceStats& source) {
  require_same_dim(source.mean.size(), model.dims().feature_dim, "source stats mean");
  require_same_dim(source.std.size(), model.dims().feature_dim, "source stats std");
}

struct Pass {
  ForwardResult fwd;
  BatchStats stats;
  LossBreakdown loss;
};

Pass evaluate(const ToyModel& model, std::span<const Vector> batch, const Vector& domain_prompt,
              std::span<const Vector> class_prompts, const SourceStats& source,
              const LossWeights& weights) {
  if (batch.size() < 2) throw InsufficientDataError("loss: batch size must be at least 2");
  check_source(model, source);
  Pass p{forward(model, batch, domain_prompt, class_prompts, weights.prompt_scale), {}, {}};
  p.stats = batch_stats(p.fwd.features);
  double h = 0.0;
  for (const Vector& probs : p.fwd.probs) h += entropy(probs.span());
  p.loss.domain = euclid(source.mean.span(), p.stats.mean.span()) +
                  weights.alpha_std * euclid(source.std.span(), p.stats.std.span());
  p.loss.entropy = h / static_cast<double>(batch.size());
  p.loss.a = weights.a;
  p.loss.total = p.loss.domain + weights.a * p.loss.entropy;
  return p;
}

}  // namespace

LossBreakdown loss(const ToyModel& model, std::span<const Vector> batch, const Vector& domain_prompt,
                   std::span<const Vector> class_prompts, const SourceStats& source,
                   const LossWeights& weights) {
  return evaluate(model, batch, domain_prompt, class_prompts, source, weights).loss;
}

PromptGradients grad(const ToyModel& model, std::span<const Vector> batch, const Vector& domain_prompt,
                     std::span<const Vector> class_prompts, const SourceStats& source,
                     const LossWeights& weights) {
  const Pass p = evaluate(model, batch, domain_prompt, class_prompts, source, weights);
  const std::size_t b = batch.size();
  const std::size_t m = model.dims().feature_dim;
  const std::size_t c = model.dims().num_classes;
  const double inv_b = 1.0 / static_cast<double>(b);

  // Mean term: d|mu - mu_s| / dz_t = (mu - mu_s) / (|.| b).
  Vector mean_dir = p.stats.mean - source.mean;
  const double mean_gap = norm(mean_dir);
  kernels::scale(mean_dir.span(), mean_gap > 0.0 ? inv_b / mean_gap : 0.0);

  // Std term: d|sigma - sigma_s| / dsigma_k = (sigma_k - sigma_s_k) / |.|,
  // dsigma_k / dz_tk = (z_tk - mu_k) / (b sigma_k).
  Vector std_coef = p.stats.std - source.std;
  const double std_gap = norm(std_coef);
  for (std::size_t k = 0; k < m; ++k) {
    const double sigma = p.stats.std[k];
    std_coef[k] = (std_gap > 0.0 && sigma > 0.0)
                      ? weights.alpha_std * std_coef[k] / (std_gap * sigma) * inv_b
                      : 0.0;
  }

  PromptGradients out{Vector(model.dims().input_dim), {}, p.loss};
  out.per_sample.reserve(b);
  Vector g(m);
  Vector dlogits(c);
  for (std::size_t t = 0; t < b; ++t) {
    const Vector& z = p.fwd.features[t];
    for (std::size_t k = 0; k < m; ++k) {
      g[k] = mean_dir[k] + std_coef[k] * (z[k] - p.stats.mean[k]);
    }
    // dH/dl_j = -p_j (ln p_j + H), scaled by a / b.
    const Vector& probs = p.fwd.probs[t];
    const Vector logp = log_softmax(p.fwd.logits[t].span());
    const double h = entropy(probs.span());
    for (std::size_t j = 0; j < c; ++j) {
      dlogits[j] = -weights.a * inv_b * probs[j] * (logp[j] + h);
    }
    g += multiply_transposed(model.head(), dlogits.span());
    Vector gx = multiply_transposed(model.extractor(), g.span());
    kernels::scale(gx.span(), weights.prompt_scale);
    out.domain += gx;
    out.per_sample.push_back(std::move(gx));
  }
  return out;
}

void adamw_step(AdamWState& state, const AdamWParams& params, Vector& prompt, const Vector& gradient) {
  require_same_dim(prompt.size(), gradient.size(), "adamw_step: gradient");
  require_same_dim(prompt.size(), state.m.size(), "adamw_step: state");
  if (!gradient.all_finite()) throw DomainError("adamw_step: non-finite gradient");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(params.beta1, t);
  const double bc2 = 1.0 - std::pow(params.beta2, t);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const double g = gradient[i];
    prompt[i] *= 1.0 - params.lr * params.weight_decay;
    state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * g;
    state.v[i] = params.beta2 * state.v[i] + (1.0 - params.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    prompt[i] -= params.lr * m_hat / (std::sqrt(v_hat) + params.eps);
  }
}

OptimizedPrompts optimize_prompts(const ToyModel& model, std::span<const Vector> batch,
                                  const Vector& domain_prompt, std::span<const Vector> class_prompts,
                                  const SourceStats& source, const OptimizeParams& params) {
  if (params.steps < 0) throw ConfigError("optimize_prompts: negative step count");
  const std::size_t n = model.dims().input_dim;
  OptimizedPrompts out{domain_prompt, {class_prompts.begin(), class_prompts.end()}, {}, {}};

  AdamWParams domain_adam = params.adam;
  domain_adam.lr = params.lr_domain;
  AdamWParams class_adam = params.adam;
  class_adam.lr = params.lr_class;
  AdamWState domain_state(n);
  std::vector<AdamWState> class_states(batch.size(), AdamWState(n));

  for (int step = 0; step < params.steps; ++step) {
    const PromptGradients g = grad(model, batch, out.domain, out.per_sample, source, params.weights);
    if (step == 0) out.initial = g.loss;
    adamw_step(domain_state, domain_adam, out.domain, g.domain);
    for (std::size_t t = 0; t < batch.size(); ++t) {
      adamw_step(class_states[t], class_adam, out.per_sample[t], g.per_sample[t]);
    }
  }
  out.final = loss(model, batch, out.domain, out.per_sample, source, params.weights);
  if (params.steps == 0) out.initial = out.final;
  return out;
}

OptimizedPrompts optimize_prompts(const ToyModel& model, std::span<const Vector> batch,
                                  const FissionOutcome& domain, std::span<const FissionOutcome> classes,
                                  const SourceStats& source, const OptimizeParams& params) {
  std::vector<Vector> composed;
  composed.reserve(classes.size());
  for (const FissionOutcome& o : classes) composed.push_back(o.composed_prompt);
  return optimize_prompts(model, batch, domain.composed_prompt, composed, source, params);
}

}  // namespace kff
