#include "kff/engine.hpp"

#include <cmath>

#include "kff/error.hpp"

namespace kff {

void validate(const Hyperparams& hp) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("hyperparams: ") + what);
  };
  require(hp.gamma_d > 0.0, "gamma_d must be positive");
  require(hp.gamma_c > -1.0 && hp.gamma_c < 1.0, "gamma_c must lie in (-1, 1)");
  require(hp.gamma_h >= 0.0, "gamma_h must be >= 0");
  require(hp.alpha_d >= 0.0 && hp.alpha_d <= 1.0, "alpha_d must lie in [0, 1]");
  require(hp.alpha_c >= 0.0 && hp.alpha_c <= 1.0, "alpha_c must lie in [0, 1]");
  require(hp.tau_d > 0.0, "tau_d must be positive");
  require(hp.tau_c > 0.0, "tau_c must be positive");
  require(hp.a >= 0.0, "a must be >= 0");
  require(hp.alpha_std >= 0.0, "alpha_std must be >= 0");
  require(hp.n_d >= 1, "n_d must be positive");
  require(hp.n_c >= 1, "n_c must be positive");
  require(hp.lr_domain >= 0.0 && std::isfinite(hp.lr_domain), "lr_domain must be >= 0");
  require(hp.lr_class >= 0.0 && std::isfinite(hp.lr_class), "lr_class must be >= 0");
  require(hp.steps >= 0 && hp.steps <= 1000, "steps must lie in [0, 1000]");
  require(hp.init_scale >= 0.0, "init_scale must be >= 0");
  require(hp.prompt_scale > 0.0 && std::isfinite(hp.prompt_scale), "prompt_scale must be positive");
}

KffEngine::KffEngine(ToyModel model, SourceStats source, Hyperparams hp, std::uint64_t seed)
    : model_(std::move(model)),
      source_(std::move(source)),
      hp_(hp),
      rng_(seed),
      class_pool_(hp.n_c, model_.dims().input_dim),
      domain_pool_(hp.n_d, model_.dims().input_dim) {
  validate(hp_);
  require_same_dim(source_.mean.size(), model_.dims().feature_dim, "engine: source stats");
}

BatchStep KffEngine::step(std::span<const Vector> samples) {
  if (samples.size() < 2) throw InsufficientDataError("engine: batch size must be at least 2");
  BatchStep out;
  out.batch_counter = counter_;

  out.pseudo_labels = pseudo_labels(model_, samples);
  const FissionParams class_params{hp_.gamma_c, hp_.tau_c, hp_.init_scale, hp_.softmax_over_all};
  out.class_outcomes = fission_class_batch(class_pool_, out.pseudo_labels, class_params, rng_);

  out.batch_key = key_stats(model_, samples);
  const FissionParams domain_params{hp_.gamma_d, hp_.tau_d, hp_.init_scale, hp_.softmax_over_all};
  out.domain_outcome = fission_domain(domain_pool_, out.batch_key, domain_params, rng_);

  OptimizeParams opt;
  opt.steps = hp_.steps;
  opt.lr_domain = hp_.lr_domain;
  opt.lr_class = hp_.lr_class;
  opt.weights = {hp_.a, hp_.alpha_std, hp_.prompt_scale};
  out.learned = optimize_prompts(model_, samples, out.domain_outcome, out.class_outcomes, source_, opt);

  // The batch's answer is fixed here, before any pool mutation.
  out.predictions =
      forward(model_, samples, out.learned.domain, out.learned.per_sample, hp_.prompt_scale).probs;
  double h = 0.0;
  for (const Vector& p : out.predictions) h += entropy(p.span());
  out.mean_entropy = h / static_cast<double>(samples.size());

  std::vector<ClassUpdateRecord> records;
  records.reserve(samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) {
    records.push_back({out.learned.per_sample[t], out.predictions[t], out.pseudo_labels[t],
                       out.class_outcomes[t]});
  }
  out.class_update = update_class_pool(class_pool_, records, {hp_.gamma_h, hp_.alpha_c, hp_.class_update},
                                       counter_);
  out.domain_update = update_domain_pool(
      domain_pool_, {out.learned.domain, out.batch_key, out.domain_outcome}, hp_.alpha_d, counter_);

  out.domain_pool_size = domain_pool_.size();
  out.class_pool_size = class_pool_.size();
  ++counter_;
  return out;
}

}  // namespace kff
