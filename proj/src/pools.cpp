#include "kff/pools.hpp"

#include <algorithm>
#include <cmath>

#include "kff/kernels.hpp"
#include "kff/rng.hpp"

namespace kff {

namespace {

// Softmax over `scores` restricted to `selected` (or over all when
// over_all is set). Returns weights for the indices that take part.
std::vector<CandidateWeight> weigh(std::span<const double> scores,
                                   std::span<const std::size_t> selected, bool over_all) {
  std::vector<std::size_t> members;
  if (over_all) {
    members.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) members[i] = i;
  } else {
    members.assign(selected.begin(), selected.end());
  }
  double peak = -INFINITY;
  for (std::size_t i : members) peak = std::max(peak, scores[i]);
  std::vector<CandidateWeight> out;
  out.reserve(members.size());
  double total = 0.0;
  for (std::size_t i : members) {
    const double e = std::exp(scores[i] - peak);
    out.push_back({i, e});
    total += e;
  }
  for (CandidateWeight& c : out) c.weight /= total;
  return out;
}

template <typename Pool>
FissionOutcome compose(const Pool& pool, std::vector<CandidateWeight> weights) {
  Vector composed(pool.prompt_dim());
  for (const CandidateWeight& c : weights) {
    kernels::add_scaled(composed.span(), c.weight, pool[c.index].prompt.span());
  }
  return FissionOutcome{std::move(composed), std::move(weights), pool.version()};
}

template <typename Pool>
FissionOutcome fresh(const Pool& pool, const FissionParams& params, SeededRng& rng) {
  return FissionOutcome{rng.gaussian_vector(pool.prompt_dim(), params.init_scale), std::nullopt,
                        pool.version()};
}

void check_params(const FissionParams& params) {
  if (!(params.temperature > 0.0)) throw ConfigError("fission: temperature must be positive");
  if (!(params.init_scale >= 0.0)) throw ConfigError("fission: init_scale must be non-negative");
}

}  // namespace

FissionOutcome fission_class(const ClassPromptPool& pool, std::span<const double> pseudo_label,
                             const FissionParams& params, SeededRng& rng) {
  check_params(params);
  if (!(params.threshold > -1.0 && params.threshold < 1.0)) {
    throw ConfigError("fission_class: gamma_c must lie in (-1, 1)");
  }
  if (!is_probability_vector(pseudo_label)) {
    throw DomainError("fission_class: pseudo-label is not a probability vector");
  }

  std::vector<double> scores(pool.size());
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    require_same_dim(pool[i].key.size(), pseudo_label.size(), "fission_class: key");
    const double sim = cosine_sim(pseudo_label, pool[i].key.span());
    scores[i] = sim / params.temperature;
    if (sim > params.threshold) candidates.push_back(i);
  }
  if (candidates.empty()) return fresh(pool, params, rng);
  return compose(pool, weigh(scores, candidates, params.softmax_over_all));
}

std::vector<FissionOutcome> fission_class_batch(const ClassPromptPool& pool,
                                                std::span<const Vector> pseudo_labels,
                                                const FissionParams& params, SeededRng& rng) {
  std::vector<FissionOutcome> out;
  out.reserve(pseudo_labels.size());
  for (const Vector& y : pseudo_labels) out.push_back(fission_class(pool, y.span(), params, rng));
  return out;
}

FissionOutcome fission_domain(const DomainPromptPool& pool, const BatchStats& stats,
                              const FissionParams& params, SeededRng& rng) {
  check_params(params);
  if (!(params.threshold > 0.0)) throw ConfigError("fission_domain: gamma_d must be positive");
  require_same_dim(stats.mean.size(), stats.std.size(), "fission_domain: key");

  std::vector<double> scores(pool.size());
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double d = stats_distance(stats, pool[i].key);
    scores[i] = -d / params.temperature;
    if (d < params.threshold) candidates.push_back(i);
  }
  if (candidates.empty()) return fresh(pool, params, rng);
  return compose(pool, weigh(scores, candidates, params.softmax_over_all));
}

}  // namespace kff
