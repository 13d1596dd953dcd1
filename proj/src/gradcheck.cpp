#include "kff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "kff/kernels.hpp"
#include "kff/pools.hpp"
#include "kff/rng.hpp"

namespace kff {

PromptGradients finite_difference_grad(const ToyModel& model, std::span<const Vector> batch,
                                       const Vector& domain_prompt, std::span<const Vector> class_prompts,
                                       const SourceStats& source, const LossWeights& weights, double h) {
  const std::size_t n = domain_prompt.size();
  std::vector<Vector> prompts(class_prompts.begin(), class_prompts.end());
  Vector pd = domain_prompt;
  auto total = [&] { return loss(model, batch, pd, prompts, source, weights).total; };

  PromptGradients out{Vector(n), std::vector<Vector>(prompts.size(), Vector(n)), loss(model, batch, pd, prompts, source, weights)};
  for (std::size_t i = 0; i < n; ++i) {
    const double keep = pd[i];
    pd[i] = keep + h;
    const double up = total();
    pd[i] = keep - h;
    const double down = total();
    pd[i] = keep;
    out.domain[i] = (up - down) / (2.0 * h);
  }
  for (std::size_t t = 0; t < prompts.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = prompts[t][i];
      prompts[t][i] = keep + h;
      const double up = total();
      prompts[t][i] = keep - h;
      const double down = total();
      prompts[t][i] = keep;
      out.per_sample[t][i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

double relative_gradient_error(const PromptGradients& analytic, const PromptGradients& numeric) {
  double diff = 0.0;
  double na = 0.0;
  double nf = 0.0;
  auto accumulate = [&](const Vector& a, const Vector& f) {
    diff += kernels::squared_distance(a.span(), f.span());
    na += kernels::dot(a.span(), a.span());
    nf += kernels::dot(f.span(), f.span());
  };
  accumulate(analytic.domain, numeric.domain);
  for (std::size_t t = 0; t < analytic.per_sample.size(); ++t) accumulate(analytic.per_sample[t], numeric.per_sample[t]);
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-8});
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, SeededRng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = scale * rng.gaussian();
  return Matrix(rows, cols, std::move(v));
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t configs, std::uint64_t seed, double h, double kink_margin) {
  GradcheckReport report;
  SeededRng root(seed);
  for (std::size_t k = 0; k < configs; ++k) {
    SeededRng rng = root.derive(k);
    const auto b = static_cast<std::size_t>(rng.uniform_int(4, 16));
    const auto n = static_cast<std::size_t>(rng.uniform_int(3, 8));
    const auto m = static_cast<std::size_t>(rng.uniform_int(3, 8));
    const auto c = static_cast<std::size_t>(rng.uniform_int(3, 8));

    ToyModel model(gaussian_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(n)), rng),
                   gaussian_matrix(c, m, 1.0, rng), rng.gaussian_vector(c, 0.5), seed);
    std::vector<Vector> batch;
    for (std::size_t t = 0; t < b; ++t) batch.push_back(rng.gaussian_vector(n, 1.5));

    SourceStats source{rng.gaussian_vector(m, 1.0), Vector(m), 300};
    for (double& s : source.std) s = rng.uniform(0.3, 2.0);
    const LossWeights weights{rng.uniform(0.0, 5.0), rng.uniform(0.25, 2.0), 1.0};

    // Prompts come out of randomly filled pools, as in the engine.
    ClassPromptPool class_pool(100, n);
    for (int e = 0; e < 5; ++e) {
      class_pool.mutable_entries().push_back(
          {softmax(rng.gaussian_vector(c, 2.0).span()), rng.gaussian_vector(n, 0.5), 0});
    }
    DomainPromptPool domain_pool(20, n);
    const BatchStats key = key_stats(model, batch);
    domain_pool.mutable_entries().push_back({key, rng.gaussian_vector(n, 0.5), 0});
    const std::vector<Vector> pseudo = pseudo_labels(model, batch);
    std::vector<Vector> class_prompts;
    for (const Vector& y : pseudo) {
      class_prompts.push_back(fission_class(class_pool, y.span(), {0.005, 1.0, 0.3}, rng).composed_prompt);
    }
    const Vector domain_prompt = fission_domain(domain_pool, key, {1.0, 3.0, 0.3}, rng).composed_prompt;

    GradcheckCase gc{0.0, false, b, n, m, c};
    const ForwardResult fwd = forward(model, batch, domain_prompt, class_prompts);
    const BatchStats stats = batch_stats(fwd.features);
    const double min_std = *std::min_element(stats.std.begin(), stats.std.end());
    if (euclid(stats.mean.span(), source.mean.span()) < kink_margin ||
        euclid(stats.std.span(), source.std.span()) < kink_margin || min_std < kink_margin) {
      gc.skipped_kink = true;
      ++report.skipped;
    } else {
      const PromptGradients analytic = grad(model, batch, domain_prompt, class_prompts, source, weights);
      const PromptGradients numeric =
          finite_difference_grad(model, batch, domain_prompt, class_prompts, source, weights, h);
      gc.relative_error = relative_gradient_error(analytic, numeric);
      report.max_relative_error = std::max(report.max_relative_error, gc.relative_error);
      ++report.checked;
    }
    report.cases.push_back(gc);
  }
  return report;
}

}  // namespace kff
