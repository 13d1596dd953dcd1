#include "kff/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "kff/error.hpp"
#include "kff/rng.hpp"

namespace kff {

SourceStats compute_source_stats(const ToyModel& model, std::span<const Vector> source_samples,
                                 std::vector<std::string>* warnings) {
  if (source_samples.size() < 2) throw InsufficientDataError("source stats: need at least 2 samples");
  if (source_samples.size() < kRecommendedSourceSamples && warnings != nullptr) {
    warnings->push_back("source stats computed from " + std::to_string(source_samples.size()) +
                        " samples; " + std::to_string(kRecommendedSourceSamples) + " recommended");
  }
  BatchStats s = key_stats(model, source_samples);
  return SourceStats{std::move(s.mean), std::move(s.std), source_samples.size()};
}

SourceModel build_source_model(const StreamConfig& stream, const GeneratorSetup& setup, std::uint64_t seed) {
  SeededRng root(seed);
  SeededRng domain_rng = root.derive(1);
  SeededRng extractor_rng = root.derive(2);
  SeededRng train_rng = root.derive(3);
  SeededRng source_rng = root.derive(4);

  DomainSpec source_domain = make_source_domain(stream.input_dim, stream.num_classes, setup.class_separation,
                                                setup.noise_std, domain_rng);
  Matrix extractor = random_extractor(setup.feature_dim, stream.input_dim, extractor_rng);
  std::vector<int> labels;
  const std::vector<Vector> train =
      sample_inputs(source_domain, setup.train_samples, stream.num_classes, train_rng, &labels);
  HeadFit fit = fit_head(extractor, train, labels, stream.num_classes);
  ToyModel model(std::move(extractor), std::move(fit.head), std::move(fit.bias), seed);
  const std::vector<Vector> unlabeled =
      sample_inputs(source_domain, setup.source_samples, stream.num_classes, source_rng);
  SourceStats source = compute_source_stats(model, unlabeled);
  return SourceModel{std::move(model), std::move(source_domain), std::move(source)};
}

GeneratedStream generate_certified_stream(StreamConfig stream, const GeneratorSetup& setup, std::uint64_t seed) {
  if (setup.num_domains == 0) throw ConfigError("num_domains must be positive");
  stream.seed = seed;
  if (stream.domain_order.empty()) {
    for (std::size_t r = 0; r < std::max<std::size_t>(setup.rounds, 1); ++r) {
      for (std::size_t d = 0; d < setup.num_domains; ++d) stream.domain_order.push_back(static_cast<int>(d));
    }
  }
  validate(stream);

  GeneratedStream out{build_source_model(stream, setup, seed), {}, {}, {}};
  const ToyModel& model = out.source.model;
  SeededRng root(seed);
  SeededRng spread_rng = root.derive(5);
  // Shifts leave the key spread unchanged in distribution, so the spread is
  // sampled over as many batches as the certificate will compare.
  std::size_t visits = 0;
  for (int d : stream.domain_order) visits += d == stream.domain_order.front() ? 1 : 0;
  const std::size_t spread_probes =
      setup.num_domains * (setup.probes_per_domain + visits * stream.batches_per_domain);
  const double spread = intra_spread(out.source.source_domain, model, stream.batch_size, stream.num_classes,
                                     spread_probes, spread_rng);
  const double theta = stream.theta.value_or(setup.theta_margin * spread);

  constexpr int kAttempts = 8;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    SeededRng domain_rng = root.derive(100 + static_cast<std::uint64_t>(attempt));
    SeededRng stream_rng = root.derive(200 + static_cast<std::uint64_t>(attempt));
    SeparationCertificate cert{theta, 0.0, INFINITY, 0, seed};
    if (setup.num_domains == 1) {
      double rms = 0.0;
      for (double s : out.source.source.std) rms += s * s;
      rms = std::sqrt(rms / static_cast<double>(out.source.source.std.size()));
      Vector dir = domain_rng.gaussian_vector(stream.input_dim, 1.0);
      const double feature_len = norm(model.features(dir.span()));
      out.domains = {shifted_domain(out.source.source_domain, 0, (setup.shift_scale * rms / feature_len) * dir)};
    } else {
      SeparatedDomains sep;
      try {
        sep = make_separated(stream, out.source.source_domain, setup.num_domains, theta, model, domain_rng,
                             setup.probes_per_domain);
      } catch (const HypothesisError&) {
        continue;
      }
      out.domains = std::move(sep.domains);
      cert = sep.certificate;
    }
    out.batches = generate_stream(stream, out.domains, stream_rng);
    const Separation s = measure_separation(model, out.batches);
    cert.max_intra = std::max(cert.max_intra, s.max_intra);
    cert.min_inter = std::min(cert.min_inter, s.min_inter);
    cert.probe_batches += out.batches.size();
    if (cert.valid()) {
      out.certificate = cert;
      return out;
    }
  }
  throw HypothesisError("could not generate a stream satisfying the separation certificate");
}

double error_rate(std::span<const Vector> predictions, std::span<const int> labels) {
  require_same_dim(predictions.size(), labels.size(), "error_rate");
  if (predictions.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    const auto best = std::max_element(predictions[t].begin(), predictions[t].end()) - predictions[t].begin();
    if (best != labels[t]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

std::vector<std::size_t> round_of_batches(std::span<const LabeledBatch> stream) {
  std::vector<std::size_t> rounds(stream.size(), 0);
  std::map<int, std::size_t> visits;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const int d = stream[i].domain_id;
    if (i == 0 || stream[i - 1].domain_id != d) ++visits[d];
    rounds[i] = visits[d] - 1;
  }
  return rounds;
}

RunResult run_ctta(KffEngine& engine, std::span<const LabeledBatch> stream, const BatchObserver& observer) {
  if (stream.empty()) throw ConfigError("run_ctta: empty stream");
  const std::vector<std::size_t> rounds = round_of_batches(stream);
  RunMetrics metrics;
  metrics.batches.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const LabeledBatch& batch = stream[i];
    const BatchStep step = engine.step(batch.samples);

    BatchMetrics m;
    m.batch_idx = batch.batch_index;
    m.domain_id_true = batch.domain_id;
    m.round = rounds[i];
    m.error_rate = error_rate(step.predictions, batch.labels);
    m.mean_entropy = step.mean_entropy;
    m.loss_d = step.learned.final.domain;
    m.loss_c = step.learned.final.entropy;
    m.pool_d_size = step.domain_pool_size;
    m.pool_c_size = step.class_pool_size;
    m.fissioned_d = step.domain_outcome.fissioned() ? 1 : 0;
    m.fissioned_c = static_cast<std::size_t>(std::count_if(
        step.class_outcomes.begin(), step.class_outcomes.end(), [](const FissionOutcome& o) { return o.fissioned(); }));
    m.fused_d = step.domain_update.fused ? 1 : 0;
    if (step.class_update.compaction) {
      m.fused_c = step.class_update.compaction->group_of.size() - step.class_update.compaction->num_groups;
    }
    m.param_count = engine.param_count();
    metrics.batches.push_back(m);
    if (observer) observer(batch, step, engine);
  }
  return RunResult{std::move(metrics), engine.class_pool(), engine.domain_pool()};
}

RunResult run_ctta(const ToyModel& model, std::span<const LabeledBatch> stream, const Hyperparams& hp,
                   const SourceStats& source, std::uint64_t seed, const BatchObserver& observer) {
  KffEngine engine(model, source, hp, seed);
  return run_ctta(engine, stream, observer);
}

RunSummary summarize(const RunMetrics& metrics) {
  RunSummary s;
  std::map<int, std::pair<double, std::size_t>> per_domain;
  std::vector<std::pair<double, std::size_t>> per_round;
  double total = 0.0;
  for (const BatchMetrics& m : metrics.batches) {
    auto& d = per_domain[m.domain_id_true];
    d.first += m.error_rate;
    ++d.second;
    if (per_round.size() <= m.round) per_round.resize(m.round + 1, {0.0, 0});
    per_round[m.round].first += m.error_rate;
    ++per_round[m.round].second;
    total += m.error_rate;
    s.domain_fissions += static_cast<std::size_t>(m.fissioned_d);
    s.class_fissions += m.fissioned_c;
    s.domain_fusions += static_cast<std::size_t>(m.fused_d);
    s.class_fusions += m.fused_c;
  }
  for (const auto& [id, acc] : per_domain) s.domain_mean_error[id] = acc.first / static_cast<double>(acc.second);
  for (const auto& acc : per_round) {
    s.round_mean_error.push_back(acc.second ? acc.first / static_cast<double>(acc.second) : 0.0);
  }
  if (!metrics.batches.empty()) {
    s.overall_mean_error = total / static_cast<double>(metrics.batches.size());
    s.final_pool_d_size = metrics.batches.back().pool_d_size;
    s.final_pool_c_size = metrics.batches.back().pool_c_size;
  }
  return s;
}

void write_metrics_csv(const RunMetrics& metrics, std::ostream& out) {
  out << "batch_idx,domain_id_true,error_rate,mean_entropy,loss_d,loss_c,pool_d_size,pool_c_size,"
         "fissioned_d,fissioned_c,param_count\n";
  char buf[256];
  for (const BatchMetrics& m : metrics.batches) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%.10g,%.10g,%.10g,%.10g,%zu,%zu,%d,%zu,%zu\n", m.batch_idx,
                  m.domain_id_true, m.error_rate, m.mean_entropy, m.loss_d, m.loss_c, m.pool_d_size,
                  m.pool_c_size, m.fissioned_d, m.fissioned_c, m.param_count);
    out << buf;
  }
}

}  // namespace kff
