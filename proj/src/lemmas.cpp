#include "kff/lemmas.hpp"

#include <algorithm>
#include <cmath>

#include "kff/error.hpp"

namespace kff {

void ClusterLedger::record(std::string message) {
  if (log_.size() < 64) log_.push_back(std::move(message));
}

void ClusterLedger::observe(const LabeledBatch& batch, const BatchStep& step, const KffEngine& engine) {
  const int cluster = batch.domain_id;
  const std::string where = "batch " + std::to_string(batch.batch_index) + ": ";

  const bool first_time = seen_.insert(cluster).second;
  if (step.domain_outcome.fissioned()) {
    ++fissions_;
  } else {
    if (first_time) {
      ++first_encounter_violations_;
      record(where + "first batch of cluster " + std::to_string(cluster) + " matched an existing prompt");
    }
    for (const CandidateWeight& c : *step.domain_outcome.weights) {
      if (entry_cluster_.at(c.index) != cluster) {
        ++assignment_violations_;
        record(where + "cluster " + std::to_string(cluster) + " matched entry " + std::to_string(c.index) +
               " of cluster " + std::to_string(entry_cluster_[c.index]));
      }
    }
  }

  if (step.domain_update.appended) entry_cluster_.push_back(cluster);
  if (step.domain_update.fused) {
    ++fusions_;
    const auto [i, j] = *step.domain_update.fused;
    if (entry_cluster_.at(i) != entry_cluster_.at(j) || entry_cluster_[i] < 0) {
      ++fusion_violations_;
      record(where + "fused entries of clusters " + std::to_string(entry_cluster_[i]) + " and " +
             std::to_string(entry_cluster_[j]));
      entry_cluster_[i] = -1;
    }
    entry_cluster_.erase(entry_cluster_.begin() + static_cast<std::ptrdiff_t>(j));
  }
  if (entry_cluster_.size() != engine.domain_pool().size()) {
    throw ConsistencyError("cluster ledger out of sync with the domain pool");
  }
  const Hyperparams& hp = engine.hyperparams();
  if (engine.domain_pool().size() > hp.n_d || engine.class_pool().size() > hp.n_c) {
    ++bound_violations_;
    record(where + "pool over capacity");
  }
}

LemmaReport verify_lemmas(const ToyModel& model, const SourceStats& source, std::span<const LabeledBatch> stream,
                          const SeparationCertificate& certificate, const Hyperparams& hp, std::uint64_t seed) {
  LemmaReport report;
  report.batches = stream.size();
  std::set<int> clusters;
  for (const LabeledBatch& b : stream) clusters.insert(b.domain_id);
  report.clusters = clusters.size();

  auto fmt = [](double v) { return std::isfinite(v) ? std::to_string(v) : std::string("inf"); };
  if (!certificate.valid()) {
    report.hypothesis_violations.push_back("certificate invalid: max_intra " + fmt(certificate.max_intra) +
                                           ", theta " + fmt(certificate.theta) + ", min_inter " +
                                           fmt(certificate.min_inter));
  }
  if (!(hp.gamma_d < certificate.theta)) {
    report.hypothesis_violations.push_back("gamma_d " + fmt(hp.gamma_d) + " is not below theta " +
                                           fmt(certificate.theta));
  }
  if (!(hp.n_d > clusters.size())) {
    report.hypothesis_violations.push_back("n_d " + std::to_string(hp.n_d) + " does not exceed cluster count " +
                                           std::to_string(clusters.size()));
  }
  if (clusters.size() > 1) {
    const Separation s = measure_separation(model, stream);
    if (!(s.max_intra < certificate.theta && certificate.theta < s.min_inter)) {
      report.hypothesis_violations.push_back("stream is not separated at theta: max_intra " + fmt(s.max_intra) +
                                             ", min_inter " + fmt(s.min_inter));
    }
    if (!(hp.gamma_d < s.min_inter)) {
      report.hypothesis_violations.push_back("gamma_d " + fmt(hp.gamma_d) + " reaches the minimum inter-cluster distance " +
                                             fmt(s.min_inter));
    }
  }
  if (!report.hypotheses_hold()) return report;

  ClusterLedger ledger;
  RunResult run = run_ctta(model, stream, hp, source, seed,
                           [&](const LabeledBatch& b, const BatchStep& s, const KffEngine& e) { ledger.observe(b, s, e); });
  report.fissions = ledger.fissions();
  report.fusions = ledger.fusions();
  report.assignment_violations = ledger.assignment_violations();
  report.fusion_violations = ledger.fusion_violations();
  report.first_encounter_violations = ledger.first_encounter_violations();
  report.bound_violations = ledger.bound_violations();
  report.details = ledger.log();
  report.metrics = std::move(run.metrics);
  return report;
}

SuiteReport run_lemma_suite(const SuiteParams& params, const Hyperparams& base, bool keep_metrics) {
  if (params.min_domains < 1 || params.max_domains < params.min_domains) {
    throw ConfigError("lemma suite: bad domain count range");
  }
  if (params.visits == 0 || params.batches_per_domain % params.visits != 0) {
    throw ConfigError("lemma suite: batches_per_domain must split evenly over visits");
  }
  SuiteReport out;
  const std::size_t span = params.max_domains - params.min_domains + 1;
  for (std::size_t k = 0; k < params.streams; ++k) {
    const std::uint64_t seed = params.first_seed + k;
    const std::size_t domains = params.min_domains + static_cast<std::size_t>(seed % span);

    StreamConfig stream;
    stream.batches_per_domain = params.batches_per_domain / params.visits;
    stream.batch_size = params.batch_size;
    stream.input_dim = params.input_dim;
    stream.num_classes = params.num_classes;
    GeneratorSetup setup;
    setup.num_domains = domains;
    setup.rounds = params.visits;
    setup.theta_margin = params.theta_margin;

    ++out.streams;
    try {
      const GeneratedStream gen = generate_certified_stream(stream, setup, seed);
      Hyperparams hp = base;
      hp.gamma_d = gen.certificate.theta / 2.0;
      hp.n_d = domains + params.extra_pool_slots;
      LemmaReport r = verify_lemmas(gen.source.model, gen.source.source, gen.batches, gen.certificate, hp, seed);
      out.total_fissions += r.fissions;
      out.total_fusions += r.fusions;
      if (r.passed()) {
        ++out.passed;
      } else {
        std::string why = "seed " + std::to_string(seed) + ":";
        for (const std::string& h : r.hypothesis_violations) why += " [hypothesis] " + h;
        for (const std::string& d : r.details) why += " " + d;
        out.failures.push_back(why);
      }
      if (keep_metrics && r.metrics) out.runs.push_back(std::move(*r.metrics));
    } catch (const Error& e) {
      out.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace kff
