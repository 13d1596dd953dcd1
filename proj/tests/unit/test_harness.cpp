#include <doctest.h>

#include <sstream>

#include "kff/error.hpp"
#include "kff/harness.hpp"
#include "kff/lemmas.hpp"
#include "kff/rng.hpp"

using namespace kff;

namespace {

const GeneratedStream& shared_stream() {
  static const GeneratedStream gs = [] {
    StreamConfig c;
    GeneratorSetup g;
    g.rounds = 2;
    c.batches_per_domain = 6;
    return generate_certified_stream(c, g, 21);
  }();
  return gs;
}

Hyperparams certified_hp() {
  Hyperparams hp;
  hp.gamma_d = shared_stream().certificate.theta / 2.0;
  return hp;
}

}  // namespace

TEST_CASE("source statistics") {
  const GeneratedStream& gs = shared_stream();
  std::vector<std::string> warnings;
  const std::vector<Vector> few(gs.batches[0].samples.begin(), gs.batches[0].samples.begin() + 5);
  compute_source_stats(gs.source.model, few, &warnings);
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(compute_source_stats(gs.source.model, std::vector<Vector>{few[0]}), InsufficientDataError);
  const std::vector<Vector> dup(300, few[0]);
  warnings.clear();
  const SourceStats s = compute_source_stats(gs.source.model, dup, &warnings);
  CHECK(warnings.empty());
  for (double v : s.std) CHECK(v == 0.0);
  CHECK(s.sample_count == 300);
}

TEST_CASE("rounds count earlier visits to the same domain") {
  std::vector<LabeledBatch> s;
  for (int d : {0, 0, 1, 1, 0, 0, 2, 1}) s.push_back({{}, {}, d, s.size()});
  CHECK(round_of_batches(s) == std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 0, 1});
}

TEST_CASE("error rate") {
  const std::vector<Vector> p{Vector{0.9, 0.1}, Vector{0.2, 0.8}, Vector{0.6, 0.4}};
  CHECK(error_rate(p, std::vector<int>{0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(error_rate(p, std::vector<int>{0}), DimensionError);
}

TEST_CASE("predictions come from the learned prompts, before pool updates") {
  const GeneratedStream& gs = shared_stream();
  const Hyperparams hp = certified_hp();
  std::size_t checked = 0;
  run_ctta(gs.source.model, gs.batches, hp, gs.source.source, 4,
           [&](const LabeledBatch& b, const BatchStep& s, const KffEngine& e) {
             const ForwardResult f = forward(e.model(), b.samples, s.learned.domain, s.learned.per_sample,
                                             hp.prompt_scale);
             for (std::size_t t = 0; t < b.samples.size(); ++t) CHECK(f.probs[t] == s.predictions[t]);
             CHECK(e.param_count() == (e.domain_pool().size() + e.class_pool().size()) * 8);
             ++checked;
           });
  CHECK(checked == gs.batches.size());
}

TEST_CASE("runs are deterministic and the metrics CSV is well formed") {
  const GeneratedStream& gs = shared_stream();
  const Hyperparams hp = certified_hp();
  const RunResult a = run_ctta(gs.source.model, gs.batches, hp, gs.source.source, 9);
  const RunResult b = run_ctta(gs.source.model, gs.batches, hp, gs.source.source, 9);
  std::ostringstream ca, cb;
  write_metrics_csv(a.metrics, ca);
  write_metrics_csv(b.metrics, cb);
  CHECK(ca.str() == cb.str());
  CHECK(ca.str().rfind("batch_idx,domain_id_true,error_rate,mean_entropy,loss_d,loss_c,pool_d_size,pool_c_size,"
                       "fissioned_d,fissioned_c,param_count\n",
                       0) == 0);
  CHECK(a.class_pool == b.class_pool);
  for (const BatchMetrics& m : a.metrics.batches) {
    CHECK(m.param_count == (m.pool_d_size + m.pool_c_size) * 8);
    CHECK(m.pool_d_size <= hp.n_d);
  }
  const RunSummary s = summarize(a.metrics);
  CHECK(s.round_mean_error.size() == 2);
  CHECK(s.domain_mean_error.size() == 3);
  CHECK(s.final_pool_d_size == a.domain_pool.size());
  CHECK(s.domain_fissions >= 3);
}

TEST_CASE("engine rejects bad input") {
  const GeneratedStream& gs = shared_stream();
  KffEngine engine(gs.source.model, gs.source.source, certified_hp(), 1);
  CHECK_THROWS_AS(engine.step(std::vector<Vector>{gs.batches[0].samples[0]}), InsufficientDataError);
  Hyperparams bad;
  bad.alpha_c = 2.0;
  CHECK_THROWS_AS(KffEngine(gs.source.model, gs.source.source, bad, 1), ConfigError);
  CHECK_THROWS_AS(run_ctta(engine, std::vector<LabeledBatch>{}), ConfigError);
}

TEST_CASE("lemma verification") {
  const GeneratedStream& gs = shared_stream();
  const LemmaReport ok = verify_lemmas(gs.source.model, gs.source.source, gs.batches, gs.certificate, certified_hp(), 2);
  CHECK(ok.hypotheses_hold());
  CHECK(ok.passed());
  CHECK(ok.clusters == 3);
  CHECK(ok.fissions >= 3);

  Hyperparams wide = certified_hp();
  wide.gamma_d = gs.certificate.theta * 2.0;
  const LemmaReport refused = verify_lemmas(gs.source.model, gs.source.source, gs.batches, gs.certificate, wide, 2);
  CHECK_FALSE(refused.hypotheses_hold());

  // The ledger itself must notice a matcher that merges clusters.
  wide.gamma_d = gs.certificate.min_inter * 10.0;
  ClusterLedger ledger;
  run_ctta(gs.source.model, gs.batches, wide, gs.source.source, 2,
           [&](const LabeledBatch& b, const BatchStep& s, const KffEngine& e) { ledger.observe(b, s, e); });
  CHECK(ledger.assignment_violations() + ledger.first_encounter_violations() > 0);
}

TEST_CASE("small lemma suite") {
  SuiteParams p;
  p.streams = 5;
  const SuiteReport r = run_lemma_suite(p, Hyperparams{});
  CHECK(r.passed == 5);
}
