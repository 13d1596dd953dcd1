#pragma once

// JSON encodings: run configuration, model snapshot, pool snapshot,
// separation certificate, and run summary.
//
// Model snapshot:
//   {"format": "kff-model/1", "seed": u64,
//    "input_dim": n, "feature_dim": m, "num_classes": C,
//    "extractor": [m*n row-major], "head": [C*m row-major], "bias": [C],
//    "source_stats": {"mean": [m], "std": [m], "sample_count": k}}
// Pool snapshot:
//   {"format": "kff-pools/1", "batches_seen": k,
//    "class_pool":  {"capacity", "prompt_dim", "version",
//                    "entries": [{"key", "prompt", "created_at"}]},
//    "domain_pool": {"capacity", "prompt_dim", "version",
//                    "entries": [{"mean", "std", "prompt", "created_at"}]}}
// Doubles are written in shortest round-trip form, so load(save(x)) == x
// bit for bit.

#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "kff/engine.hpp"
#include "kff/harness.hpp"
#include "kff/stream.hpp"

namespace kff {

struct RunConfig {
  Hyperparams hyperparams;
  StreamConfig stream;
  GeneratorSetup generator;
  std::set<std::string> explicit_keys;  // keys present in the source document

  bool has(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

// Unknown keys and ill-typed values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

// Sets one Hyperparams field by its config name.
void set_hyperparam(Hyperparams& hp, const std::string& name, const nlohmann::json& value);
bool is_hyperparam(const std::string& name);

nlohmann::json model_to_json(const ToyModel& model, const SourceStats& source);
std::pair<ToyModel, SourceStats> model_from_json(const nlohmann::json& doc);

nlohmann::json pools_to_json(const ClassPromptPool& class_pool, const DomainPromptPool& domain_pool,
                             std::uint64_t batches_seen);
std::pair<ClassPromptPool, DomainPromptPool> pools_from_json(const nlohmann::json& doc);

nlohmann::json certificate_to_json(const SeparationCertificate& cert);
SeparationCertificate certificate_from_json(const nlohmann::json& doc);

nlohmann::json summary_to_json(const RunSummary& summary);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& doc, const std::string& path);

}  // namespace kff
