#include "kff/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "kff/config.hpp"
#include "kff/error.hpp"
#include "kff/gradcheck.hpp"
#include "kff/harness.hpp"
#include "kff/kernels.hpp"
#include "kff/lemmas.hpp"

namespace kff {

namespace {

namespace fs = std::filesystem;

struct CommonInputs {
  std::string config_path;
  std::string stream_path;
  std::string model_path;
  std::string certificate_path;
  std::optional<double> gamma_d;
  std::optional<int> steps;
};

RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

// gamma_d precedence: flag, then config file, then theta / 2 from a
// certificate, then the built-in default.
Hyperparams resolve_hyperparams(const RunConfig& cfg, const CommonInputs& in,
                                const std::optional<SeparationCertificate>& cert) {
  Hyperparams hp = cfg.hyperparams;
  if (in.gamma_d) {
    hp.gamma_d = *in.gamma_d;
  } else if (!cfg.has("gamma_d") && cert) {
    hp.gamma_d = cert->theta / 2.0;
  }
  if (in.steps) hp.steps = *in.steps;
  validate(hp);
  return hp;
}

std::optional<SeparationCertificate> maybe_certificate(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return certificate_from_json(read_json_file(path));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path);
}

std::string metrics_text(const RunMetrics& metrics) {
  std::ostringstream s;
  write_metrics_csv(metrics, s);
  return s.str();
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("sweep: bad grid value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("sweep: empty value list");
  return out;
}

nlohmann::json grid_value(const std::string& name, double v) {
  if (name == "softmax_over_all") return v != 0.0;
  if (name == "class_update") return v != 0.0 ? "averaged" : "sequential";
  if (name == "n_d" || name == "n_c" || name == "steps") {
    if (v < 0.0 || v != std::floor(v)) throw ConfigError("sweep: " + name + " needs non-negative integers");
    return static_cast<std::size_t>(v);
  }
  return v;
}

int cmd_gen_stream(std::uint64_t seed, const CommonInputs& in, const std::string& out_path,
                   const std::string& cert_path, const std::string& model_out,
                   const std::optional<std::size_t>& domains, const std::optional<std::size_t>& rounds,
                   const std::optional<std::size_t>& batches, const std::optional<std::size_t>& batch_size,
                   const std::optional<double>& theta, std::ostream& out) {
  RunConfig cfg = load_config_or_default(in.config_path);
  if (domains) cfg.generator.num_domains = *domains;
  if (rounds) cfg.generator.rounds = *rounds;
  if (batches) cfg.stream.batches_per_domain = *batches;
  if (batch_size) cfg.stream.batch_size = *batch_size;
  if (theta) cfg.stream.theta = *theta;
  const GeneratedStream gen = generate_certified_stream(cfg.stream, cfg.generator, seed);
  write_stream(gen.batches, out_path);
  write_json_file(certificate_to_json(gen.certificate), cert_path);
  write_json_file(model_to_json(gen.source.model, gen.source.source), model_out);
  out << "wrote " << gen.batches.size() << " batches over " << gen.domains.size() << " domain(s) to " << out_path
      << "; theta " << gen.certificate.theta << ", max_intra " << gen.certificate.max_intra << ", min_inter "
      << gen.certificate.min_inter << '\n';
  return 0;
}

int cmd_run(std::uint64_t seed, const CommonInputs& in, const std::string& metrics_path,
            const std::string& summary_path, const std::string& snapshot_dir, std::ostream& out) {
  const RunConfig cfg = load_config_or_default(in.config_path);
  const auto [model, source] = model_from_json(read_json_file(in.model_path));
  const std::vector<LabeledBatch> stream = read_stream(in.stream_path);
  if (stream.empty()) {
    out << "stream " << in.stream_path << " contains zero batches; nothing to run\n";
    return 1;
  }
  const Hyperparams hp = resolve_hyperparams(cfg, in, maybe_certificate(in.certificate_path));

  if (!snapshot_dir.empty()) fs::create_directories(snapshot_dir);
  std::size_t index = 0;
  auto observer = [&](const LabeledBatch& batch, const BatchStep&, const KffEngine& engine) {
    const bool boundary = index + 1 == stream.size() || stream[index + 1].domain_id != batch.domain_id;
    if (!snapshot_dir.empty() && boundary) {
      const auto path = fs::path(snapshot_dir) / ("pools_boundary_" + std::to_string(batch.batch_index) + ".json");
      write_json_file(pools_to_json(engine.class_pool(), engine.domain_pool(), engine.batches_seen()), path.string());
    }
    ++index;
  };
  KffEngine engine(model, source, hp, seed);
  const RunResult result = run_ctta(engine, stream, observer);
  if (!snapshot_dir.empty()) {
    write_json_file(pools_to_json(result.class_pool, result.domain_pool, engine.batches_seen()),
                    (fs::path(snapshot_dir) / "pools_final.json").string());
  }
  write_text(metrics_path, metrics_text(result.metrics));
  const RunSummary summary = summarize(result.metrics);
  write_json_file(summary_to_json(summary), summary_path);
  out << "processed " << stream.size() << " batches; mean error " << summary.overall_mean_error
      << "; final pools: domain " << summary.final_pool_d_size << ", class " << summary.final_pool_c_size << '\n';
  return 0;
}

void print_report(const LemmaReport& r, std::ostream& out) {
  for (const std::string& h : r.hypothesis_violations) out << "hypothesis violated: " << h << '\n';
  if (!r.hypotheses_hold()) return;
  out << "batches " << r.batches << ", clusters " << r.clusters << ", domain fissions " << r.fissions
      << ", domain fusions " << r.fusions << '\n'
      << "assignment violations " << r.assignment_violations << ", cross-cluster fusions " << r.fusion_violations
      << ", missed first-encounter fissions " << r.first_encounter_violations << ", pool bound violations "
      << r.bound_violations << '\n';
  for (const std::string& d : r.details) out << "  " << d << '\n';
}

int cmd_verify(std::uint64_t seed, const CommonInputs& in, std::size_t suite, std::uint64_t suite_seed,
               std::ostream& out) {
  const RunConfig cfg = load_config_or_default(in.config_path);
  if (suite > 0) {
    SuiteParams params;
    params.streams = suite;
    params.first_seed = suite_seed;
    const SuiteReport r = run_lemma_suite(params, resolve_hyperparams(cfg, in, std::nullopt));
    out << "lemma suite: " << r.passed << "/" << r.streams << " streams passed; " << r.total_fissions
        << " domain fissions, " << r.total_fusions << " domain fusions\n";
    for (const std::string& f : r.failures) out << "  " << f << '\n';
    out << (r.passed == r.streams ? "PASS" : "FAIL") << '\n';
    return r.passed == r.streams ? 0 : 1;
  }
  if (in.stream_path.empty() || in.model_path.empty() || in.certificate_path.empty()) {
    throw CLI::ValidationError("verify needs --stream, --model and --certificate (or --suite)");
  }
  const std::optional<SeparationCertificate> cert = maybe_certificate(in.certificate_path);
  const auto [model, source] = model_from_json(read_json_file(in.model_path));
  const std::vector<LabeledBatch> stream = read_stream(in.stream_path);
  const LemmaReport r = verify_lemmas(model, source, stream, *cert, resolve_hyperparams(cfg, in, cert), seed);
  print_report(r, out);
  out << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? 0 : 1;
}

int cmd_gradcheck(std::size_t configs, std::uint64_t seed, double h, double tolerance, std::ostream& out) {
  const GradcheckReport r = run_gradcheck(configs, seed, h);
  out << "gradcheck: " << r.checked << " configurations checked, " << r.skipped << " skipped near a kink\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", r.max_relative_error);
  out << "max relative error " << buf << " (tolerance " << tolerance << ")\n";
  const bool ok = r.max_relative_error < tolerance;
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? 0 : 1;
}

int cmd_sweep(std::uint64_t seed, const CommonInputs& in, const std::vector<std::string>& grid,
              const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = load_config_or_default(in.config_path);
  const auto [model, source] = model_from_json(read_json_file(in.model_path));
  const std::vector<LabeledBatch> stream = read_stream(in.stream_path);
  if (stream.empty()) throw ConfigError("sweep: stream has zero batches");
  const Hyperparams base = resolve_hyperparams(cfg, in, maybe_certificate(in.certificate_path));

  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const std::string& g : grid) {
    const std::size_t eq = g.find('=');
    if (eq == std::string::npos) throw ConfigError("sweep: grid entries look like name=v1,v2");
    const std::string name = g.substr(0, eq);
    if (!is_hyperparam(name)) throw ConfigError("sweep: unknown hyperparameter '" + name + "'");
    axes.emplace_back(name, parse_values(g.substr(eq + 1)));
  }
  fs::create_directories(out_dir);
  std::ostringstream index;
  index << "point";
  for (const auto& axis : axes) index << ',' << axis.first;
  index << ",overall_mean_error,metrics_file\n";

  std::vector<std::size_t> pos(axes.size(), 0);
  std::size_t point = 0;
  while (true) {
    Hyperparams hp = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      set_hyperparam(hp, axes[a].first, grid_value(axes[a].first, axes[a].second[pos[a]]));
    }
    validate(hp);
    const RunResult r = run_ctta(model, stream, hp, source, seed);
    const std::string file = "metrics_" + std::to_string(point) + ".csv";
    write_text((fs::path(out_dir) / file).string(), metrics_text(r.metrics));
    index << point;
    for (std::size_t a = 0; a < axes.size(); ++a) index << ',' << axes[a].second[pos[a]];
    index << ',' << summarize(r.metrics).overall_mean_error << ',' << file << '\n';
    ++point;

    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++pos[a] < axes[a].second.size()) break;
      pos[a] = 0;
    }
    if (a == axes.size()) break;
  }
  write_text((fs::path(out_dir) / "sweep.csv").string(), index.str());
  out << "sweep: " << point << " points written to " << out_dir << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-aware prompt-pool continual test-time adaptation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonInputs in;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-stream", "generate a certified synthetic stream");
  std::string gen_out, gen_cert, gen_model;
  std::optional<std::size_t> gen_domains, gen_rounds, gen_batches, gen_batch_size;
  std::optional<double> gen_theta;
  gen->add_option("--seed", seed, "random seed")->required();
  gen->add_option("--config", in.config_path, "JSON config")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "stream CSV output")->required();
  gen->add_option("--certificate", gen_cert, "certificate JSON output")->required();
  gen->add_option("--model-out", gen_model, "model snapshot output")->required();
  gen->add_option("--domains", gen_domains, "number of domains");
  gen->add_option("--rounds", gen_rounds, "passes over the domains");
  gen->add_option("--batches-per-domain", gen_batches, "batches per domain visit");
  gen->add_option("--batch-size", gen_batch_size, "samples per batch");
  gen->add_option("--theta", gen_theta, "separation threshold");

  auto* run = app.add_subcommand("run", "adapt over a stream and write metrics");
  std::string metrics_path, summary_path, snapshot_dir;
  run->add_option("--seed", seed, "random seed")->required();
  run->add_option("--stream", in.stream_path, "stream CSV")->required()->check(CLI::ExistingFile);
  run->add_option("--model", in.model_path, "model snapshot")->required()->check(CLI::ExistingFile);
  run->add_option("--config", in.config_path, "JSON config")->check(CLI::ExistingFile);
  run->add_option("--certificate", in.certificate_path, "certificate; gamma_d defaults to theta/2")
      ->check(CLI::ExistingFile);
  run->add_option("--gamma-d", in.gamma_d, "domain matching threshold");
  run->add_option("--steps", in.steps, "optimizer steps per batch");
  run->add_option("--metrics", metrics_path, "metrics CSV output")->required();
  run->add_option("--summary", summary_path, "summary JSON output")->required();
  run->add_option("--snapshots", snapshot_dir, "directory for pool snapshots");

  auto* verify = app.add_subcommand("verify", "check the cluster-assignment lemmas on a certified stream");
  std::size_t suite = 0;
  std::uint64_t suite_seed = 0;
  verify->add_option("--seed", seed, "random seed");
  verify->add_option("--stream", in.stream_path, "stream CSV")->check(CLI::ExistingFile);
  verify->add_option("--model", in.model_path, "model snapshot")->check(CLI::ExistingFile);
  verify->add_option("--certificate", in.certificate_path, "certificate JSON")->check(CLI::ExistingFile);
  verify->add_option("--config", in.config_path, "JSON config")->check(CLI::ExistingFile);
  verify->add_option("--gamma-d", in.gamma_d, "domain matching threshold");
  verify->add_option("--suite", suite, "run this many randomized certified streams instead");
  verify->add_option("--suite-seed", suite_seed, "first seed of the randomized suite");

  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  std::size_t gc_configs = 50;
  double gc_h = 1e-5, gc_tol = 1e-4;
  gc->add_option("--seed", seed, "random seed");
  gc->add_option("--configs", gc_configs, "number of random configurations");
  gc->add_option("--step", gc_h, "finite-difference step");
  gc->add_option("--tolerance", gc_tol, "maximum relative error");

  auto* sweep = app.add_subcommand("sweep", "run a hyperparameter grid");
  std::vector<std::string> grid;
  std::string sweep_dir;
  sweep->add_option("--seed", seed, "random seed")->required();
  sweep->add_option("--stream", in.stream_path, "stream CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--model", in.model_path, "model snapshot")->required()->check(CLI::ExistingFile);
  sweep->add_option("--config", in.config_path, "JSON config")->check(CLI::ExistingFile);
  sweep->add_option("--certificate", in.certificate_path, "certificate JSON")->check(CLI::ExistingFile);
  sweep->add_option("--gamma-d", in.gamma_d, "domain matching threshold");
  sweep->add_option("--grid", grid, "name=v1,v2,... (repeatable)")->required();
  sweep->add_option("--out-dir", sweep_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_stream(seed, in, gen_out, gen_cert, gen_model, gen_domains, gen_rounds, gen_batches,
                            gen_batch_size, gen_theta, out);
    }
    if (run->parsed()) return cmd_run(seed, in, metrics_path, summary_path, snapshot_dir, out);
    if (verify->parsed()) return cmd_verify(seed, in, suite, suite_seed, out);
    if (gc->parsed()) return cmd_gradcheck(gc_configs, seed, gc_h, gc_tol, out);
    if (sweep->parsed()) return cmd_sweep(seed, in, grid, sweep_dir, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace kff
