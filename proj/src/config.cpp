#include "kff/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "kff/error.hpp"

namespace kff {

using nlohmann::json;

namespace {

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<double>();
}

std::size_t as_size(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config: '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config: '" + key + "' must be a boolean");
  return v.get<bool>();
}

using Setter = std::function<void(Hyperparams&, const json&, const std::string&)>;

const std::map<std::string, Setter>& hyperparam_setters() {
  static const std::map<std::string, Setter> setters = {
      {"gamma_d", [](Hyperparams& h, const json& v, const std::string& k) { h.gamma_d = as_double(v, k); }},
      {"gamma_c", [](Hyperparams& h, const json& v, const std::string& k) { h.gamma_c = as_double(v, k); }},
      {"gamma_h", [](Hyperparams& h, const json& v, const std::string& k) { h.gamma_h = as_double(v, k); }},
      {"alpha_d", [](Hyperparams& h, const json& v, const std::string& k) { h.alpha_d = as_double(v, k); }},
      {"alpha_c", [](Hyperparams& h, const json& v, const std::string& k) { h.alpha_c = as_double(v, k); }},
      {"tau_d", [](Hyperparams& h, const json& v, const std::string& k) { h.tau_d = as_double(v, k); }},
      {"tau_c", [](Hyperparams& h, const json& v, const std::string& k) { h.tau_c = as_double(v, k); }},
      {"a", [](Hyperparams& h, const json& v, const std::string& k) { h.a = as_double(v, k); }},
      {"alpha_std", [](Hyperparams& h, const json& v, const std::string& k) { h.alpha_std = as_double(v, k); }},
      {"n_d", [](Hyperparams& h, const json& v, const std::string& k) { h.n_d = as_size(v, k); }},
      {"n_c", [](Hyperparams& h, const json& v, const std::string& k) { h.n_c = as_size(v, k); }},
      {"lr_domain", [](Hyperparams& h, const json& v, const std::string& k) { h.lr_domain = as_double(v, k); }},
      {"lr_class", [](Hyperparams& h, const json& v, const std::string& k) { h.lr_class = as_double(v, k); }},
      {"steps", [](Hyperparams& h, const json& v, const std::string& k) { h.steps = static_cast<int>(as_size(v, k)); }},
      {"init_scale", [](Hyperparams& h, const json& v, const std::string& k) { h.init_scale = as_double(v, k); }},
      {"softmax_over_all",
       [](Hyperparams& h, const json& v, const std::string& k) { h.softmax_over_all = as_bool(v, k); }},
      {"class_update",
       [](Hyperparams& h, const json& v, const std::string& k) {
         if (!v.is_string()) throw ConfigError("config: '" + k + "' must be a string");
         const std::string mode = v.get<std::string>();
         if (mode == "sequential") {
           h.class_update = ClassUpdateMode::kSequential;
         } else if (mode == "averaged") {
           h.class_update = ClassUpdateMode::kAveraged;
         } else {
           throw ConfigError("config: class_update must be 'sequential' or 'averaged'");
         }
       }},
      {"prompt_scale", [](Hyperparams& h, const json& v, const std::string& k) { h.prompt_scale = as_double(v, k); }},
  };
  return setters;
}

std::vector<double> doubles(const json& v, const std::string& key, std::size_t expected) {
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& x : v) out.push_back(as_double(x, key));
  if (out.size() != expected) {
    throw ConfigError("'" + key + "' has " + std::to_string(out.size()) + " values, expected " +
                      std::to_string(expected));
  }
  return out;
}

const json& field(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return doc.at(key);
}

}  // namespace

bool is_hyperparam(const std::string& name) { return hyperparam_setters().count(name) != 0; }

void set_hyperparam(Hyperparams& hp, const std::string& name, const json& value) {
  auto it = hyperparam_setters().find(name);
  if (it == hyperparam_setters().end()) throw ConfigError("unknown hyperparameter '" + name + "'");
  it->second(hp, value, name);
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    cfg.explicit_keys.insert(key);
    if (is_hyperparam(key)) {
      set_hyperparam(cfg.hyperparams, key, value);
    } else if (key == "domain_order") {
      if (!value.is_array()) throw ConfigError("config: domain_order must be an array");
      cfg.stream.domain_order.clear();
      for (const json& d : value) {
        if (!d.is_number_integer()) throw ConfigError("config: domain_order entries must be integers");
        cfg.stream.domain_order.push_back(d.get<int>());
      }
    } else if (key == "batches_per_domain") {
      cfg.stream.batches_per_domain = as_size(value, key);
    } else if (key == "batch_size") {
      cfg.stream.batch_size = as_size(value, key);
    } else if (key == "input_dim") {
      cfg.stream.input_dim = as_size(value, key);
    } else if (key == "num_classes") {
      cfg.stream.num_classes = as_size(value, key);
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("config: seed must be a non-negative integer");
      cfg.stream.seed = value.get<std::uint64_t>();
    } else if (key == "theta") {
      if (value.is_null()) {
        cfg.stream.theta.reset();
      } else {
        cfg.stream.theta = as_double(value, key);
      }
    } else if (key == "feature_dim") {
      cfg.generator.feature_dim = as_size(value, key);
    } else if (key == "class_separation") {
      cfg.generator.class_separation = as_double(value, key);
    } else if (key == "noise_std") {
      cfg.generator.noise_std = as_double(value, key);
    } else if (key == "num_domains") {
      cfg.generator.num_domains = as_size(value, key);
    } else if (key == "rounds") {
      cfg.generator.rounds = as_size(value, key);
    } else if (key == "theta_margin") {
      cfg.generator.theta_margin = as_double(value, key);
    } else if (key == "shift_scale") {
      cfg.generator.shift_scale = as_double(value, key);
    } else if (key == "source_samples") {
      cfg.generator.source_samples = as_size(value, key);
    } else if (key == "train_samples") {
      cfg.generator.train_samples = as_size(value, key);
    } else if (key == "probes_per_domain") {
      cfg.generator.probes_per_domain = as_size(value, key);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  validate(cfg.hyperparams);
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_json_file(path)); }

json to_json(const RunConfig& c) {
  const Hyperparams& h = c.hyperparams;
  json doc = {
      {"gamma_d", h.gamma_d},
      {"gamma_c", h.gamma_c},
      {"gamma_h", h.gamma_h},
      {"alpha_d", h.alpha_d},
      {"alpha_c", h.alpha_c},
      {"tau_d", h.tau_d},
      {"tau_c", h.tau_c},
      {"a", h.a},
      {"alpha_std", h.alpha_std},
      {"n_d", h.n_d},
      {"n_c", h.n_c},
      {"lr_domain", h.lr_domain},
      {"lr_class", h.lr_class},
      {"steps", h.steps},
      {"init_scale", h.init_scale},
      {"softmax_over_all", h.softmax_over_all},
      {"class_update", h.class_update == ClassUpdateMode::kSequential ? "sequential" : "averaged"},
      {"prompt_scale", h.prompt_scale},
      {"domain_order", c.stream.domain_order},
      {"batches_per_domain", c.stream.batches_per_domain},
      {"batch_size", c.stream.batch_size},
      {"input_dim", c.stream.input_dim},
      {"num_classes", c.stream.num_classes},
      {"seed", c.stream.seed},
      {"feature_dim", c.generator.feature_dim},
      {"class_separation", c.generator.class_separation},
      {"noise_std", c.generator.noise_std},
      {"num_domains", c.generator.num_domains},
      {"rounds", c.generator.rounds},
      {"theta_margin", c.generator.theta_margin},
      {"shift_scale", c.generator.shift_scale},
      {"source_samples", c.generator.source_samples},
      {"train_samples", c.generator.train_samples},
      {"probes_per_domain", c.generator.probes_per_domain},
  };
  doc["theta"] = c.stream.theta ? json(*c.stream.theta) : json(nullptr);
  return doc;
}

json model_to_json(const ToyModel& model, const SourceStats& source) {
  const ModelDims d = model.dims();
  return json{
      {"format", "kff-model/1"},
      {"seed", model.seed()},
      {"input_dim", d.input_dim},
      {"feature_dim", d.feature_dim},
      {"num_classes", d.num_classes},
      {"extractor", model.extractor().data()},
      {"head", model.head().data()},
      {"bias", model.bias().values()},
      {"source_stats", {{"mean", source.mean.values()}, {"std", source.std.values()}, {"sample_count", source.sample_count}}},
  };
}

std::pair<ToyModel, SourceStats> model_from_json(const json& doc) {
  if (field(doc, "format") != "kff-model/1") throw ConfigError("model snapshot: unsupported format");
  const std::size_t n = as_size(field(doc, "input_dim"), "input_dim");
  const std::size_t m = as_size(field(doc, "feature_dim"), "feature_dim");
  const std::size_t c = as_size(field(doc, "num_classes"), "num_classes");
  Matrix extractor(m, n, doubles(field(doc, "extractor"), "extractor", m * n));
  Matrix head(c, m, doubles(field(doc, "head"), "head", c * m));
  Vector bias(doubles(field(doc, "bias"), "bias", c));
  ToyModel model(std::move(extractor), std::move(head), std::move(bias), field(doc, "seed").get<std::uint64_t>());
  const json& s = field(doc, "source_stats");
  SourceStats source{Vector(doubles(field(s, "mean"), "source mean", m)),
                     Vector(doubles(field(s, "std"), "source std", m)),
                     as_size(field(s, "sample_count"), "sample_count")};
  return {std::move(model), std::move(source)};
}

json pools_to_json(const ClassPromptPool& class_pool, const DomainPromptPool& domain_pool, std::uint64_t batches_seen) {
  json classes = json::array();
  for (const ClassPromptEntry& e : class_pool.entries()) {
    classes.push_back({{"key", e.key.values()}, {"prompt", e.prompt.values()}, {"created_at", e.created_at}});
  }
  json domains = json::array();
  for (const DomainPromptEntry& e : domain_pool.entries()) {
    domains.push_back({{"mean", e.key.mean.values()},
                       {"std", e.key.std.values()},
                       {"prompt", e.prompt.values()},
                       {"created_at", e.created_at}});
  }
  return json{
      {"format", "kff-pools/1"},
      {"batches_seen", batches_seen},
      {"class_pool",
       {{"capacity", class_pool.capacity()},
        {"prompt_dim", class_pool.prompt_dim()},
        {"version", class_pool.version()},
        {"entries", classes}}},
      {"domain_pool",
       {{"capacity", domain_pool.capacity()},
        {"prompt_dim", domain_pool.prompt_dim()},
        {"version", domain_pool.version()},
        {"entries", domains}}},
  };
}

std::pair<ClassPromptPool, DomainPromptPool> pools_from_json(const json& doc) {
  if (field(doc, "format") != "kff-pools/1") throw ConfigError("pool snapshot: unsupported format");
  const json& cj = field(doc, "class_pool");
  const json& dj = field(doc, "domain_pool");
  const std::size_t cdim = as_size(field(cj, "prompt_dim"), "prompt_dim");
  const std::size_t ddim = as_size(field(dj, "prompt_dim"), "prompt_dim");
  ClassPromptPool classes(as_size(field(cj, "capacity"), "capacity"), cdim);
  DomainPromptPool domains(as_size(field(dj, "capacity"), "capacity"), ddim);

  std::vector<ClassPromptEntry> ce;
  for (const json& e : field(cj, "entries")) {
    const json& key = field(e, "key");
    ce.push_back({Vector(doubles(key, "key", key.size())), Vector(doubles(field(e, "prompt"), "prompt", cdim)),
                  field(e, "created_at").get<std::uint64_t>()});
  }
  std::vector<DomainPromptEntry> de;
  for (const json& e : field(dj, "entries")) {
    const json& mean = field(e, "mean");
    de.push_back({BatchStats{Vector(doubles(mean, "mean", mean.size())),
                             Vector(doubles(field(e, "std"), "std", mean.size()))},
                  Vector(doubles(field(e, "prompt"), "prompt", ddim)), field(e, "created_at").get<std::uint64_t>()});
  }
  classes.restore(std::move(ce), field(cj, "version").get<std::uint64_t>());
  domains.restore(std::move(de), field(dj, "version").get<std::uint64_t>());
  return {std::move(classes), std::move(domains)};
}

json certificate_to_json(const SeparationCertificate& cert) {
  return json{
      {"theta", cert.theta},
      {"max_intra", cert.max_intra},
      {"min_inter", std::isfinite(cert.min_inter) ? json(cert.min_inter) : json(nullptr)},
      {"probe_batches", cert.probe_batches},
      {"seed", cert.seed},
      {"valid", cert.valid()},
  };
}

SeparationCertificate certificate_from_json(const json& doc) {
  SeparationCertificate c;
  c.theta = as_double(field(doc, "theta"), "theta");
  c.max_intra = as_double(field(doc, "max_intra"), "max_intra");
  const json& inter = field(doc, "min_inter");
  c.min_inter = inter.is_null() ? INFINITY : as_double(inter, "min_inter");
  c.probe_batches = as_size(field(doc, "probe_batches"), "probe_batches");
  c.seed = field(doc, "seed").get<std::uint64_t>();
  return c;
}

json summary_to_json(const RunSummary& s) {
  json per_domain = json::object();
  for (const auto& [id, err] : s.domain_mean_error) per_domain[std::to_string(id)] = err;
  return json{
      {"domain_mean_error", per_domain},
      {"overall_mean_error", s.overall_mean_error},
      {"round_mean_error", s.round_mean_error},
      {"final_pool_d_size", s.final_pool_d_size},
      {"final_pool_c_size", s.final_pool_c_size},
      {"domain_fissions", s.domain_fissions},
      {"class_fissions", s.class_fissions},
      {"domain_fusions", s.domain_fusions},
      {"class_fusions", s.class_fusions},
  };
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path);
}

}  // namespace kff
