#include "kff/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "kff/error.hpp"
#include "kff/rng.hpp"

namespace kff {

void validate(const StreamConfig& config) {
  if (config.domain_order.empty()) throw ConfigError("stream: domain_order is empty");
  if (config.batch_size < 2) throw ConfigError("stream: batch_size must be at least 2");
  if (config.batches_per_domain == 0) throw ConfigError("stream: batches_per_domain must be positive");
  if (config.input_dim == 0) throw ConfigError("stream: input_dim must be positive");
  if (config.num_classes == 0) throw ConfigError("stream: num_classes must be positive");
}

DomainSpec make_source_domain(std::size_t input_dim, std::size_t num_classes, double class_separation,
                              double noise_std, SeededRng& rng) {
  if (noise_std < 0.0) throw ConfigError("source domain: noise_std must be >= 0");
  DomainSpec d{-1, Vector(input_dim), Vector(input_dim, 1.0), {}, noise_std};
  d.class_means.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    Vector mean = rng.gaussian_vector(input_dim, 1.0);
    const double len = norm(mean);
    if (len > 0.0) mean = (class_separation / len) * mean;
    d.class_means.push_back(std::move(mean));
  }
  return d;
}

DomainSpec shifted_domain(const DomainSpec& base, int id, Vector shift) {
  require_same_dim(shift.size(), base.shift.size(), "shifted_domain");
  DomainSpec d = base;
  d.id = id;
  d.shift = std::move(shift);
  return d;
}

std::vector<Vector> sample_inputs(const DomainSpec& domain, std::size_t count, std::size_t num_classes,
                                  SeededRng& rng, std::vector<int>* labels) {
  require_same_dim(domain.class_means.size(), num_classes, "domain class count");
  for (double s : domain.scale) {
    if (!(s > 0.0)) throw ConfigError("domain: scale entries must be positive");
  }
  if (domain.noise_std < 0.0) throw ConfigError("domain: noise_std must be >= 0");
  const std::size_t n = domain.shift.size();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const int label = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(num_classes) - 1));
    const Vector& mean = domain.class_means[static_cast<std::size_t>(label)];
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double noise = domain.noise_std == 0.0 ? 0.0 : domain.noise_std * rng.gaussian();
      x[i] = domain.scale[i] * (mean[i] + noise) + domain.shift[i];
    }
    out.push_back(std::move(x));
    if (labels != nullptr) labels->push_back(label);
  }
  return out;
}

LabeledBatch sample_batch(const DomainSpec& domain, std::size_t batch_size, std::size_t num_classes,
                          SeededRng& rng) {
  LabeledBatch batch;
  batch.domain_id = domain.id;
  batch.samples = sample_inputs(domain, batch_size, num_classes, rng, &batch.labels);
  return batch;
}

std::vector<LabeledBatch> generate_stream(const StreamConfig& config, std::span<const DomainSpec> domains,
                                          SeededRng& rng) {
  validate(config);
  std::vector<LabeledBatch> out;
  out.reserve(config.domain_order.size() * config.batches_per_domain);
  for (int id : config.domain_order) {
    auto it = std::find_if(domains.begin(), domains.end(), [id](const DomainSpec& d) { return d.id == id; });
    if (it == domains.end()) throw ConfigError("stream: unknown domain id " + std::to_string(id));
    require_same_dim(it->shift.size(), config.input_dim, "stream: domain input_dim");
    for (std::size_t k = 0; k < config.batches_per_domain; ++k) {
      LabeledBatch b = sample_batch(*it, config.batch_size, config.num_classes, rng);
      b.batch_index = out.size();
      out.push_back(std::move(b));
    }
  }
  return out;
}

Separation measure_separation(const ToyModel& model, std::span<const LabeledBatch> batches) {
  std::vector<BatchStats> keys;
  keys.reserve(batches.size());
  for (const LabeledBatch& b : batches) keys.push_back(key_stats(model, b.samples));
  Separation s;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (std::size_t j = i + 1; j < keys.size(); ++j) {
      const double d = stats_distance(keys[i], keys[j]);
      if (batches[i].domain_id == batches[j].domain_id) {
        s.max_intra = std::max(s.max_intra, d);
      } else {
        s.min_inter = std::min(s.min_inter, d);
      }
    }
  }
  return s;
}

double intra_spread(const DomainSpec& base, const ToyModel& model, std::size_t batch_size,
                    std::size_t num_classes, std::size_t probes, SeededRng& rng) {
  std::vector<LabeledBatch> batches;
  for (std::size_t k = 0; k < probes; ++k) batches.push_back(sample_batch(base, batch_size, num_classes, rng));
  for (LabeledBatch& b : batches) b.domain_id = 0;
  return measure_separation(model, batches).max_intra;
}

namespace {

// Gram-Schmidt on Gaussian draws; falls back to plain unit Gaussian
// directions once the input space is exhausted.
std::vector<Vector> spread_directions(std::size_t count, std::size_t dim, SeededRng& rng) {
  std::vector<Vector> dirs;
  for (std::size_t k = 0; k < count; ++k) {
    Vector v = rng.gaussian_vector(dim, 1.0);
    if (k < dim) {
      for (const Vector& u : dirs) {
        double proj = 0.0;
        for (std::size_t i = 0; i < dim; ++i) proj += v[i] * u[i];
        for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * u[i];
      }
    }
    v = (1.0 / norm(v)) * v;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

}  // namespace

SeparatedDomains make_separated(const StreamConfig& config, const DomainSpec& base, std::size_t count,
                                double theta, const ToyModel& model, SeededRng& rng,
                                std::size_t probes_per_domain) {
  if (count < 2) throw ConfigError("make_separated: need at least two domains");
  if (!(theta > 0.0)) throw ConfigError("make_separated: theta must be positive");
  if (probes_per_domain < 20) throw ConfigError("make_separated: at least 20 probe batches per domain");
  const std::size_t n = config.input_dim;
  require_same_dim(base.shift.size(), n, "make_separated: base domain");

  const std::vector<Vector> dirs = spread_directions(count, n, rng);
  // Closest pair of directions after the extractor sets the starting scale.
  double closest = INFINITY;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      closest = std::min(closest, norm(model.features((dirs[i] - dirs[j]).span())));
    }
  }
  double magnitude = 1.5 * theta / closest;

  constexpr int kAttempts = 12;
  for (int attempt = 0; attempt < kAttempts; ++attempt, magnitude *= 1.5) {
    SeparatedDomains out;
    for (std::size_t k = 0; k < count; ++k) {
      out.domains.push_back(shifted_domain(base, static_cast<int>(k), magnitude * dirs[k]));
    }
    SeededRng probe_rng = rng.derive(static_cast<std::uint64_t>(attempt));
    std::vector<LabeledBatch> probes;
    for (const DomainSpec& d : out.domains) {
      for (std::size_t p = 0; p < probes_per_domain; ++p) {
        probes.push_back(sample_batch(d, config.batch_size, config.num_classes, probe_rng));
      }
    }
    const Separation s = measure_separation(model, probes);
    out.certificate = {theta, s.max_intra, s.min_inter, probes.size(), config.seed};
    if (s.max_intra >= theta) {
      throw HypothesisError("make_separated: intra-domain spread " + std::to_string(s.max_intra) +
                            " already reaches theta " + std::to_string(theta));
    }
    if (out.certificate.valid()) return out;
  }
  throw HypothesisError("make_separated: no shift scale separated the domains");
}

void write_stream(std::span<const LabeledBatch> batches, std::ostream& out) {
  std::size_t dim = 0;
  for (const LabeledBatch& b : batches) {
    if (!b.samples.empty()) {
      dim = b.samples.front().size();
      break;
    }
  }
  out << "batch_idx,domain_id,class_id";
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << '\n';
  char buf[40];
  for (const LabeledBatch& b : batches) {
    require_same_dim(b.samples.size(), b.labels.size(), "write_stream: labels");
    for (std::size_t s = 0; s < b.samples.size(); ++s) {
      require_same_dim(b.samples[s].size(), dim, "write_stream: sample");
      out << b.batch_index << ',' << b.domain_id << ',' << b.labels[s];
      for (double v : b.samples[s]) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

void write_stream(std::span<const LabeledBatch> batches, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_stream(batches, out);
  if (!out) throw Error("failed writing " + path);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(field) + "'", line);
  }
  return value;
}

}  // namespace

std::vector<LabeledBatch> read_stream(std::istream& in) {
  std::vector<LabeledBatch> batches;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return batches;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.empty()) {
    // Blank first line is only acceptable for an otherwise empty file.
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty()) throw ParseError("missing header", 1);
    }
    return batches;
  }
  const std::vector<std::string_view> header = split_commas(line);
  if (header.size() < 3 || header[0] != "batch_idx" || header[1] != "domain_id" || header[2] != "class_id") {
    throw ParseError("missing header 'batch_idx,domain_id,class_id,f0,...'", line_no);
  }
  const std::size_t dim = header.size() - 3;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[3 + i] != "f" + std::to_string(i)) {
      throw ParseError("header column " + std::to_string(3 + i) + " should be f" + std::to_string(i), line_no);
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string_view> fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const auto batch_idx = parse_field<std::size_t>(fields[0], line_no, "batch_idx");
    const auto domain_id = parse_field<int>(fields[1], line_no, "domain_id");
    const auto class_id = parse_field<int>(fields[2], line_no, "class_id");
    std::vector<double> values(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      values[i] = parse_field<double>(fields[3 + i], line_no, "feature value");
      if (!std::isfinite(values[i])) throw ParseError("non-finite feature value", line_no);
    }
    if (batches.empty() || batches.back().batch_index != batch_idx) {
      if (!batches.empty() && batch_idx < batches.back().batch_index) {
        throw ParseError("batch_idx not in ascending order", line_no);
      }
      batches.push_back({{}, {}, domain_id, batch_idx});
    } else if (batches.back().domain_id != domain_id) {
      throw ParseError("domain_id changes within batch " + std::to_string(batch_idx), line_no);
    }
    batches.back().samples.emplace_back(std::move(values));
    batches.back().labels.push_back(class_id);
  }
  return batches;
}

std::vector<LabeledBatch> read_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_stream(in);
}

}  // namespace kff
