#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kff/model.hpp"
#include "kff/numerics.hpp"

namespace kff {

class SeededRng;

// One input distribution: x = scale * (class_mean + noise) + shift.
struct DomainSpec {
  int id = 0;
  Vector shift;
  Vector scale;
  std::vector<Vector> class_means;
  double noise_std = 1.0;
};

struct StreamConfig {
  std::vector<int> domain_order;  // repeats allowed
  std::size_t batches_per_domain = 10;
  std::size_t batch_size = 16;
  std::size_t input_dim = 8;
  std::size_t num_classes = 4;
  std::uint64_t seed = 0;
  std::optional<double> theta;
};

// Labels travel with the batch for scoring only; the adaptation engine
// receives `samples` alone.
struct LabeledBatch {
  std::vector<Vector> samples;
  std::vector<int> labels;
  int domain_id = 0;
  std::size_t batch_index = 0;
};

struct SeparationCertificate {
  double theta = 0.0;
  double max_intra = 0.0;
  double min_inter = std::numeric_limits<double>::infinity();  // inf with one cluster
  std::size_t probe_batches = 0;
  std::uint64_t seed = 0;

  bool valid() const noexcept { return max_intra < theta && theta < min_inter; }
};

void validate(const StreamConfig& config);

// Class means drawn once and shared by every domain; no shift, unit scale.
DomainSpec make_source_domain(std::size_t input_dim, std::size_t num_classes, double class_separation,
                              double noise_std, SeededRng& rng);

// A domain that reuses `base`'s class structure with an additive shift.
DomainSpec shifted_domain(const DomainSpec& base, int id, Vector shift);

LabeledBatch sample_batch(const DomainSpec& domain, std::size_t batch_size, std::size_t num_classes,
                          SeededRng& rng);
std::vector<Vector> sample_inputs(const DomainSpec& domain, std::size_t count, std::size_t num_classes,
                                  SeededRng& rng, std::vector<int>* labels = nullptr);

std::vector<LabeledBatch> generate_stream(const StreamConfig& config, std::span<const DomainSpec> domains,
                                          SeededRng& rng);

// Largest key distance between two batches of the same domain and smallest
// between batches of different domains, measured on prompt-free features.
struct Separation {
  double max_intra = 0.0;
  double min_inter = std::numeric_limits<double>::infinity();
};
Separation measure_separation(const ToyModel& model, std::span<const LabeledBatch> batches);

// Max intra-domain key distance of `base` over `probes` batches.
double intra_spread(const DomainSpec& base, const ToyModel& model, std::size_t batch_size,
                    std::size_t num_classes, std::size_t probes, SeededRng& rng);

struct SeparatedDomains {
  std::vector<DomainSpec> domains;
  SeparationCertificate certificate;
};

// Builds `count` shifted copies of `base` whose batch keys are well separated
// at `theta`: every same-domain pair closer, every cross-domain pair farther.
// Grows the shifts over a bounded number of attempts; throws HypothesisError
// if intra-domain spread alone already reaches theta or no attempt succeeds.
SeparatedDomains make_separated(const StreamConfig& config, const DomainSpec& base, std::size_t count,
                                double theta, const ToyModel& model, SeededRng& rng,
                                std::size_t probes_per_domain = 20);

void write_stream(std::span<const LabeledBatch> batches, std::ostream& out);
void write_stream(std::span<const LabeledBatch> batches, const std::string& path);
// Throws ParseError carrying the 1-based line number of the first bad line.
std::vector<LabeledBatch> read_stream(std::istream& in);
std::vector<LabeledBatch> read_stream(const std::string& path);

}  // namespace kff
