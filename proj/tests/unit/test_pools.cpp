#include <doctest.h>

#include <cmath>

#include "kff/error.hpp"
#include "kff/pools.hpp"
#include "kff/rng.hpp"

using namespace kff;

namespace {

ClassPromptPool class_pool(std::vector<ClassPromptEntry> entries, std::size_t capacity = 10) {
  ClassPromptPool p(capacity, 2);
  p.restore(std::move(entries), 3);
  return p;
}

}  // namespace

TEST_CASE("empty pools always fission") {
  SeededRng rng(1);
  const ClassPromptPool pool(5, 3);
  const FissionOutcome o = fission_class(pool, std::vector<double>{0.5, 0.5}, {0.0, 1.0, 0.01}, rng);
  CHECK(o.fissioned());
  CHECK(o.composed_prompt.size() == 3);
  CHECK(o.pool_version == pool.version());
  SeededRng zero(1);
  const FissionOutcome z = fission_class(pool, std::vector<double>{0.5, 0.5}, {0.0, 1.0, 0.0}, zero);
  CHECK(z.composed_prompt == Vector(3));
}

TEST_CASE("class matching uses cosine similarity with an exclusive threshold") {
  SeededRng rng(2);
  const ClassPromptPool pool = class_pool({{Vector{1.0, 0.0}, Vector{1.0, 1.0}, 0},
                                           {Vector{0.0, 1.0}, Vector{-1.0, 3.0}, 0},
                                           {Vector{0.5, 0.5}, Vector{2.0, 0.0}, 0}});
  // Orthogonal to entry 1: sim exactly 0 is not above a threshold of 0.
  const FissionOutcome o = fission_class(pool, std::vector<double>{1.0, 0.0}, {0.0, 1.0}, rng);
  REQUIRE_FALSE(o.fissioned());
  REQUIRE(o.weights->size() == 2);
  CHECK((*o.weights)[0].index == 0);
  CHECK((*o.weights)[1].index == 2);
  const double s0 = 1.0, s2 = std::sqrt(0.5);
  const double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s2));
  CHECK((*o.weights)[0].weight == doctest::Approx(w0));
  CHECK(o.composed_prompt[0] == doctest::Approx(w0 * 1.0 + (1 - w0) * 2.0));
  CHECK(o.composed_prompt[1] == doctest::Approx(w0 * 1.0));
  CHECK(o.pool_version == 3);

  const FissionOutcome all = fission_class(pool, std::vector<double>{1.0, 0.0}, {0.0, 1.0, 0.01, true}, rng);
  REQUIRE(all.weights->size() == 3);
  double total = 0.0;
  for (const CandidateWeight& c : *all.weights) total += c.weight;
  CHECK(total == doctest::Approx(1.0));

  const FissionOutcome none = fission_class(pool, std::vector<double>{1.0, 0.0}, {0.999999, 1.0}, rng);
  CHECK_FALSE(none.fissioned());
  CHECK(none.weights->size() == 1);
}

TEST_CASE("temperature sharpens class weights") {
  SeededRng rng(3);
  const ClassPromptPool pool =
      class_pool({{Vector{1.0, 0.0}, Vector{1.0, 0.0}, 0}, {Vector{0.6, 0.4}, Vector{0.0, 1.0}, 0}});
  const auto hot = fission_class(pool, std::vector<double>{0.9, 0.1}, {0.0, 10.0}, rng);
  const auto cold = fission_class(pool, std::vector<double>{0.9, 0.1}, {0.0, 0.001}, rng);
  CHECK((*cold.weights)[0].weight > (*hot.weights)[0].weight);
  CHECK((*cold.weights)[0].weight == doctest::Approx(1.0));
}

TEST_CASE("class fission rejects bad inputs") {
  SeededRng rng(4);
  const ClassPromptPool pool = class_pool({{Vector{1.0, 0.0}, Vector{1.0, 0.0}, 0}});
  CHECK_THROWS_AS(fission_class(pool, std::vector<double>{0.7, 0.7}, {0.0, 1.0}, rng), DomainError);
  CHECK_THROWS_AS(fission_class(pool, std::vector<double>{0.5, 0.5}, {0.0, 0.0}, rng), ConfigError);
  CHECK_THROWS_AS(fission_class(pool, std::vector<double>{0.5, 0.5}, {1.0, 1.0}, rng), ConfigError);
  CHECK_THROWS_AS(fission_class(pool, std::vector<double>{0.2, 0.3, 0.5}, {0.0, 1.0}, rng), DimensionError);
  CHECK_THROWS_AS(ClassPromptPool(0, 2), ConfigError);
}

TEST_CASE("domain matching uses the statistics distance") {
  SeededRng rng(5);
  DomainPromptPool pool(4, 2);
  pool.restore({{BatchStats{Vector{0.0}, Vector{1.0}}, Vector{1.0, 0.0}, 0},
                {BatchStats{Vector{3.0}, Vector{1.0}}, Vector{0.0, 1.0}, 0},
                {BatchStats{Vector{10.0}, Vector{1.0}}, Vector{5.0, 5.0}, 0}},
               0);
  const BatchStats q{Vector{1.0}, Vector{1.0}};
  const FissionOutcome o = fission_domain(pool, q, {2.5, 1.0}, rng);
  REQUIRE_FALSE(o.fissioned());
  REQUIRE(o.weights->size() == 2);
  const double w0 = std::exp(-1.0) / (std::exp(-1.0) + std::exp(-2.0));
  CHECK((*o.weights)[0].weight == doctest::Approx(w0));
  CHECK(o.composed_prompt[0] == doctest::Approx(w0));
  // Distance exactly at gamma_d does not match.
  CHECK(fission_domain(pool, q, {1.0, 1.0}, rng).fissioned());
  CHECK_THROWS_AS(fission_domain(pool, q, {0.0, 1.0}, rng), ConfigError);
}
