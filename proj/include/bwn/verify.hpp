#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bwn/layers.hpp"

namespace bwn::verify {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const noexcept;
  void add(std::string name, bool passed, std::string detail = {});
};

void print(std::ostream& os, const SuiteResult& result);

/// Closed-form binarisation against exhaustive search over all sign patterns.
SuiteResult binarize_oracle(std::size_t filters = 1000, std::uint64_t seed = 1);

/// Multiplication-free kernel against the reference convolution on expanded
/// weights, including the instrumented multiply counter.
SuiteResult conv_equivalence(std::size_t pairs = 100, std::uint64_t seed = 2);

/// Straight-through constructed cases plus a double precision finite
/// difference check on sampled parameters, with binarised weights frozen at
/// aB.
SuiteResult gradcheck(std::size_t samples = 240, std::uint64_t seed = 3);

/// EER and minDCF against the brute-force midpoint sweep, plus monotone
/// transform invariance and target/nontarget symmetry.
SuiteResult metrics_oracle(std::size_t score_sets = 1000, std::size_t invariance_sets = 100,
                           std::uint64_t seed = 4);

/// Ten binary 3x3 convolutions holding exactly 21,600,000 binarizable
/// weights, followed by small full-precision pooling, embedding and
/// classifier layers.
NetworkSpec storage_layer_set();

/// Small random network mixing every layer kind; valid by construction.
NetworkSpec random_network_spec(std::uint64_t seed);

/// Size accounting of the 21.6M-parameter layer set and pack/save round
/// trips over randomized models.
SuiteResult storage(std::size_t round_trips = 100, std::uint64_t seed = 5);

/// Learning-rate schedule values and the two-step momentum recurrence.
SuiteResult optimizer();

inline constexpr std::string_view kScopes[] = {"binarize-oracle", "conv-equivalence", "gradcheck",
                                               "metrics-oracle",  "storage",          "optimizer"};

/// Runs one named scope ("all" runs every scope). Throws config on an
/// unknown scope.
std::vector<SuiteResult> run_scope(std::string_view scope);

}  // namespace bwn::verify
