#pragma once

// Last-layer Monte Carlo dropout and negative-sample acquisition.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "uaul/rng.hpp"
#include "uaul/seq2seq.hpp"

namespace uaul::sampling {

using model::VocabDistribution;

struct UncertaintyConfig {
  std::size_t k = 5;     // MC forward passes
  double dropout = 0.4;  // p

  /// Throws std::invalid_argument unless k >= 1 and 0 <= p < 1.
  void validate() const;
};

/// keep[j] == 1 with probability 1 - p, independently per entry.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
};

DropoutMask sample_mask(std::size_t d, double p, Rng& rng);

/// h * mask / (1 - p).
std::vector<double> apply_mask(std::span<const double> hidden, const DropoutMask& mask, double p);

/// K distributions softmax(W^T (M_i h / (1-p))) from a single hidden state.
/// Draws K masks from `rng` in order.
std::vector<VocabDistribution> mc_distributions(const model::ModelParams& params,
                                                std::span<const double> hidden,
                                                const UncertaintyConfig& cfg, Rng& rng);

struct Negative {
  double prob = 0.0;
  int token = 0;
  std::size_t source = 0;  // index of the distribution it was taken from

  friend bool operator==(const Negative&, const Negative&) = default;
};

/// Positive (gold-token) and negative probabilities for one timestep.
struct SampleSets {
  std::vector<double> positives;
  std::vector<Negative> negatives;

  friend bool operator==(const SampleSets&, const SampleSets&) = default;
};

/// For each distribution: record its gold probability as a positive; if its
/// argmax (lowest id on ties) is not the gold token, record the argmax
/// probability as a negative. Repeated wrong tokens stay separate entries.
SampleSets acquire_samples(std::span<const VocabDistribution> dists, int gold);

/// Negatives are the k most probable tokens other than the gold token.
SampleSets topk_negatives(const VocabDistribution& dist, int gold, std::size_t k);
/// Negatives are the tokens of the smallest high-probability prefix whose mass
/// reaches p_cut, other than the gold token. p_cut >= 1 selects every token.
SampleSets topp_negatives(const VocabDistribution& dist, int gold, double p_cut);

/// Token ids sorted by descending probability, ties toward the lower id.
std::vector<int> rank_tokens(const VocabDistribution& dist);

}  // namespace uaul::sampling
