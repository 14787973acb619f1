#pragma once

// Training objectives: likelihood over the MC distributions, marginalized
// unlikelihood over the acquired positive/negative probabilities, entropy
// minimization, plain unlikelihood, and their unit-weight sum.

#include <cstddef>
#include <span>
#include <vector>

#include "uaul/autograd.hpp"
#include "uaul/uncertainty.hpp"

namespace uaul::objectives {

using model::VocabDistribution;
using sampling::SampleSets;

struct MulConfig {
  double alpha = 10.0;   // scale
  double margin = -0.6;  // m

  void validate() const;
};

struct LossBundle {
  double mle = 0.0;
  double mul = 0.0;
  double me = 0.0;
  double ul = 0.0;  // only non-zero in the plain-unlikelihood ablations
  double joint = 0.0;

  friend bool operator==(const LossBundle&, const LossBundle&) = default;
};

/// joint = mle + mul + me + ul, summed in that order.
LossBundle combine(double mle, double mul, double me, double ul = 0.0);

/// One timestep of the margin loss,
///   log(1 + sum_k sum_l exp(alpha * (N_l - P_k + m))),
/// evaluated as a log-sum-exp with the 1 folded in as exp(0).
struct MulTerm {
  double value = 0.0;
  std::vector<double> d_positive;  // dL/dP_k
  std::vector<double> d_negative;  // dL/dN_l
};
MulTerm mul_timestep(std::span<const double> positives, std::span<const double> negatives,
                     const MulConfig& cfg);

/// Sum over timesteps of mul_timestep.
double mul_loss(std::span<const SampleSets> steps, const MulConfig& cfg);

/// dists[t][i]: distribution i of timestep t. -(1/K) sum_i sum_t log p[y_t].
double mle_loss(const std::vector<std::vector<VocabDistribution>>& dists,
                std::span<const int> gold);

/// -sum_i sum_t sum_v p log p (0 log 0 = 0). With normalize_by_k the sum is
/// divided by K like the likelihood term.
double me_loss(const std::vector<std::vector<VocabDistribution>>& dists,
               bool normalize_by_k = false);

/// -sum_t sum_{c in negatives[t]} log(1 - p_t[c]).
double ul_loss(std::span<const VocabDistribution> dists,
               std::span<const std::vector<int>> negatives);

// ---------------------------------------------------------------------------
// Fused training head

enum class NegativeStrategy { uncertainty, top_k, top_p };

struct HeadObjective {
  sampling::UncertaintyConfig uncertainty;
  /// false: a single undropped distribution per step (K = 1, p = 0).
  bool use_mc = true;
  NegativeStrategy strategy = NegativeStrategy::uncertainty;
  std::size_t top_k = 3;
  double top_p = 0.9;
  MulConfig mul;
  bool use_mle = true;  // off only to isolate the other terms
  bool use_mul = true;
  bool use_me = true;
  bool use_ul = false;
  bool me_normalize_by_k = false;

  void validate() const;
  std::size_t distributions_per_step() const { return use_mc ? uncertainty.k : 1; }
};

struct HeadResult {
  ad::Var loss;
  LossBundle terms;
  std::vector<SampleSets> samples;  // one per timestep
  std::size_t distributions_per_step = 0;
};

/// Records the joint objective for one target sequence on the tape.
///
/// `hidden` is the n x d decoder state, `head` the d x V output matrix.
/// Masks are drawn from `rng` timestep-major, one per (t, i), exactly as
/// repeated mc_distributions calls would draw them. Gradients reach hidden
/// and head through all enabled terms; sample selection is treated as
/// constant.
HeadResult uaul_head(ad::Tape& tape, ad::Var hidden, ad::Var head, std::span<const int> targets,
                     const HeadObjective& objective, Rng& rng);

/// Plain teacher-forced cross entropy of softmax(hidden * head).
ad::Var mle_head(ad::Tape& tape, ad::Var hidden, ad::Var head, std::span<const int> targets);

}  // namespace uaul::objectives
