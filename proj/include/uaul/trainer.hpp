#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uaul/config.hpp"
#include "uaul/corpus.hpp"
#include "uaul/kernels.hpp"
#include "uaul/objectives.hpp"
#include "uaul/seq2seq.hpp"

namespace uaul::train {

/// Token ids for one teacher-forced training pair.
struct EncodedExample {
  std::vector<int> source;
  std::vector<int> decoder_input;  // <s> y_1 .. y_{n-1}
  std::vector<int> targets;        // y_1 .. y_n, ending in </s>
};

EncodedExample encode_example(const corpus::Example& ex, const corpus::Vocabulary& vocab,
                              const codec::TemplateKind& kind);

struct ExampleResult {
  objectives::LossBundle terms;
  std::vector<sampling::SampleSets> samples;
  std::size_t distributions_per_step = 0;
};

/// Forward + backward for one example, adding d(loss)/d(params) into `grads`
/// (pass null to skip the backward pass). `mask_seed` fixes the dropout masks.
ExampleResult example_step(const model::ModelParams& params, const EncodedExample& ex,
                           const UaulConfig& cfg, std::uint64_t mask_seed,
                           model::ParamGrads* grads);

struct BatchResult {
  objectives::LossBundle mean;  // per-term batch means; joint = sum of the means
  model::ParamGrads grads;      // mean gradient
  double mean_positives = 0.0;  // |P_t| averaged over timesteps
  double mean_negatives = 0.0;  // |N_t| averaged over timesteps
};

/// Mean loss and gradient over a batch. Examples are processed independently
/// (across OpenMP threads for Exec::parallel) and their gradients summed in
/// batch order, so both execution modes give bit-identical results.
BatchResult batch_gradient(const model::ModelParams& params,
                           std::span<const EncodedExample* const> batch, const UaulConfig& cfg,
                           std::span<const std::uint64_t> mask_seeds,
                           kernels::Exec exec = kernels::Exec::parallel);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  objectives::LossBundle loss;  // mean over the epoch's steps
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double dev_f1 = 0.0;
  double mean_positives = 0.0;
  double mean_negatives = 0.0;
  std::size_t steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<objectives::LossBundle> steps;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
  std::size_t distributions_per_step = 0;
  double wall_seconds = 0.0;  // not part of any deterministic output
};

struct TrainResult {
  model::ModelParams params;  // best-dev parameters
  model::ModelParams final_params;
  corpus::Vocabulary vocab;
  TrainReport report;
};

/// Full training run. Writes one JSON object per epoch to `metrics` when
/// given. Deterministic in (cfg, data).
TrainResult train(const UaulConfig& cfg, std::span<const corpus::Example> train_set,
                  std::span<const corpus::Example> dev_set, std::ostream* metrics = nullptr);

/// JSON line for one epoch (no wall-clock fields).
std::string epoch_json(const EpochRecord& r);

// ---------------------------------------------------------------------------
// Ablations

struct AblationVariant {
  std::string name;
  UaulConfig cfg;
};

/// Full model, -ME, -MUL, -MUL+UL, -MUL-ME+UL, -MC dropout.
std::vector<AblationVariant> ablation_variants(const UaulConfig& base);

struct SeedResult {
  std::uint64_t seed = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string error;  // non-empty when training failed
};

struct VariantResult {
  std::string name;
  std::string config_text;
  std::size_t distributions_per_step = 0;
  bool dropout_active = false;
  std::vector<SeedResult> seeds;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  std::size_t failures = 0;
};

/// Trains every variant for every seed and scores the test split. A failed
/// run is recorded and excluded from the means; the suite continues.
std::vector<VariantResult> run_ablation_suite(const corpus::CorpusSplit& corpus,
                                              const UaulConfig& base,
                                              std::span<const std::uint64_t> seeds,
                                              std::ostream* log = nullptr);

std::string ablation_json(const std::vector<VariantResult>& results);
std::string format_ablation(const std::vector<VariantResult>& results);

}  // namespace uaul::train
