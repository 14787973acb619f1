#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uaul/config.hpp"
#include "uaul/corpus.hpp"
#include "uaul/seq2seq.hpp"
#include "uaul/template_codec.hpp"

namespace uaul::eval {

using codec::AspectQuad;
using QuadLists = std::vector<std::vector<AspectQuad>>;

struct ExampleScore {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t matched = 0;
  std::size_t unparseable_chunks = 0;
};

struct ScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t matched = 0;
  std::size_t unparseable_chunks = 0;
  std::vector<ExampleScore> examples;
};

/// Exact-quad micro precision/recall/F1. A prediction counts when all four
/// elements equal a gold quad of the same example after case folding and
/// whitespace collapsing; implicit elements only match implicit elements.
/// Quads are deduplicated per example. `unparseable` (optional, aligned with
/// pred) is carried into the diagnostics. Throws std::invalid_argument when
/// pred and gold differ in length.
ScoreReport score(const QuadLists& pred, const QuadLists& gold,
                  std::span<const std::size_t> unparseable = {});

struct Prediction {
  std::string text;
  std::vector<AspectQuad> quads;
  std::vector<codec::ParseDiagnostic> diagnostics;
};

/// Greedy-decodes every example (OpenMP across examples) and parses the
/// output with the given template.
std::vector<Prediction> predict(const model::ModelParams& params, const corpus::Vocabulary& vocab,
                                std::span<const corpus::Example> examples,
                                const codec::TemplateKind& kind, std::size_t max_len);

ScoreReport evaluate(const model::ModelParams& params, const corpus::Vocabulary& vocab,
                     std::span<const corpus::Example> examples, const codec::TemplateKind& kind,
                     std::size_t max_len);

/// Fixed-width human-readable summary.
std::string format_report(const ScoreReport& r);
/// Machine-readable JSON document (counts, metrics, per-example diagnostics).
std::string report_json(const ScoreReport& r);

// ---------------------------------------------------------------------------
// Low-resource protocol

/// 10%, 15%, ..., 50%.
std::vector<double> standard_ratios();

/// Seeded permutation of the training indices; the subset for a ratio is its
/// first floor(ratio * n) entries, so smaller subsets are contained in larger
/// ones. Throws std::invalid_argument for a ratio outside (0, 1] or one that
/// selects no example.
std::vector<std::size_t> subset_indices(std::size_t n, double ratio, std::uint64_t seed);

struct LowResourceRow {
  double ratio = 0.0;
  std::size_t train_size = 0;
  double baseline_f1 = 0.0;
  double uaul_f1 = 0.0;
  double delta = 0.0;  // uaul - baseline
};

/// Trains the plain-likelihood baseline and the configured UAUL model on each
/// nested subset and reports test F1.
std::vector<LowResourceRow> low_resource_run(const corpus::CorpusSplit& corpus,
                                             std::span<const double> ratios,
                                             const UaulConfig& cfg, std::ostream* log = nullptr);

std::string low_resource_json(const std::vector<LowResourceRow>& rows);
std::string format_low_resource(const std::vector<LowResourceRow>& rows);

}  // namespace uaul::eval
