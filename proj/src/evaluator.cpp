#include "uaul/evaluator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uaul/rng.hpp"
#include "uaul/trainer.hpp"

namespace uaul::eval {

namespace {

using Key = std::array<std::string, 4>;

// Implicit terms get a key no surface string can produce.
std::string term_key(const codec::Term& t) {
  return t ? codec::to_lower(codec::normalize_space(*t)) : std::string("\x01");
}

std::set<Key> key_set(const std::vector<AspectQuad>& quads) {
  std::set<Key> out;
  for (const auto& q : quads) {
    out.insert({term_key(q.aspect), term_key(q.opinion),
                codec::to_lower(codec::normalize_space(q.category)),
                std::string(codec::sentiment_name(q.sentiment))});
  }
  return out;
}

double ratio(std::size_t a, std::size_t b) {
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}

}  // namespace

ScoreReport score(const QuadLists& pred, const QuadLists& gold,
                  std::span<const std::size_t> unparseable) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("prediction and gold lists differ in length (" +
                                std::to_string(pred.size()) + " vs " +
                                std::to_string(gold.size()) + ")");
  }
  if (!unparseable.empty() && unparseable.size() != pred.size()) {
    throw std::invalid_argument("unparseable counts must align with predictions");
  }
  ScoreReport r;
  r.examples.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = key_set(pred[i]);
    const auto g = key_set(gold[i]);
    ExampleScore e;
    e.gold = g.size();
    e.predicted = p.size();
    for (const auto& k : p) e.matched += g.count(k);
    if (!unparseable.empty()) e.unparseable_chunks = unparseable[i];
    r.gold += e.gold;
    r.predicted += e.predicted;
    r.matched += e.matched;
    r.unparseable_chunks += e.unparseable_chunks;
    r.examples.push_back(e);
  }
  r.precision = ratio(r.matched, r.predicted);
  r.recall = ratio(r.matched, r.gold);
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::vector<Prediction> predict(const model::ModelParams& params, const corpus::Vocabulary& vocab,
                                std::span<const corpus::Example> examples,
                                const codec::TemplateKind& kind, std::size_t max_len) {
  std::vector<Prediction> out(examples.size());
  const auto n = static_cast<long>(examples.size());
#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto source = vocab.tokenize(examples[k].sentence);
    const auto ids = model::greedy_decode(params, source, max_len);
    out[k].text = vocab.detokenize(ids);
    auto parsed = codec::parse(out[k].text, kind);
    out[k].quads = std::move(parsed.quads);
    out[k].diagnostics = std::move(parsed.diagnostics);
  }
  return out;
}

ScoreReport evaluate(const model::ModelParams& params, const corpus::Vocabulary& vocab,
                     std::span<const corpus::Example> examples, const codec::TemplateKind& kind,
                     std::size_t max_len) {
  const auto preds = predict(params, vocab, examples, kind, max_len);
  QuadLists p, g;
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    p.push_back(preds[i].quads);
    g.push_back(examples[i].quads);
    bad.push_back(preds[i].diagnostics.size());
  }
  return score(p, g, bad);
}

std::string format_report(const ScoreReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "precision " << r.precision << '\n'
     << "recall    " << r.recall << '\n'
     << "f1        " << r.f1 << '\n'
     << "gold " << r.gold << "  predicted " << r.predicted << "  matched " << r.matched
     << "  unparseable " << r.unparseable_chunks << '\n';
  return os.str();
}

std::string report_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["gold"] = r.gold;
  j["predicted"] = r.predicted;
  j["matched"] = r.matched;
  j["unparseable_chunks"] = r.unparseable_chunks;
  auto& ex = j["examples"] = nlohmann::ordered_json::array();
  for (const auto& e : r.examples) {
    ex.push_back({{"gold", e.gold},
                  {"predicted", e.predicted},
                  {"matched", e.matched},
                  {"unparseable_chunks", e.unparseable_chunks}});
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------

std::vector<double> standard_ratios() {
  std::vector<double> r;
  for (int pct = 10; pct <= 50; pct += 5) r.push_back(pct / 100.0);
  return r;
}

std::vector<std::size_t> subset_indices(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("subset ratio must lie in (0, 1]");
  }
  // The small epsilon keeps 0.15 * 200 from landing on 29.
  const auto size = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  if (size == 0) {
    throw std::invalid_argument("ratio " + std::to_string(ratio) + " selects no example out of " +
                                std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0x10E5}));
  rng.shuffle(perm);
  perm.resize(size);
  return perm;
}

std::vector<LowResourceRow> low_resource_run(const corpus::CorpusSplit& corpus,
                                             std::span<const double> ratios,
                                             const UaulConfig& cfg, std::ostream* log) {
  if (corpus.test.empty()) throw std::invalid_argument("low-resource run needs a test split");
  std::vector<LowResourceRow> rows;
  for (double r : ratios) {
    const auto idx = subset_indices(corpus.train.size(), r, cfg.seed);
    std::vector<corpus::Example> subset;
    subset.reserve(idx.size());
    for (auto i : idx) subset.push_back(corpus.train[i]);

    auto run = [&](UaulConfig c) {
      const auto res = train::train(c, subset, corpus.dev);
      return evaluate(res.params, res.vocab, corpus.test, c.templ, c.max_decode_len).f1;
    };
    UaulConfig base = cfg;
    base.objective = Objective::mle;
    UaulConfig ours = cfg;
    ours.objective = Objective::uaul;

    LowResourceRow row;
    row.ratio = r;
    row.train_size = subset.size();
    row.baseline_f1 = run(base);
    row.uaul_f1 = run(ours);
    row.delta = row.uaul_f1 - row.baseline_f1;
    if (log != nullptr) {
      *log << "ratio " << r << " (" << row.train_size << " examples): baseline "
           << row.baseline_f1 << ", uaul " << row.uaul_f1 << '\n';
    }
    rows.push_back(row);
  }
  return rows;
}

std::string low_resource_json(const std::vector<LowResourceRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["ratio"] = r.ratio;
    j["train_size"] = r.train_size;
    j["baseline_f1"] = r.baseline_f1;
    j["uaul_f1"] = r.uaul_f1;
    j["delta"] = r.delta;
    doc.push_back(std::move(j));
  }
  return doc.dump(2);
}

std::string format_low_resource(const std::vector<LowResourceRow>& rows) {
  std::ostringstream os;
  os << std::setw(6) << "ratio" << std::setw(7) << "n" << std::setw(10) << "baseline"
     << std::setw(10) << "uaul" << std::setw(9) << "delta" << '\n';
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::setprecision(0) << std::setw(5) << 100 * r.ratio << '%' << std::setw(7)
       << r.train_size << std::setprecision(2) << std::setw(10) << 100 * r.baseline_f1
       << std::setw(10) << 100 * r.uaul_f1 << std::setw(9) << std::showpos << 100 * r.delta
       << std::noshowpos << '\n';
  }
  return os.str();
}

}  // namespace uaul::eval
