#include "uaul/trainer.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "uaul/evaluator.hpp"
#include "uaul/rng.hpp"

namespace uaul::train {

using objectives::LossBundle;

EncodedExample encode_example(const corpus::Example& ex, const corpus::Vocabulary& vocab,
                              const codec::TemplateKind& kind) {
  EncodedExample e;
  e.source = vocab.tokenize(ex.sentence);
  if (e.source.empty()) throw std::invalid_argument("example sentence has no tokens");
  e.targets = vocab.tokenize(codec::render(ex.quads, kind));
  e.targets.push_back(corpus::special::eos);
  e.decoder_input.push_back(corpus::special::bos);
  e.decoder_input.insert(e.decoder_input.end(), e.targets.begin(), e.targets.end() - 1);
  return e;
}

ExampleResult example_step(const model::ModelParams& params, const EncodedExample& ex,
                           const UaulConfig& cfg, std::uint64_t mask_seed,
                           model::ParamGrads* grads) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, grads);
  const ad::Var h = model::encode_decode(tape, params, bound, ex.source, ex.decoder_input);
  const ad::Var head = bound[params.layout().head];
  ExampleResult out;
  ad::Var loss;
  if (cfg.objective == Objective::mle) {
    loss = objectives::mle_head(tape, h, head, ex.targets);
    out.terms = objectives::combine(tape.value(loss)[0], 0.0, 0.0, 0.0);
    out.distributions_per_step = 1;
  } else {
    Rng rng(mask_seed);
    auto res = objectives::uaul_head(tape, h, head, ex.targets, cfg.head_objective(), rng);
    loss = res.loss;
    out.terms = res.terms;
    out.samples = std::move(res.samples);
    out.distributions_per_step = res.distributions_per_step;
  }
  if (grads != nullptr) {
    tape.backward(loss);
  } else if (!std::isfinite(tape.value(loss)[0])) {
    throw ad::NonFiniteLoss("non-finite loss value");
  }
  return out;
}

namespace {

struct Workspace {
  std::vector<model::ParamGrads> slots;
  void ensure(const model::ModelParams& params, std::size_t n) {
    while (slots.size() < n) slots.push_back(params.zeros_like());
  }
};

BatchResult run_batch(const model::ModelParams& params,
                      std::span<const EncodedExample* const> batch, const UaulConfig& cfg,
                      std::span<const std::uint64_t> seeds, kernels::Exec exec, Workspace& ws) {
  if (seeds.size() != batch.size()) throw std::invalid_argument("one mask seed per example");
  const std::size_t n = batch.size();
  ws.ensure(params, n);
  std::vector<ExampleResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1) if (exec == kernels::Exec::parallel && n > 1)
  for (long i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      for (auto& t : ws.slots[k]) t.fill(0.0);
      results[k] = example_step(params, *batch[k], cfg, seeds[k], &ws.slots[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchResult out;
  out.grads = ws.slots[0];
  for (std::size_t k = 1; k < n; ++k)
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      auto& dst = out.grads[p].values();
      const auto& src = ws.slots[k][p].values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& t : out.grads)
    for (double& x : t.values()) x *= inv;

  double mle = 0, mul = 0, me = 0, ul = 0;
  std::size_t steps = 0, pos = 0, neg = 0;
  for (const auto& r : results) {
    mle += r.terms.mle;
    mul += r.terms.mul;
    me += r.terms.me;
    ul += r.terms.ul;
    for (const auto& s : r.samples) {
      ++steps;
      pos += s.positives.size();
      neg += s.negatives.size();
    }
  }
  out.mean = objectives::combine(mle * inv, mul * inv, me * inv, ul * inv);
  if (steps > 0) {
    out.mean_positives = static_cast<double>(pos) / static_cast<double>(steps);
    out.mean_negatives = static_cast<double>(neg) / static_cast<double>(steps);
  }
  return out;
}

void clip_global_norm(model::ParamGrads& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& t : grads)
    for (double x : t.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& t : grads)
    for (double& x : t.values()) x *= s;
}

class Adam {
 public:
  Adam(const model::ModelParams& params, const UaulConfig& cfg)
      : m_(params.zeros_like()), v_(params.zeros_like()), cfg_(cfg) {}

  void step(model::ModelParams& params, const model::ParamGrads& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p].values();
      auto& m = m_[p].values();
      auto& v = v_[p].values();
      const auto& g = grads[p].values();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        w[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.adam_eps);
      }
    }
  }

 private:
  model::ParamGrads m_, v_;
  const UaulConfig& cfg_;
  std::size_t t_ = 0;
};

}  // namespace

BatchResult batch_gradient(const model::ModelParams& params,
                           std::span<const EncodedExample* const> batch, const UaulConfig& cfg,
                           std::span<const std::uint64_t> mask_seeds, kernels::Exec exec) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Workspace ws;
  return run_batch(params, batch, cfg, mask_seeds, exec, ws);
}

std::string epoch_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["steps"] = r.steps;
  j["l_mle"] = r.loss.mle;
  j["l_mul"] = r.loss.mul;
  j["l_me"] = r.loss.me;
  j["l_ul"] = r.loss.ul;
  j["l_joint"] = r.loss.joint;
  j["mean_positives"] = r.mean_positives;
  j["mean_negatives"] = r.mean_negatives;
  j["dev_precision"] = r.dev_precision;
  j["dev_recall"] = r.dev_recall;
  j["dev_f1"] = r.dev_f1;
  return j.dump();
}

TrainResult train(const UaulConfig& cfg, std::span<const corpus::Example> train_set,
                  std::span<const corpus::Example> dev_set, std::ostream* metrics) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  const auto started = std::chrono::steady_clock::now();
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);

  auto vocab = corpus::Vocabulary::build(train_set);
  model::ModelDims dims = cfg.dims;
  dims.vocab = vocab.size();
  auto params = model::ModelParams::initialize(dims, cfg.seed);

  std::vector<EncodedExample> encoded;
  encoded.reserve(train_set.size());
  for (const auto& ex : train_set) encoded.push_back(encode_example(ex, vocab, cfg.templ));

  Adam adam(params, cfg);
  Workspace ws;
  TrainReport report;
  report.distributions_per_step =
      cfg.objective == Objective::mle ? 1 : cfg.head_objective().distributions_per_step();
  model::ModelParams best = params;
  std::size_t global_step = 0;
  std::vector<std::size_t> order(encoded.size());
  std::vector<const EncodedExample*> batch;
  std::vector<std::uint64_t> seeds;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5F, epoch}));
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    double mle = 0, mul = 0, me = 0, ul = 0, pos = 0, neg = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps > 0 && global_step >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      seeds.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&encoded[order[i]]);
        seeds.push_back(derive_seed(cfg.seed, {0xD0, epoch, order[i]}));
      }
      BatchResult br;
      try {
        br = run_batch(params, batch, cfg, seeds, kernels::Exec::parallel, ws);
      } catch (const ad::NonFiniteLoss& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", step " << global_step + 1
            << " (examples";
        for (std::size_t i = start; i < end; ++i) msg << ' ' << order[i];
        msg << "): " << e.what();
        throw TrainingDiverged(msg.str());
      }
      clip_global_norm(br.grads, cfg.clip_norm);
      adam.step(params, br.grads);
      ++global_step;
      report.steps.push_back(br.mean);
      mle += br.mean.mle;
      mul += br.mean.mul;
      me += br.mean.me;
      ul += br.mean.ul;
      pos += br.mean_positives;
      neg += br.mean_negatives;
      ++rec.steps;
    }
    if (rec.steps > 0) {
      const double inv = 1.0 / static_cast<double>(rec.steps);
      rec.loss = objectives::combine(mle * inv, mul * inv, me * inv, ul * inv);
      rec.mean_positives = pos * inv;
      rec.mean_negatives = neg * inv;
    }
    if (!params.all_finite()) {
      throw TrainingDiverged("training diverged: non-finite parameters after epoch " +
                             std::to_string(epoch));
    }
    if (!dev_set.empty()) {
      const auto sr = eval::evaluate(params, vocab, dev_set, cfg.templ, cfg.max_decode_len);
      rec.dev_precision = sr.precision;
      rec.dev_recall = sr.recall;
      rec.dev_f1 = sr.f1;
    }
    if (dev_set.empty() || rec.dev_f1 > report.best_dev_f1) {
      report.best_dev_f1 = rec.dev_f1;
      report.best_epoch = epoch;
      best = params;
    }
    report.epochs.push_back(rec);
    if (metrics != nullptr) *metrics << epoch_json(rec) << '\n' << std::flush;
    if (cfg.max_steps > 0 && global_step >= cfg.max_steps) break;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(best), std::move(params), std::move(vocab), std::move(report)};
}

// ---------------------------------------------------------------------------

std::vector<AblationVariant> ablation_variants(const UaulConfig& base) {
  UaulConfig full = base;
  full.objective = Objective::uaul;
  full.use_mul = true;
  full.use_me = true;
  full.use_mc = true;
  full.use_ul = false;
  full.strategy = objectives::NegativeStrategy::uncertainty;

  std::vector<AblationVariant> v;
  v.push_back({"full", full});
  auto no_me = full;
  no_me.use_me = false;
  v.push_back({"-ME", no_me});
  auto no_mul = full;
  no_mul.use_mul = false;
  v.push_back({"-MUL", no_mul});
  auto ul = no_mul;
  ul.use_ul = true;
  v.push_back({"-MUL+UL", ul});
  auto ul_no_me = ul;
  ul_no_me.use_me = false;
  v.push_back({"-MUL-ME+UL", ul_no_me});
  auto no_mc = full;
  no_mc.use_mc = false;
  v.push_back({"-MC dropout", no_mc});
  return v;
}

std::vector<VariantResult> run_ablation_suite(const corpus::CorpusSplit& corpus,
                                              const UaulConfig& base,
                                              std::span<const std::uint64_t> seeds,
                                              std::ostream* log) {
  if (corpus.test.empty()) throw std::invalid_argument("ablation suite needs a test split");
  std::vector<VariantResult> out;
  for (const auto& variant : ablation_variants(base)) {
    VariantResult vr;
    vr.name = variant.name;
    vr.config_text = format_config(variant.cfg);
    const auto head = variant.cfg.head_objective();
    vr.distributions_per_step = head.distributions_per_step();
    vr.dropout_active = head.use_mc && head.uncertainty.dropout > 0.0;
    std::size_t ok = 0;
    for (std::uint64_t seed : seeds) {
      SeedResult sr;
      sr.seed = seed;
      try {
        UaulConfig cfg = variant.cfg;
        cfg.seed = seed;
        const auto res = train(cfg, corpus.train, corpus.dev);
        const auto score =
            eval::evaluate(res.params, res.vocab, corpus.test, cfg.templ, cfg.max_decode_len);
        sr.precision = score.precision;
        sr.recall = score.recall;
        sr.f1 = score.f1;
        vr.mean_precision += sr.precision;
        vr.mean_recall += sr.recall;
        vr.mean_f1 += sr.f1;
        ++ok;
      } catch (const std::exception& e) {
        sr.error = e.what();
        ++vr.failures;
      }
      if (log != nullptr) {
        *log << "ablation " << vr.name << " seed " << seed << ": "
             << (sr.error.empty() ? "f1 " + std::to_string(sr.f1) : "failed: " + sr.error)
             << '\n';
      }
      vr.seeds.push_back(std::move(sr));
    }
    if (ok > 0) {
      vr.mean_precision /= static_cast<double>(ok);
      vr.mean_recall /= static_cast<double>(ok);
      vr.mean_f1 /= static_cast<double>(ok);
    }
    out.push_back(std::move(vr));
  }
  return out;
}

std::string ablation_json(const std::vector<VariantResult>& results) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& v : results) {
    nlohmann::ordered_json j;
    j["variant"] = v.name;
    j["distributions_per_step"] = v.distributions_per_step;
    j["dropout_active"] = v.dropout_active;
    j["mean_precision"] = v.mean_precision;
    j["mean_recall"] = v.mean_recall;
    j["mean_f1"] = v.mean_f1;
    j["failures"] = v.failures;
    j["seeds"] = nlohmann::ordered_json::array();
    for (const auto& s : v.seeds) {
      nlohmann::ordered_json js;
      js["seed"] = s.seed;
      js["precision"] = s.precision;
      js["recall"] = s.recall;
      js["f1"] = s.f1;
      if (!s.error.empty()) js["error"] = s.error;
      j["seeds"].push_back(std::move(js));
    }
    doc.push_back(std::move(j));
  }
  return doc.dump(2);
}

std::string format_ablation(const std::vector<VariantResult>& results) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "variant" << std::right << std::setw(8) << "Pre"
     << std::setw(8) << "Rec" << std::setw(8) << "F1" << std::setw(6) << "K" << "  per-seed F1\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& v : results) {
    os << std::left << std::setw(14) << v.name << std::right << std::setw(8)
       << 100 * v.mean_precision << std::setw(8) << 100 * v.mean_recall << std::setw(8)
       << 100 * v.mean_f1 << std::setw(6) << v.distributions_per_step << ' ';
    for (const auto& s : v.seeds) {
      os << ' ' << (s.error.empty() ? std::to_string(100 * s.f1).substr(0, 5) : "ERR");
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace uaul::train
