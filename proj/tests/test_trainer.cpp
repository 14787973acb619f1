#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "json.hpp"
#include "uaul/evaluator.hpp"
#include "uaul/trainer.hpp"

using namespace uaul;
using namespace uaul::train;

namespace {

corpus::CorpusSplit small_corpus(std::size_t n_train = 48) {
  corpus::SyntheticSpec spec;
  spec.train = n_train;
  spec.dev = 12;
  spec.test = 12;
  spec.seed = 5;
  return corpus::generate_synthetic(spec);
}

UaulConfig small_config() {
  UaulConfig c;
  c.dims.d_model = 16;
  c.dims.heads = 2;
  c.dims.layers = 1;
  c.dims.ff = 24;
  c.batch_size = 8;
  c.epochs = 2;
  c.lr = 2e-3;
  c.max_decode_len = 40;
  return c;
}

}  // namespace

TEST_CASE("encoding shifts the target by one") {
  const auto data = small_corpus();
  const auto vocab = corpus::Vocabulary::build(data.train);
  const auto kind = codec::TemplateKind::special_symbols();
  const auto e = encode_example(data.train[0], vocab, kind);
  REQUIRE(e.targets.size() == e.decoder_input.size());
  CHECK(e.decoder_input[0] == corpus::special::bos);
  CHECK(e.targets.back() == corpus::special::eos);
  for (std::size_t t = 1; t < e.targets.size(); ++t) CHECK(e.decoder_input[t] == e.targets[t - 1]);
  CHECK(codec::parse(vocab.detokenize(e.targets), kind).quads == data.train[0].quads);
  CHECK(e.source == vocab.tokenize(data.train[0].sentence));
}

TEST_CASE("degenerate configuration follows the plain likelihood trajectory exactly") {
  const auto data = small_corpus();
  auto base = small_config();
  base.epochs = 10;
  base.max_steps = 20;
  base.objective = Objective::mle;
  auto degenerate = base;
  degenerate.objective = Objective::uaul;
  degenerate.uncertainty = {1, 0.0};
  degenerate.use_mul = false;
  degenerate.use_me = false;
  const auto a = train::train(base, data.train, data.dev);
  const auto b = train::train(degenerate, data.train, data.dev);
  REQUIRE(a.report.steps.size() == 20);
  CHECK(a.report.steps == b.report.steps);
  CHECK(a.final_params == b.final_params);
}

TEST_CASE("training is deterministic and logs consistent terms") {
  const auto data = small_corpus();
  const auto cfg = small_config();
  std::ostringstream m1, m2;
  const auto a = train::train(cfg, data.train, data.dev, &m1);
  const auto b = train::train(cfg, data.train, data.dev, &m2);
  CHECK(m1.str() == m2.str());
  CHECK(a.final_params == b.final_params);
  CHECK(a.params == b.params);
  CHECK(a.report.epochs.size() == cfg.epochs);
  CHECK(a.report.steps.size() == cfg.epochs * 6);
  for (const auto& s : a.report.steps) CHECK(s.joint == s.mle + s.mul + s.me + s.ul);

  std::istringstream lines(m1.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == n + 1);
    CHECK(!j.contains("wall_seconds"));
    CHECK(j["l_joint"].get<double>() == j["l_mle"].get<double>() + j["l_mul"].get<double>() +
                                            j["l_me"].get<double>() + j["l_ul"].get<double>());
    ++n;
  }
  CHECK(n == cfg.epochs);

  auto other = cfg;
  other.seed = 2;
  CHECK(!(train::train(other, data.train, data.dev).final_params == a.final_params));
}

TEST_CASE("batch gradients do not depend on the thread count") {
  const auto data = small_corpus();
  const auto vocab = corpus::Vocabulary::build(data.train);
  auto cfg = small_config();
  cfg.dims.vocab = vocab.size();
  const auto params = model::ModelParams::initialize(cfg.dims, 3);
  std::vector<EncodedExample> enc;
  for (std::size_t i = 0; i < 6; ++i) enc.push_back(encode_example(data.train[i], vocab, cfg.templ));
  std::vector<const EncodedExample*> batch;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    batch.push_back(&enc[i]);
    seeds.push_back(100 + i);
  }
  const int saved = kernels::max_threads();
  kernels::set_threads(4);
  const auto par = batch_gradient(params, batch, cfg, seeds, kernels::Exec::parallel);
  kernels::set_threads(saved);
  const auto ser = batch_gradient(params, batch, cfg, seeds, kernels::Exec::serial);
  CHECK(par.mean == ser.mean);
  CHECK(par.grads == ser.grads);
  CHECK(par.mean_positives == 5.0);
  CHECK(par.mean_negatives > 0.0);
  CHECK_THROWS_AS(batch_gradient(params, {}, cfg, {}), std::invalid_argument);
}

TEST_CASE("a non-finite loss surfaces as an error") {
  const auto data = small_corpus();
  const auto vocab = corpus::Vocabulary::build(data.train);
  auto cfg = small_config();
  cfg.dims.vocab = vocab.size();
  auto params = model::ModelParams::initialize(cfg.dims, 3);
  params[params.layout().head][0] = std::numeric_limits<double>::quiet_NaN();
  const auto e = encode_example(data.train[0], vocab, cfg.templ);
  auto grads = params.zeros_like();
  CHECK_THROWS_AS(example_step(params, e, cfg, 1, &grads), ad::NonFiniteLoss);
  CHECK_THROWS_AS(example_step(params, e, cfg, 1, nullptr), ad::NonFiniteLoss);
}

TEST_CASE("a tiny corpus can be memorized") {
  auto data = small_corpus();
  data.train.resize(4);
  auto cfg = small_config();
  cfg.objective = Objective::mle;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  const auto res = train::train(cfg, data.train, {});
  CHECK(res.report.epochs.back().loss.joint < 0.05);
  const auto score =
      eval::evaluate(res.final_params, res.vocab, data.train, cfg.templ, cfg.max_decode_len);
  CHECK(score.f1 == 1.0);
}

TEST_CASE("ablation variants") {
  const auto v = ablation_variants(small_config());
  REQUIRE(v.size() == 6);
  const std::vector<std::string> names{"full", "-ME", "-MUL", "-MUL+UL", "-MUL-ME+UL", "-MC dropout"};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(v[i].name == names[i]);
    CHECK_NOTHROW(v[i].cfg.validate());
    CHECK(v[i].cfg.objective == Objective::uaul);
  }
  CHECK(v[0].cfg.use_mul);
  CHECK(v[0].cfg.use_me);
  CHECK(v[0].cfg.use_mc);
  CHECK(!v[1].cfg.use_me);
  CHECK(!v[2].cfg.use_mul);
  CHECK(!v[2].cfg.use_ul);
  CHECK(v[3].cfg.use_ul);
  CHECK(v[3].cfg.use_me);
  CHECK(v[4].cfg.use_ul);
  CHECK(!v[4].cfg.use_me);
  CHECK(!v[5].cfg.use_mc);
  CHECK(v[5].cfg.head_objective().distributions_per_step() == 1);
}

TEST_CASE("the ablation suite records failures and carries on") {
  auto data = small_corpus();
  data.train.clear();
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto res = run_ablation_suite(data, small_config(), seeds);
  REQUIRE(res.size() == 6);
  for (const auto& v : res) {
    CHECK(v.failures == 2);
    REQUIRE(v.seeds.size() == 2);
    CHECK(!v.seeds[0].error.empty());
  }
  data.test.clear();
  CHECK_THROWS_AS(run_ablation_suite(data, small_config(), seeds), std::invalid_argument);
}

TEST_CASE("the ablation suite reports every variant and seed") {
  const auto data = small_corpus(24);
  auto cfg = small_config();
  cfg.epochs = 1;
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto res = run_ablation_suite(data, cfg, seeds);
  REQUIRE(res.size() == 6);
  for (const auto& v : res) {
    CHECK(v.failures == 0);
    CHECK(v.seeds.size() == 2);
  }
  CHECK(res[5].distributions_per_step == 1);
  CHECK(!res[5].dropout_active);
  CHECK(res[0].dropout_active);
  const auto j = nlohmann::json::parse(ablation_json(res));
  CHECK(j.size() == 6);
  CHECK(format_ablation(res).find("-MC dropout") != std::string::npos);
}
