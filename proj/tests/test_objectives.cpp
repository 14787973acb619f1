#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "uaul/kernels.hpp"
#include "uaul/objectives.hpp"

using namespace uaul;
using namespace uaul::objectives;
using uaul::testing::head_loss;
using uaul::testing::toy_dims;
using uaul::testing::ToySequence;

namespace {
VocabDistribution dist(std::vector<double> p) { return VocabDistribution{std::move(p)}; }

VocabDistribution random_dist(Rng& rng, std::size_t v) {
  std::vector<double> z(v);
  for (double& x : z) x = 2.0 * rng.normal();
  kernels::softmax_inplace(z);
  return dist(z);
}

HeadObjective only(bool mle, bool mul, bool me, bool ul) {
  HeadObjective o;
  o.uncertainty = {3, 0.3};
  o.use_mle = mle;
  o.use_mul = mul;
  o.use_me = me;
  o.use_ul = ul;
  return o;
}
}  // namespace

TEST_CASE("MUL on the worked sample sets") {
  const std::vector<double> p{0.8, 0.2, 0.2}, n{0.7, 0.6};
  // log(1 + e^-0.1 + e^-0.2 + 2e^0.5 + 2e^0.4), evaluated by hand.
  const double expected = 2.1977422330845533;
  CHECK(mul_timestep(p, n, {1.0, 0.0}).value == doctest::Approx(expected).epsilon(1e-12));
  const std::vector<SampleSets> steps{{p, {{0.7, 1, 1}, {0.6, 1, 2}}}};
  CHECK(std::abs(mul_loss(steps, {1.0, 0.0}) - expected) < 1e-6);
}

TEST_CASE("MUL with no negatives is zero") {
  const std::vector<SampleSets> steps{{{0.9, 0.8}, {}}, {{0.5}, {}}};
  CHECK(mul_loss(steps, {10.0, -0.6}) == 0.0);
}

TEST_CASE("MUL gradient matches differences") {
  const std::vector<double> p{0.8, 0.2, 0.25}, n{0.7, 0.6};
  const MulConfig cfg{10.0, -0.3};
  const auto t = mul_timestep(p, n, cfg);
  const double h = 1e-6;
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto up = p, dn = p;
    up[k] += h;
    dn[k] -= h;
    const double fd = (mul_timestep(up, n, cfg).value - mul_timestep(dn, n, cfg).value) / (2 * h);
    CHECK(t.d_positive[k] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t l = 0; l < n.size(); ++l) {
    auto up = n, dn = n;
    up[l] += h;
    dn[l] -= h;
    const double fd = (mul_timestep(p, up, cfg).value - mul_timestep(p, dn, cfg).value) / (2 * h);
    CHECK(t.d_negative[l] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("MUL stays finite for large alpha") {
  const std::vector<double> p{0.0}, n{1.0};
  const auto t = mul_timestep(p, n, {1000.0, 0.0});
  CHECK(std::isfinite(t.value));
  CHECK(t.value == doctest::Approx(1000.0));
}

TEST_CASE("a worse pair gives a larger MUL at alpha 10") {
  const MulConfig cfg{10.0, -0.6};
  const std::vector<double> p{0.8, 0.3, 0.2};
  const std::vector<double> mild{0.5, 0.4}, worse{0.5, 0.7};
  CHECK(mul_timestep(p, worse, cfg).value > mul_timestep(p, mild, cfg).value);
  const std::vector<double> p_worse{0.8, 0.3, 0.05};
  CHECK(mul_timestep(p_worse, mild, cfg).value > mul_timestep(p, mild, cfg).value);
}

TEST_CASE("likelihood term") {
  const auto d = dist({0.1, 0.6, 0.3});
  const std::vector<int> gold{1, 2};
  const std::vector<std::vector<VocabDistribution>> same{{d, d, d}, {d, d, d}};
  CHECK(mle_loss(same, gold) == doctest::Approx(-std::log(0.6) - std::log(0.3)));
  const std::vector<std::vector<VocabDistribution>> onehot{{dist({0, 1, 0})}, {dist({0, 0, 1})}};
  CHECK(mle_loss(onehot, gold) == 0.0);

  Rng rng(4);
  std::vector<std::vector<VocabDistribution>> ds(6);
  std::vector<int> y(6);
  for (std::size_t t = 0; t < 6; ++t) {
    y[t] = static_cast<int>(rng.below(9));
    for (int i = 0; i < 4; ++i) ds[t].push_back(random_dist(rng, 9));
  }
  double oracle = 0;
  for (std::size_t t = 0; t < 6; ++t)
    for (int i = 0; i < 4; ++i) oracle -= std::log(ds[t][i][y[t]]) / 4.0;
  CHECK(std::abs(mle_loss(ds, y) - oracle) < 1e-10);
}

TEST_CASE("entropy term") {
  const std::vector<std::vector<VocabDistribution>> onehot{{dist({0, 1, 0}), dist({1, 0, 0})}};
  CHECK(me_loss(onehot) == 0.0);
  const std::size_t v = 7;
  const auto u = dist(std::vector<double>(v, 1.0 / v));
  const std::vector<std::vector<VocabDistribution>> uni{{u, u, u}, {u, u, u}};
  CHECK(me_loss(uni) == doctest::Approx(6 * std::log(7.0)));
  CHECK(me_loss(uni, true) == doctest::Approx(2 * std::log(7.0)));
}

TEST_CASE("unlikelihood term") {
  const std::vector<VocabDistribution> d{dist({0.5, 0.0, 0.5}), dist({0.2, 0.3, 0.5})};
  const std::vector<std::vector<int>> neg{{1}, {2, 0}};
  CHECK(ul_loss(d, neg) == doctest::Approx(-std::log(0.5) - std::log(0.8)));
  const std::vector<VocabDistribution> sure{dist({1.0, 0.0})};
  const std::vector<std::vector<int>> bad{{0}};
  CHECK(ul_loss(sure, bad) == doctest::Approx(-std::log(1e-12)));

  Rng rng(6);
  std::vector<VocabDistribution> ds;
  std::vector<std::vector<int>> ns;
  double oracle = 0;
  for (int t = 0; t < 5; ++t) {
    ds.push_back(random_dist(rng, 8));
    ns.push_back({static_cast<int>(rng.below(8)), static_cast<int>(rng.below(8))});
    if (ns.back()[0] == ns.back()[1]) ns.back().pop_back();
    for (int c : ns.back()) oracle -= std::log(1.0 - ds.back()[c]);
  }
  CHECK(std::abs(ul_loss(ds, ns) - oracle) < 1e-10);
}

TEST_CASE("bundle") {
  const auto b = combine(1.5, 0.25, 2.0, 0.0);
  CHECK(b.joint == 1.5 + 0.25 + 2.0);
  CHECK(combine(0, 0, 0, 0) == LossBundle{});

  // all-correct one-hot distributions, no negatives
  const std::vector<std::vector<VocabDistribution>> d{{dist({0, 1})}, {dist({1, 0})}};
  const std::vector<int> y{1, 0};
  const std::vector<SampleSets> s{sampling::acquire_samples(d[0], 1), sampling::acquire_samples(d[1], 0)};
  CHECK(combine(mle_loss(d, y), mul_loss(s, {}), me_loss(d)) == LossBundle{});
}

TEST_CASE("fused head agrees with the standalone terms") {
  const auto params = model::ModelParams::initialize(toy_dims(), 12);
  ToySequence seq;
  ad::Tape tape;
  const auto bound = model::bind(tape, params, nullptr);
  const auto hv = model::encode_decode(tape, params, bound, seq.source, seq.input);
  const Tensor h = tape.value(hv);

  HeadObjective obj = only(true, true, true, false);
  obj.uncertainty = {4, 0.4};
  Rng fused_rng(77);
  const auto fused = uaul_head(tape, hv, bound[params.layout().head], seq.targets, obj, fused_rng);

  Rng rng(77);
  std::vector<std::vector<VocabDistribution>> dists;
  std::vector<SampleSets> samples;
  for (std::size_t t = 0; t < h.rows(); ++t) {
    dists.push_back(sampling::mc_distributions(params, h.row(t), obj.uncertainty, rng));
    samples.push_back(sampling::acquire_samples(dists.back(), seq.targets[t]));
  }
  CHECK(fused.samples.size() == samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) {
    CHECK(fused.samples[t].positives.size() == samples[t].positives.size());
    CHECK(fused.samples[t].negatives.size() == samples[t].negatives.size());
    for (std::size_t k = 0; k < samples[t].positives.size(); ++k)
      CHECK(fused.samples[t].positives[k] == doctest::Approx(samples[t].positives[k]).epsilon(1e-12));
  }
  CHECK(fused.terms.mle == doctest::Approx(mle_loss(dists, seq.targets)).epsilon(1e-10));
  CHECK(fused.terms.mul == doctest::Approx(mul_loss(samples, obj.mul)).epsilon(1e-10));
  CHECK(fused.terms.me == doctest::Approx(me_loss(dists)).epsilon(1e-10));
  CHECK(fused.terms.joint == fused.terms.mle + fused.terms.mul + fused.terms.me + fused.terms.ul);
  CHECK(fused.distributions_per_step == 4);
}

TEST_CASE("UL head term equals the standalone loss averaged over the K distributions") {
  const auto params = model::ModelParams::initialize(toy_dims(), 13);
  ToySequence seq;
  ad::Tape tape;
  const auto bound = model::bind(tape, params, nullptr);
  const auto hv = model::encode_decode(tape, params, bound, seq.source, seq.input);
  const Tensor h = tape.value(hv);
  const HeadObjective obj = only(true, false, false, true);
  Rng fused_rng(5);
  const auto fused = uaul_head(tape, hv, bound[params.layout().head], seq.targets, obj, fused_rng);

  Rng rng(5);
  const std::size_t k = obj.uncertainty.k;
  std::vector<std::vector<VocabDistribution>> per_sample(k);
  std::vector<std::vector<int>> toks;
  for (std::size_t t = 0; t < h.rows(); ++t) {
    const auto d = sampling::mc_distributions(params, h.row(t), obj.uncertainty, rng);
    toks.emplace_back();
    for (const auto& n : sampling::acquire_samples(d, seq.targets[t]).negatives)
      if (std::find(toks.back().begin(), toks.back().end(), n.token) == toks.back().end())
        toks.back().push_back(n.token);
    for (std::size_t i = 0; i < k; ++i) per_sample[i].push_back(d[i]);
  }
  double expected = 0;
  for (const auto& d : per_sample) expected += ul_loss(d, toks) / static_cast<double>(k);
  CHECK(fused.terms.ul > 0.0);
  CHECK(fused.terms.ul == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("every term passes finite differences through the toy model") {
  const auto params = model::ModelParams::initialize(toy_dims(), 21);
  ToySequence seq;
  struct Case {
    const char* name;
    HeadObjective obj;
  };
  HeadObjective mle_plain = only(true, false, false, false);
  mle_plain.use_mc = false;
  std::vector<Case> cases{{"mle", only(true, false, false, false)},
                          {"mle without dropout", mle_plain},
                          {"mul", only(false, true, false, false)},
                          {"me", only(false, false, true, false)},
                          {"ul", only(false, false, false, true)},
                          {"joint", only(true, true, true, false)}};
  for (auto& c : cases) {
    c.obj.mul = {10.0, -0.3};
    auto grads = params.zeros_like();
    LossBundle terms;
    head_loss(params, seq, c.obj, 31, &grads, &terms);
    const auto rep = uaul::testing::probe_gradients(
        params, grads,
        [&](const model::ModelParams& p) { return head_loss(p, seq, c.obj, 31, nullptr); }, 99);
    INFO(c.name << " max relative error " << rep.max_rel);
    CHECK(rep.probes == 10);
    CHECK(rep.max_rel < 1e-4);
    if (c.obj.use_mul) CHECK(terms.mul > 0.0);
    if (c.obj.use_ul) CHECK(terms.ul > 0.0);
  }
}

TEST_CASE("single undropped distribution reproduces plain cross entropy bit for bit") {
  const auto params = model::ModelParams::initialize(toy_dims(), 22);
  ToySequence seq;
  auto run = [&](bool fused, model::ParamGrads& g) {
    ad::Tape tape;
    const auto bound = model::bind(tape, params, &g);
    const auto h = model::encode_decode(tape, params, bound, seq.source, seq.input);
    ad::Var loss;
    if (fused) {
      HeadObjective o = only(true, false, false, false);
      o.uncertainty = {1, 0.0};
      Rng rng(1);
      loss = uaul_head(tape, h, bound[params.layout().head], seq.targets, o, rng).loss;
    } else {
      loss = mle_head(tape, h, bound[params.layout().head], seq.targets);
    }
    tape.backward(loss);
    return tape.value(loss)[0];
  };
  auto ga = params.zeros_like(), gb = params.zeros_like();
  CHECK(run(true, ga) == run(false, gb));
  CHECK(ga == gb);
}

TEST_CASE("descending on the entropy term alone lowers entropy monotonically") {
  auto params = model::ModelParams::initialize(toy_dims(), 23);
  ToySequence seq;
  HeadObjective o = only(false, false, true, false);
  o.use_mc = false;
  double prev = 0;
  for (int step = 0; step < 50; ++step) {
    auto g = params.zeros_like();
    LossBundle terms;
    head_loss(params, seq, o, 0, &g, &terms);
    if (step > 0) CHECK(terms.me < prev + 1e-9);
    prev = terms.me;
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t j = 0; j < params[p].size(); ++j) params[p][j] -= 0.01 * g[p][j];
  }
}
