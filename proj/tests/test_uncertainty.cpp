#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"
#include "uaul/uncertainty.hpp"

using namespace uaul;
using namespace uaul::sampling;

namespace {
VocabDistribution dist(std::vector<double> p) { return VocabDistribution{std::move(p)}; }
}  // namespace

TEST_CASE("worked example: one correct and two confused samples") {
  // token 0 = "food", token 1 = "foods"
  const std::vector<VocabDistribution> d{dist({0.8, 0.1, 0.1}), dist({0.2, 0.7, 0.1}),
                                         dist({0.2, 0.6, 0.2})};
  const auto s = acquire_samples(d, 0);
  CHECK(s.positives == std::vector<double>{0.8, 0.2, 0.2});
  CHECK(s.negatives == std::vector<Negative>{{0.7, 1, 1}, {0.6, 1, 2}});
}

TEST_CASE("all samples correct") {
  const std::vector<VocabDistribution> d(4, dist({0.1, 0.6, 0.3}));
  const auto s = acquire_samples(d, 1);
  CHECK(s.positives.size() == 4);
  CHECK(s.negatives.empty());
}

TEST_CASE("ties go to the lowest id") {
  const std::vector<VocabDistribution> d{dist({0.4, 0.4, 0.2})};
  CHECK(acquire_samples(d, 0).negatives.empty());
  CHECK(acquire_samples(d, 1).negatives == std::vector<Negative>{{0.4, 0, 0}});
}

TEST_CASE("top-k against a hand-sorted distribution") {
  // sorted: 3 (0.4), 1 (0.3), 2 (0.15), 4 (0.1), 0 (0.05)
  const auto d = dist({0.05, 0.3, 0.15, 0.4, 0.1});
  CHECK(rank_tokens(d) == std::vector<int>{3, 1, 2, 4, 0});
  const auto s = topk_negatives(d, 1, 3);
  CHECK(s.positives == std::vector<double>{0.3});
  CHECK(s.negatives == std::vector<Negative>{{0.4, 3, 0}, {0.15, 2, 0}});
  CHECK(topk_negatives(d, 3, 1).negatives.empty());
  CHECK(topk_negatives(d, 1, 10).negatives.size() == 4);
}

TEST_CASE("top-p") {
  const auto d = dist({0.05, 0.3, 0.15, 0.4, 0.1});
  CHECK(topp_negatives(d, 1, 0.5).negatives == std::vector<Negative>{{0.4, 3, 0}});
  CHECK(topp_negatives(d, 1, 0.4).negatives == std::vector<Negative>{{0.4, 3, 0}});
  CHECK(topp_negatives(d, 3, 0.4).negatives.empty());
  const auto all = topp_negatives(d, 1, 1.0);
  CHECK(all.negatives.size() == 4);
  for (const auto& n : all.negatives) CHECK(n.token != 1);
}

TEST_CASE("dropout config validation") {
  UncertaintyConfig c;
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dropout = 0.4;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("masks") {
  Rng rng(1);
  const auto m = sample_mask(20000, 0.4, rng);
  double kept = 0;
  for (auto k : m.keep) kept += k;
  CHECK(kept / 20000.0 == doctest::Approx(0.6).epsilon(0.02));
  const std::vector<double> h{1.0, 2.0, 3.0};
  const DropoutMask small{{1, 0, 1}};
  CHECK(apply_mask(h, small, 0.5) == std::vector<double>{2.0, 0.0, 6.0});
}

TEST_CASE("MC distributions") {
  const auto p = model::ModelParams::initialize(uaul::testing::toy_dims(), 2);
  Rng hr(3);
  std::vector<double> h(8);
  for (double& x : h) x = hr.normal();
  const auto base = model::lm_head(p, h);

  UncertaintyConfig c{5, 0.0};
  Rng r0(9);
  for (const auto& d : mc_distributions(p, h, c, r0)) CHECK(d.probs == base.probs);

  c = {1, 0.0};
  Rng r1(9);
  CHECK(mc_distributions(p, h, c, r1)[0].probs == base.probs);

  c = {5, 0.4};
  Rng a(9), b(9);
  const auto da = mc_distributions(p, h, c, a);
  const auto db = mc_distributions(p, h, c, b);
  REQUIRE(da.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(da[i].probs == db[i].probs);
    CHECK(da[i].valid());
  }
  CHECK(da[0].probs != da[1].probs);
}
