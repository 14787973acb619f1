#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "uaul/autograd.hpp"
#include "uaul/objectives.hpp"
#include "uaul/rng.hpp"
#include "uaul/seq2seq.hpp"

namespace uaul::testing {

inline model::ModelDims toy_dims() {
  model::ModelDims d;
  d.vocab = 14;
  d.d_model = 8;
  d.heads = 2;
  d.layers = 1;
  d.ff = 12;
  return d;
}

struct ToySequence {
  std::vector<int> source{9, 10, 11, 12, 13};
  std::vector<int> input{1, 5, 9, 6, 10};
  std::vector<int> targets{5, 9, 6, 10, 2};
};

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double s = 1.0) {
  Tensor t(r, c);
  for (double& x : t.values()) x = s * rng.normal();
  return t;
}

/// Loss of the toy seq2seq model under `obj`; fills `grads` when given.
inline double head_loss(const model::ModelParams& params, const ToySequence& seq,
                        const objectives::HeadObjective& obj, std::uint64_t mask_seed,
                        model::ParamGrads* grads, objectives::LossBundle* terms = nullptr) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, grads);
  const auto h = model::encode_decode(tape, params, bound, seq.source, seq.input);
  Rng rng(mask_seed);
  const auto res =
      objectives::uaul_head(tape, h, bound[params.layout().head], seq.targets, obj, rng);
  if (terms != nullptr) *terms = res.terms;
  if (grads != nullptr) tape.backward(res.loss);
  return tape.value(res.loss)[0];
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

struct ProbeReport {
  double max_rel = 0.0;
  int probes = 0;
};

/// Central differences with step 1e-4 at `count` random parameter entries.
/// Entries whose analytic gradient is below 1e-7 are skipped and redrawn:
/// their relative error is pure rounding.
inline ProbeReport probe_gradients(model::ModelParams params, const model::ParamGrads& analytic,
                                   const std::function<double(const model::ModelParams&)>& f,
                                   std::uint64_t seed, int count = 10) {
  const double step = 1e-4;
  Rng rng(seed);
  ProbeReport rep;
  int attempts = 0;
  while (rep.probes < count && attempts < 10000) {
    ++attempts;
    const auto p = static_cast<std::size_t>(rng.below(params.size()));
    const auto j = static_cast<std::size_t>(rng.below(params[p].size()));
    const double a = analytic[p][j];
    if (std::abs(a) < 1e-7) continue;
    const double saved = params[p][j];
    params[p][j] = saved + step;
    const double up = f(params);
    params[p][j] = saved - step;
    const double down = f(params);
    params[p][j] = saved;
    rep.max_rel = std::max(rep.max_rel, rel_error(a, (up - down) / (2 * step)));
    ++rep.probes;
  }
  return rep;
}

}  // namespace uaul::testing

#include "uaul/template_codec.hpp"

namespace uaul::testing {

/// Random quad lists inside the round-trip domain: normalized multi-word
/// terms, no template keywords in opinions, no term equal to an implicit
/// surface word. Aspect terms may contain "is" to exercise the tail rule.
inline std::vector<codec::AspectQuad> random_quads(Rng& rng) {
  static const std::vector<std::string> words{
      "food", "Service", "pizza", "wine", "battery", "screen", "the", "staff", "very", "hot",
      "dessert", "keyboard", "BIG", "room", "price", "menu", "sushi", "ambience", "tab", "x2"};
  static const std::vector<std::string> entities{"food", "service", "drinks", "laptop",
                                                 "restaurant", "display"};
  static const std::vector<std::string> attrs{"quality", "general", "prices", "style_options",
                                              "operation_performance"};
  auto phrase = [&](bool allow_is) {
    std::string s;
    const auto len = 1 + rng.below(3);
    for (std::uint64_t i = 0; i < len; ++i) {
      if (!s.empty()) s += ' ';
      s += (allow_is && i > 0 && rng.bernoulli(0.2)) ? "is" : words[rng.below(words.size())];
    }
    return s;
  };
  std::vector<codec::AspectQuad> out(1 + rng.below(4));
  for (auto& q : out) {
    if (!rng.bernoulli(0.2)) q.aspect = phrase(true);
    if (!rng.bernoulli(0.2)) q.opinion = phrase(false);
    q.category = entities[rng.below(entities.size())] + "#" + attrs[rng.below(attrs.size())];
    q.sentiment = static_cast<codec::Sentiment>(rng.below(3));
  }
  return out;
}

}  // namespace uaul::testing
