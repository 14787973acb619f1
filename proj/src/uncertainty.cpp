#include "uaul/uncertainty.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace uaul::sampling {

void UncertaintyConfig::validate() const {
  if (k < 1) throw std::invalid_argument("MC forward count k must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
}

DropoutMask sample_mask(std::size_t d, double p, Rng& rng) {
  DropoutMask m;
  m.keep.resize(d);
  const double keep_prob = 1.0 - p;
  for (auto& k : m.keep) k = rng.bernoulli(keep_prob) ? 1 : 0;
  return m;
}

std::vector<double> apply_mask(std::span<const double> hidden, const DropoutMask& mask, double p) {
  if (mask.keep.size() != hidden.size()) throw std::invalid_argument("apply_mask: size mismatch");
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> out(hidden.size());
  for (std::size_t j = 0; j < hidden.size(); ++j) out[j] = mask.keep[j] ? hidden[j] * scale : 0.0;
  return out;
}

std::vector<VocabDistribution> mc_distributions(const model::ModelParams& params,
                                                std::span<const double> hidden,
                                                const UncertaintyConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<VocabDistribution> out;
  out.reserve(cfg.k);
  for (std::size_t i = 0; i < cfg.k; ++i) {
    const auto mask = sample_mask(hidden.size(), cfg.dropout, rng);
    out.push_back(model::lm_head(params, apply_mask(hidden, mask, cfg.dropout)));
  }
  return out;
}

SampleSets acquire_samples(std::span<const VocabDistribution> dists, int gold) {
  SampleSets s;
  s.positives.reserve(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const int c = dists[i].argmax();
    if (c != gold) s.negatives.push_back({dists[i][static_cast<std::size_t>(c)], c, i});
    s.positives.push_back(dists[i][static_cast<std::size_t>(gold)]);
  }
  return s;
}

std::vector<int> rank_tokens(const VocabDistribution& dist) {
  std::vector<int> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
  });
  return order;
}

SampleSets topk_negatives(const VocabDistribution& dist, int gold, std::size_t k) {
  if (k < 1) throw std::invalid_argument("top-k needs k >= 1");
  SampleSets s;
  s.positives.push_back(dist[static_cast<std::size_t>(gold)]);
  const auto order = rank_tokens(dist);
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    if (order[r] == gold) continue;
    s.negatives.push_back({dist[static_cast<std::size_t>(order[r])], order[r], 0});
  }
  return s;
}

SampleSets topp_negatives(const VocabDistribution& dist, int gold, double p_cut) {
  if (!(p_cut > 0.0 && p_cut <= 1.0)) throw std::invalid_argument("top-p needs p in (0, 1]");
  SampleSets s;
  s.positives.push_back(dist[static_cast<std::size_t>(gold)]);
  const auto order = rank_tokens(dist);
  double mass = 0.0;
  for (int tok : order) {
    if (p_cut < 1.0 && mass >= p_cut) break;
    const double p = dist[static_cast<std::size_t>(tok)];
    mass += p;
    if (tok != gold) s.negatives.push_back({p, tok, 0});
  }
  return s;
}

}  // namespace uaul::sampling
