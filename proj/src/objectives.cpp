#include "uaul/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uaul/kernels.hpp"

namespace uaul::objectives {
namespace {

double safe_log(double x) { return std::log(std::max(x, ad::kLogEpsilon)); }

void check_gold(int y, std::size_t vocab) {
  if (y < 0 || static_cast<std::size_t>(y) >= vocab) {
    throw std::out_of_range("gold token id " + std::to_string(y) + " outside vocabulary");
  }
}

}  // namespace

void MulConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("MUL scale alpha must be positive");
  if (!std::isfinite(margin)) throw std::invalid_argument("MUL margin must be finite");
}

LossBundle combine(double mle, double mul, double me, double ul) {
  LossBundle b{mle, mul, me, ul, 0.0};
  b.joint = mle + mul + me + ul;
  return b;
}

MulTerm mul_timestep(std::span<const double> positives, std::span<const double> negatives,
                     const MulConfig& cfg) {
  MulTerm out;
  out.d_positive.assign(positives.size(), 0.0);
  out.d_negative.assign(negatives.size(), 0.0);
  if (positives.empty() || negatives.empty()) return out;
  const std::size_t np = positives.size(), nn = negatives.size();
  std::vector<double> a(np * nn);
  double mx = 0.0;  // the exp(0) term
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t l = 0; l < nn; ++l) {
      a[k * nn + l] = cfg.alpha * (negatives[l] - positives[k] + cfg.margin);
      mx = std::max(mx, a[k * nn + l]);
    }
  double s = std::exp(-mx);
  for (double v : a) s += std::exp(v - mx);
  out.value = mx + std::log(s);
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t l = 0; l < nn; ++l) {
      const double w = std::exp(a[k * nn + l] - out.value);
      out.d_negative[l] += cfg.alpha * w;
      out.d_positive[k] -= cfg.alpha * w;
    }
  return out;
}

double mul_loss(std::span<const SampleSets> steps, const MulConfig& cfg) {
  double total = 0.0;
  std::vector<double> neg;
  for (const auto& s : steps) {
    neg.clear();
    for (const auto& n : s.negatives) neg.push_back(n.prob);
    total += mul_timestep(s.positives, neg, cfg).value;
  }
  return total;
}

double mle_loss(const std::vector<std::vector<VocabDistribution>>& dists,
                std::span<const int> gold) {
  if (dists.size() != gold.size()) throw std::invalid_argument("mle_loss: step count mismatch");
  if (dists.empty()) return 0.0;
  const std::size_t k = dists.front().size();
  double total = 0.0;
  for (std::size_t t = 0; t < dists.size(); ++t) {
    if (dists[t].size() != k) throw std::invalid_argument("mle_loss: ragged sample count");
    for (const auto& d : dists[t]) {
      check_gold(gold[t], d.size());
      total -= safe_log(d[static_cast<std::size_t>(gold[t])]);
    }
  }
  return total / static_cast<double>(k);
}

double me_loss(const std::vector<std::vector<VocabDistribution>>& dists, bool normalize_by_k) {
  double total = 0.0;
  std::size_t k = 0;
  for (const auto& step : dists) {
    k = std::max(k, step.size());
    for (const auto& d : step)
      for (double p : d.probs)
        if (p > 0.0) total -= p * safe_log(p);
  }
  return normalize_by_k && k > 0 ? total / static_cast<double>(k) : total;
}

double ul_loss(std::span<const VocabDistribution> dists,
               std::span<const std::vector<int>> negatives) {
  if (dists.size() != negatives.size()) throw std::invalid_argument("ul_loss: step count mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < dists.size(); ++t)
    for (int c : negatives[t]) {
      check_gold(c, dists[t].size());
      total -= safe_log(1.0 - dists[t][static_cast<std::size_t>(c)]);
    }
  return total;
}

// ---------------------------------------------------------------------------

void HeadObjective::validate() const {
  uncertainty.validate();
  mul.validate();
  if ((strategy == NegativeStrategy::top_k || strategy == NegativeStrategy::top_p) && use_mc) {
    throw std::invalid_argument("top-k/top-p negative sampling requires use_mc = false");
  }
  if (strategy == NegativeStrategy::top_k && top_k < 1) {
    throw std::invalid_argument("top-k negative sampling needs k >= 1");
  }
  if (strategy == NegativeStrategy::top_p && !(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("top-p negative sampling needs p in (0, 1]");
  }
}

ad::Var mle_head(ad::Tape& tape, ad::Var hidden, ad::Var head, std::span<const int> targets) {
  return ad::cross_entropy(tape, ad::matmul(tape, hidden, head), targets);
}

HeadResult uaul_head(ad::Tape& tape, ad::Var hidden, ad::Var head, std::span<const int> targets,
                     const HeadObjective& obj, Rng& rng) {
  obj.validate();
  const Tensor& h = tape.value(hidden);
  const Tensor& w = tape.value(head);
  const std::size_t n = h.rows(), d = h.cols(), vocab = w.cols();
  if (w.rows() != d) throw std::invalid_argument("uaul_head: head matrix shape");
  if (targets.size() != n) throw std::invalid_argument("uaul_head: one target per hidden row");
  for (int y : targets) check_gold(y, vocab);

  const std::size_t kk = obj.distributions_per_step();
  const double p = obj.use_mc ? obj.uncertainty.dropout : 0.0;
  const double scale = 1.0 / (1.0 - p);
  const std::size_t rows = n * kk;

  // Row r = t * kk + i.
  Tensor hm(rows, d);
  std::vector<std::uint8_t> keep(rows * d, 1);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < kk; ++i) {
      const std::size_t r = t * kk + i;
      if (obj.use_mc) {
        const auto mask = sampling::sample_mask(d, p, rng);
        std::copy(mask.keep.begin(), mask.keep.end(), keep.begin() + static_cast<long>(r * d));
      }
      for (std::size_t j = 0; j < d; ++j) hm(r, j) = keep[r * d + j] ? h(t, j) * scale : 0.0;
    }
  if (!obj.use_mc) keep.clear();

  Tensor z;
  kernels::gemm_nn(hm, w, z);

  const double floor_log = std::log(ad::kLogEpsilon);
  Tensor probs = z;
  std::vector<char> live(rows, 1);
  double mle_sum = 0.0;
  std::vector<VocabDistribution> dists(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto y = static_cast<std::size_t>(targets[r / kk]);
    double logp = z(r, y) - kernels::log_sum_exp(z.row(r));
    if (logp < floor_log) {
      logp = floor_log;
      live[r] = 0;
    }
    mle_sum -= logp;
    kernels::softmax_inplace(probs.row(r));
    dists[r].probs.assign(probs.row(r).begin(), probs.row(r).end());
  }
  const double mle = mle_sum / static_cast<double>(kk);

  HeadResult result;
  result.distributions_per_step = kk;
  result.samples.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::span<const VocabDistribution> step(dists.data() + t * kk, kk);
    switch (obj.strategy) {
      case NegativeStrategy::uncertainty:
        result.samples.push_back(sampling::acquire_samples(step, targets[t]));
        break;
      case NegativeStrategy::top_k:
        result.samples.push_back(sampling::topk_negatives(step[0], targets[t], obj.top_k));
        break;
      case NegativeStrategy::top_p:
        result.samples.push_back(sampling::topp_negatives(step[0], targets[t], obj.top_p));
        break;
    }
  }

  // Probability-space gradients of the MUL / ME / UL terms.
  const bool prob_terms = obj.use_mul || obj.use_me || obj.use_ul;
  Tensor g;
  if (prob_terms) g = Tensor(rows, vocab);
  double mul = 0.0, me = 0.0, ul = 0.0;
  if (obj.use_mul) {
    std::vector<double> neg;
    for (std::size_t t = 0; t < n; ++t) {
      const auto& s = result.samples[t];
      if (s.negatives.empty()) continue;
      neg.clear();
      for (const auto& x : s.negatives) neg.push_back(x.prob);
      const MulTerm term = mul_timestep(s.positives, neg, obj.mul);
      mul += term.value;
      const auto y = static_cast<std::size_t>(targets[t]);
      for (std::size_t k = 0; k < s.positives.size(); ++k) g(t * kk + k, y) += term.d_positive[k];
      for (std::size_t l = 0; l < s.negatives.size(); ++l)
        g(t * kk + s.negatives[l].source, static_cast<std::size_t>(s.negatives[l].token)) +=
            term.d_negative[l];
    }
  }
  if (obj.use_me) {
    const double f = obj.me_normalize_by_k ? 1.0 / static_cast<double>(kk) : 1.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t v = 0; v < vocab; ++v) {
        const double q = probs(r, v);
        if (q > 0.0) me -= q * safe_log(q);
        g(r, v) -= f * (q > ad::kLogEpsilon ? std::log(q) + 1.0 : std::log(ad::kLogEpsilon));
      }
    }
    me *= f;
  }
  if (obj.use_ul) {
    const double f = 1.0 / static_cast<double>(kk);
    std::vector<int> toks;
    for (std::size_t t = 0; t < n; ++t) {
      toks.clear();
      for (const auto& x : result.samples[t].negatives)
        if (std::find(toks.begin(), toks.end(), x.token) == toks.end()) toks.push_back(x.token);
      for (std::size_t i = 0; i < kk; ++i) {
        const std::size_t r = t * kk + i;
        for (int c : toks) {
          const double rest = 1.0 - probs(r, static_cast<std::size_t>(c));
          ul -= safe_log(rest);
          if (rest > ad::kLogEpsilon) g(r, static_cast<std::size_t>(c)) += f / rest;
        }
      }
    }
    ul *= f;
  }

  result.terms = combine(obj.use_mle ? mle : 0.0, obj.use_mul ? mul : 0.0,
                         obj.use_me ? me : 0.0, obj.use_ul ? ul : 0.0);
  const bool needs = tape.requires_grad(hidden) || tape.requires_grad(head);
  std::vector<int> tv(targets.begin(), targets.end());
  result.loss = tape.record(
      Tensor(1, 1, result.terms.joint), needs,
      [hidden, head, kk, scale, use_mle = obj.use_mle, tv = std::move(tv), hm = std::move(hm),
       keep = std::move(keep), probs = std::move(probs), live = std::move(live),
       g = std::move(g)](ad::Tape& tp, std::size_t self) {
        const double up = tp.grad(ad::Var{self})[0];
        const std::size_t rows = probs.rows(), vocab = probs.cols();
        Tensor dz(rows, vocab);
        const double coef = up / static_cast<double>(kk);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!live[r] || !use_mle) continue;
          const auto y = static_cast<std::size_t>(tv[r / kk]);
          for (std::size_t c = 0; c < vocab; ++c)
            dz(r, c) = (probs(r, c) - (c == y ? 1.0 : 0.0)) * coef;
        }
        if (!g.empty()) {
          for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < vocab; ++c) dot += g(r, c) * probs(r, c);
            for (std::size_t c = 0; c < vocab; ++c)
              dz(r, c) += probs(r, c) * (g(r, c) - dot) * up;
          }
        }
        if (tp.requires_grad(head)) kernels::gemm_tn(hm, dz, tp.grad(head), true);
        if (tp.requires_grad(hidden)) {
          const Tensor& w = tp.value(head);
          Tensor dhm;
          kernels::gemm_nt(dz, w, dhm);
          Tensor& gh = tp.grad(hidden);
          const std::size_t d = gh.cols();
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t t = r / kk;
            for (std::size_t j = 0; j < d; ++j) {
              if (!keep.empty() && !keep[r * d + j]) continue;
              gh(t, j) += keep.empty() ? dhm(r, j) : dhm(r, j) * scale;
            }
          }
        }
      });
  return result;
}

}  // namespace uaul::objectives
