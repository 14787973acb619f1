#include "uaul/autograd.hpp"

#include <cmath>
#include <string>

#include "uaul/kernels.hpp"

namespace uaul::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::param(const Tensor& value, Tensor* grad) {
  if (grad != nullptr && !grad->same_shape(value)) {
    throw std::invalid_argument("Tape::param: gradient buffer shape " + grad->shape_string() +
                                " differs from value " + value.shape_string());
  }
  nodes_.push_back(Node{{}, &value, grad, {}, grad != nullptr, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, requires_grad,
                        requires_grad ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ext_value != nullptr ? *n.ext_value : n.value;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.ext_grad != nullptr) return *n.ext_grad;
  if (n.grad.empty()) {
    const Tensor& val = value(v);
    n.grad = Tensor(val.rows(), val.cols());
  }
  return n.grad;
}

bool Tape::has_grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ext_grad != nullptr || !n.grad.empty();
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar, got " + lv.shape_string());
  }
  if (!std::isfinite(lv[0])) {
    throw NonFiniteLoss("non-finite loss value " + std::to_string(lv[0]));
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

namespace {

bool any_grad(const Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Tensor out;
  kernels::gemm_nn(t.value(a), t.value(b), out);
  return t.record(std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) kernels::gemm_nt(g, tp.value(b), tp.grad(a), true);
    if (tp.requires_grad(b)) kernels::gemm_tn(tp.value(a), g, tp.grad(b), true);
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Tensor out;
  kernels::gemm_nt(t.value(a), t.value(b), out);
  return t.record(std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) kernels::gemm_nn(g, tp.value(b), tp.grad(a), true);
    if (tp.requires_grad(b)) kernels::gemm_tn(g, tp.value(a), tp.grad(b), true);
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return t.record(std::move(out), any_grad(t, {a, b}), [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    for (Var in : {a, b}) {
      if (!tp.requires_grad(in)) continue;
      Tensor& gi = tp.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var add_row(Tape& t, Var a, Var bias) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(bias);
  if (vb.rows() != 1 || vb.cols() != va.cols()) throw std::invalid_argument("add_row: bias shape");
  Tensor out = va;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vb[c];
  return t.record(std::move(out), any_grad(t, {a, bias}), [a, bias](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(bias)) {
      Tensor& gb = tp.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var add_const(Tape& t, Var a, const Tensor& c) {
  const Tensor& va = t.value(a);
  if (!va.same_shape(c)) throw std::invalid_argument("add_const: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  for (double& x : out.values()) x *= s;
  return t.record(std::move(out), t.requires_grad(a), [a, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

Var relu(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    const Tensor& x = tp.value(a);
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Tensor& vx = t.value(x);
  const Tensor& vg = t.value(gamma);
  const Tensor& vb = t.value(beta);
  const std::size_t n = vx.rows(), d = vx.cols();
  if (vg.size() != d || vb.size() != d) throw std::invalid_argument("layer_norm: affine shape");
  Tensor out(n, d);
  std::vector<double> rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    rstd[r] = kernels::layer_norm_row(vx.row(r), vg.row(0), vb.row(0), out.row(r), eps);
  }
  return t.record(std::move(out), any_grad(t, {x, gamma, beta}),
                  [x, gamma, beta, rstd = std::move(rstd)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(Var{self});
                    const Tensor& vx = tp.value(x);
                    const Tensor& vg = tp.value(gamma);
                    const std::size_t n = vx.rows(), d = vx.cols();
                    std::vector<double> xhat(d), dxhat(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      double mean = 0.0;
                      for (std::size_t j = 0; j < d; ++j) mean += vx(r, j);
                      mean /= static_cast<double>(d);
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        xhat[j] = (vx(r, j) - mean) * rstd[r];
                        dxhat[j] = g(r, j) * vg[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[j];
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      if (tp.requires_grad(x)) {
                        Tensor& gx = tp.grad(x);
                        for (std::size_t j = 0; j < d; ++j)
                          gx(r, j) += rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                      }
                      if (tp.requires_grad(gamma)) {
                        Tensor& gg = tp.grad(gamma);
                        for (std::size_t j = 0; j < d; ++j) gg[j] += g(r, j) * xhat[j];
                      }
                      if (tp.requires_grad(beta)) {
                        Tensor& gb = tp.grad(beta);
                        for (std::size_t j = 0; j < d; ++j) gb[j] += g(r, j);
                      }
                    }
                  });
}

Var embed(Tape& t, Var table, std::span<const int> ids) {
  const Tensor& tab = t.value(table);
  Tensor out(ids.size(), tab.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tab.rows()) {
      throw std::out_of_range("embed: token id " + std::to_string(ids[r]) +
                              " outside vocabulary of size " + std::to_string(tab.rows()));
    }
    const auto src = tab.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return t.record(std::move(out), t.requires_grad(table),
                  [table, idv = std::move(idv)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(Var{self});
                    Tensor& gt = tp.grad(table);
                    for (std::size_t r = 0; r < idv.size(); ++r) {
                      auto dst = gt.row(static_cast<std::size_t>(idv[r]));
                      const auto src = g.row(r);
                      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, bool causal) {
  const Tensor& vq = t.value(q);
  const Tensor& vk = t.value(k);
  const Tensor& vv = t.value(v);
  const std::size_t n = vq.rows(), m = vk.rows(), d = vq.cols();
  if (vk.cols() != d || vv.cols() != d || vv.rows() != m || heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention: incompatible shapes");
  }
  if (causal && m < n) throw std::invalid_argument("attention: causal needs keys for every query");
  Tensor out(n, d);
  // probs(r, h*m + j): weight of key j for query r in head h.
  Tensor probs(n, heads * m);
  std::vector<double> tmp(heads * m);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t len = causal ? r + 1 : m;
    kernels::attention_row(vq.row(r), vk, vv, len, heads, out.row(r),
                           std::span<double>(tmp.data(), heads * len));
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < len; ++j) probs(r, h * m + j) = tmp[h * len + j];
  }
  return t.record(
      std::move(out), any_grad(t, {q, k, v}),
      [q, k, v, heads, causal, probs = std::move(probs)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(Var{self});
        const Tensor& vq = tp.value(q);
        const Tensor& vk = tp.value(k);
        const Tensor& vv = tp.value(v);
        const std::size_t n = vq.rows(), m = vk.rows(), d = vq.cols(), dh = d / heads;
        const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
        Tensor* gq = tp.requires_grad(q) ? &tp.grad(q) : nullptr;
        Tensor* gk = tp.requires_grad(k) ? &tp.grad(k) : nullptr;
        Tensor* gv = tp.requires_grad(v) ? &tp.grad(v) : nullptr;
        std::vector<double> dp(m);
        for (std::size_t r = 0; r < n; ++r) {
          const std::size_t len = causal ? r + 1 : m;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            const double* pr = probs.row(r).data() + h * m;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += g(r, off + c) * vv(j, off + c);
              dp[j] = s;
              dot += s * pr[j];
            }
            for (std::size_t j = 0; j < len; ++j) {
              if (gv != nullptr)
                for (std::size_t c = 0; c < dh; ++c) (*gv)(j, off + c) += pr[j] * g(r, off + c);
              const double ds = pr[j] * (dp[j] - dot) * sc;
              if (gq != nullptr)
                for (std::size_t c = 0; c < dh; ++c) (*gq)(r, off + c) += ds * vk(j, off + c);
              if (gk != nullptr)
                for (std::size_t c = 0; c < dh; ++c) (*gk)(j, off + c) += ds * vq(r, off + c);
            }
          }
        }
      });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double x : t.value(a).values()) s += x;
  return t.record(Tensor(1, 1, s), t.requires_grad(a), [a](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{self})[0];
    for (double& x : tp.grad(a).values()) x += g;
  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const int> targets) {
  const Tensor& z = t.value(logits);
  if (targets.size() != z.rows()) throw std::invalid_argument("cross_entropy: target count");
  const double floor_log = std::log(kLogEpsilon);
  Tensor probs = z;
  std::vector<char> live(z.rows(), 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto y = static_cast<std::size_t>(targets[r]);
    if (targets[r] < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy: target id");
    double logp = z(r, y) - kernels::log_sum_exp(z.row(r));
    if (logp < floor_log) {
      logp = floor_log;
      live[r] = 0;
    }
    loss -= logp;
    kernels::softmax_inplace(probs.row(r));
  }
  std::vector<int> tv(targets.begin(), targets.end());
  return t.record(Tensor(1, 1, loss), t.requires_grad(logits),
                  [logits, tv = std::move(tv), probs = std::move(probs), live = std::move(live)](
                      Tape& tp, std::size_t self) {
                    const double g = tp.grad(Var{self})[0];
                    Tensor& gz = tp.grad(logits);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      if (!live[r]) continue;
                      const auto y = static_cast<std::size_t>(tv[r]);
                      for (std::size_t c = 0; c < probs.cols(); ++c)
                        gz(r, c) += (probs(r, c) - (c == y ? 1.0 : 0.0)) * g;
                    }
                  });
}

}  // namespace uaul::ad
