#pragma once

// Dense linear-algebra kernels used by the model and the autograd tape.
//
// Every kernel has two implementations: a straight-line serial reference
// (namespace `reference`) and the production version, which distributes
// output rows across OpenMP threads. Each output element is accumulated in
// the same order by both, so results are bit-identical regardless of the
// thread count.

#include <cstddef>
#include <span>

#include "uaul/tensor.hpp"

namespace uaul::kernels {

enum class Exec { serial, parallel };

// C = beta*C + A * B        A: m x k, B: k x n, C: m x n   (beta is 0 or 1)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false,
             Exec exec = Exec::parallel);
// C = beta*C + A * B^T      A: m x k, B: n x k
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false,
             Exec exec = Exec::parallel);
// C = beta*C + A^T * B      A: k x m, B: k x n
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false,
             Exec exec = Exec::parallel);

/// In-place numerically stable softmax over a span.
void softmax_inplace(std::span<double> v);
/// log(sum(exp(v))) with max-shift.
double log_sum_exp(std::span<const double> v);

/// Layer normalization of one row. Returns the reciprocal standard deviation.
double layer_norm_row(std::span<const double> in, std::span<const double> gamma,
                      std::span<const double> beta, std::span<double> out, double eps);

/// Multi-head scaled dot-product attention for a single query row against the
/// first `len` rows of `keys`/`values` (each d wide, split into `heads`
/// contiguous slices). When `probs` is non-empty it receives the per-head
/// attention weights, laid out heads x len.
void attention_row(std::span<const double> query, const Tensor& keys, const Tensor& values,
                   std::size_t len, std::size_t heads, std::span<double> out,
                   std::span<double> probs = {});

/// Number of threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

namespace reference {
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
}  // namespace reference

}  // namespace uaul::kernels
