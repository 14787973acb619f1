#include "uaul/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uaul::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 16;

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void prepare(Tensor& c, std::size_t m, std::size_t n, bool accumulate) {
  if (accumulate) {
    check(c.rows() == m && c.cols() == n, "gemm: accumulate target has wrong shape");
  } else if (c.rows() != m || c.cols() != n) {
    c = Tensor(m, n);
  } else {
    c.fill(0.0);
  }
}

bool go_parallel(Exec exec, std::size_t work) {
#ifdef _OPENMP
  return exec == Exec::parallel && work >= kParallelWork && !omp_in_parallel() &&
         omp_get_max_threads() > 1;
#else
  (void)exec;
  (void)work;
  return false;
#endif
}

}  // namespace

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate, Exec exec) {
  check(a.cols() == b.rows(), "gemm_nn: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  prepare(c, m, n, accumulate);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (long i = 0; i < rows; ++i) {
    double* ci = pc + static_cast<std::size_t>(i) * n;
    const double* ai = pa + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate, Exec exec) {
  check(a.cols() == b.cols(), "gemm_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  prepare(c, m, n, accumulate);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (long i = 0; i < rows; ++i) {
    const double* ai = pa + static_cast<std::size_t>(i) * k;
    double* ci = pc + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = pb + j * k;
      double acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate, Exec exec) {
  check(a.rows() == b.rows(), "gemm_tn: inner dimensions differ");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  prepare(c, m, n, accumulate);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (go_parallel(exec, m * n * k))
  for (long i = 0; i < rows; ++i) {
    double* ci = pc + static_cast<std::size_t>(i) * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[p * m + static_cast<std::size_t>(i)];
      if (av == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

double layer_norm_row(std::span<const double> in, std::span<const double> gamma,
                      std::span<const double> beta, std::span<double> out, double eps) {
  const std::size_t d = in.size();
  double mean = 0.0;
  for (double x : in) mean += x;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double x : in) var += (x - mean) * (x - mean);
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < d; ++j) out[j] = (in[j] - mean) * rstd * gamma[j] + beta[j];
  return rstd;
}

void attention_row(std::span<const double> query, const Tensor& keys, const Tensor& values,
                   std::size_t len, std::size_t heads, std::span<double> out,
                   std::span<double> probs) {
  const std::size_t d = query.size();
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> w(len);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t j = 0; j < len; ++j) {
      const double* kj = keys.data() + j * d + off;
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += query[off + c] * kj[c];
      w[j] = s * scale;
    }
    softmax_inplace(w);
    for (std::size_t c = 0; c < dh; ++c) out[off + c] = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double* vj = values.data() + j * d + off;
      for (std::size_t c = 0; c < dh; ++c) out[off + c] += w[j] * vj[c];
    }
    if (!probs.empty()) std::copy(w.begin(), w.end(), probs.begin() + static_cast<long>(h * len));
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace reference {

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.cols() == b.rows(), "gemm_nn: inner dimensions differ");
  prepare(c, a.rows(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = c(i, j);
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.cols() == b.cols(), "gemm_nt: inner dimensions differ");
  prepare(c, a.rows(), b.rows(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = c(i, j);
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
      c(i, j) = acc;
    }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.rows() == b.rows(), "gemm_tn: inner dimensions differ");
  prepare(c, a.cols(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = c(i, j);
      for (std::size_t p = 0; p < a.rows(); ++p) {
        if (a(p, i) == 0.0) continue;
        acc += a(p, i) * b(p, j);
      }
      c(i, j) = acc;
    }
}

}  // namespace reference
}  // namespace uaul::kernels
