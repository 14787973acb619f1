// Serial reference vs OpenMP kernels, plus one training batch.
// Usage: uaul_bench [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "uaul/corpus.hpp"
#include "uaul/kernels.hpp"
#include "uaul/trainer.hpp"

using namespace uaul;

namespace {

double best_ms(const std::function<void()>& f, int reps = 5) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

Tensor filled(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& x : t.values()) x = rng.normal();
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) kernels::set_threads(std::atoi(argv[1]));
  std::printf("threads %d\n\n", kernels::max_threads());

  Rng rng(1);
  std::printf("%-24s %10s %10s %10s %8s\n", "kernel", "reference", "serial", "parallel", "same");
  for (std::size_t n : {64, 128, 256}) {
    const auto a = filled(n, n, rng), b = filled(n, n, rng);
    Tensor c0(n, n), c1(n, n), c2(n, n);
    const double r = best_ms([&] { kernels::reference::gemm_nn(a, b, c0); });
    const double s = best_ms([&] { kernels::gemm_nn(a, b, c1, false, kernels::Exec::serial); });
    const double p = best_ms([&] { kernels::gemm_nn(a, b, c2, false, kernels::Exec::parallel); });
    char name[32];
    std::snprintf(name, sizeof name, "gemm_nn %zux%zu", n, n);
    std::printf("%-24s %9.2fms %9.2fms %9.2fms %8s\n", name, r, s, p,
                (c0 == c1 && c1 == c2) ? "yes" : "NO");
  }

  corpus::SyntheticSpec spec;
  spec.train = 64;
  spec.dev = spec.test = 1;
  const auto data = corpus::generate_synthetic(spec);
  UaulConfig cfg;
  const auto vocab = corpus::Vocabulary::build(data.train);
  cfg.dims.vocab = vocab.size();
  const auto params = model::ModelParams::initialize(cfg.dims, 3);
  std::vector<train::EncodedExample> enc;
  for (const auto& ex : data.train) enc.push_back(train::encode_example(ex, vocab, cfg.templ));
  std::vector<const train::EncodedExample*> batch;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 16; ++i) {
    batch.push_back(&enc[i]);
    seeds.push_back(i + 1);
  }
  train::BatchResult sr, pr;
  const double s = best_ms([&] { sr = train::batch_gradient(params, batch, cfg, seeds, kernels::Exec::serial); }, 3);
  const double p = best_ms([&] { pr = train::batch_gradient(params, batch, cfg, seeds, kernels::Exec::parallel); }, 3);
  std::printf("%-24s %10s %9.2fms %9.2fms %8s\n", "batch_gradient B=16", "-", s, p,
              (sr.grads == pr.grads && sr.mean == pr.mean) ? "yes" : "NO");
  return 0;
}
