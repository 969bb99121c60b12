// Timing comparison between the serial reference kernels and their OpenMP
// counterparts: dense matmul and the per-set summarization that dominates a
// topological characterization.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "topo/autonet.hpp"
#include "topo/linalg.hpp"
#include "topo/synthdata.hpp"
#include "topo/topofeat.hpp"

using namespace topo;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e9;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void bench_gemm(int m, int k, int n) {
  Rng rng(1);
  Matrix a(m, k), b(k, n), c;
  for (double& v : a.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : b.data) v = rng.uniform(-1.0, 1.0);
  const double serial = time_best_of(3, [&] { gemm_nn_serial(a, b, c); });
  const double parallel = time_best_of(3, [&] { gemm_nn(a, b, c); });
  std::printf("gemm %4dx%4dx%4d   serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n", m, k, n,
              serial * 1e3, parallel * 1e3, serial / parallel);
}

void bench_extract() {
  const DenseNet net = init_net({2, 25, 25, 25, 25, 25, 2}, 7);
  TaskSpec spec;
  spec.gen = Generator::spirals;
  spec.samples_per_split = 600;
  spec.seed = 3;
  const Dataset2D data = generate(spec);
  const ActivationStats stats = forward(net, data.train_x);
  ExtractionConfig cfg;
  cfg.seed = 9;
  const PointSetBundle bundle = build_bundle(net, stats, cfg);
  const FeatureLayout layout = make_layout(net.num_weight_layers(), GMode::both);
  BundleSummary summary;
  const double serial =
      time_best_of(5, [&] { summarize_serial(bundle, layout, summary); });
  const double parallel = time_best_of(5, [&] { summarize(bundle, layout, summary, true); });
  std::printf("summarize fc6/600   serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
              serial * 1e3, parallel * 1e3, serial / parallel);

  const double full = time_best_of(3, [&] {
    const ActivationStats st = forward(net, data.train_x);
    BundleSummary s;
    summarize(build_bundle(net, st, cfg), layout, s, true);
  });
  std::printf("full characterization fc6/600 (forward + build + summarize): %8.3f ms\n",
              full * 1e3);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not enabled; comparing identical serial paths\n");
#endif
  bench_gemm(600, 25, 25);
  bench_gemm(256, 256, 256);
  bench_gemm(512, 512, 512);
  bench_extract();
  return 0;
}
