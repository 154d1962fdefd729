// Compares the OpenMP kernels against their serial reference
// implementations: GEMM vs the plain triple loop, and im2col+GEMM
// convolution vs the direct nested-loop form.

#include <chrono>
#include <cstdio>
#include <functional>

#include "msinet/kernels.hpp"
#include "msinet/layers.hpp"
#include "msinet/tensor.hpp"

using namespace msinet;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_matmul(int64_t m, int64_t k, int64_t n, int reps) {
  const Tensor a = create({m, k}, InitSpec::uniform(-1, 1, 1));
  const Tensor b = create({k, n}, InitSpec::uniform(-1, 1, 2));
  Tensor c({m, n});

  const double par = time_ms(
      [&] { kernels::matmul_nn(a.data(), b.data(), c.data(), m, k, n); },
      reps);
  const double ser = time_ms(
      [&] { kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n); },
      reps);
  const double gflop = 2.0 * m * k * n / 1e9;
  std::printf("matmul %4lldx%4lldx%4lld  omp %8.2f ms (%5.2f GF/s)  serial %8.2f ms  speedup %.2fx\n",
              (long long)m, (long long)k, (long long)n, par, gflop / par * 1e3,
              ser, ser / par);
}

void bench_conv(int64_t n, int64_t c, int64_t hw, int64_t out_c, int64_t k,
                int64_t stride, int reps) {
  Conv2dSpec spec;
  spec.in_channels = c;
  spec.out_channels = out_c;
  spec.kh = spec.kw = k;
  spec.sh = spec.sw = stride;
  spec.ph = spec.pw = k / 2;
  spec.bias = false;
  const Tensor x = create({n, c, hw, hw}, InitSpec::uniform(-1, 1, 3));
  const Tensor w = create({out_c, c, k, k}, InitSpec::uniform(-1, 1, 4));

  const double fast =
      time_ms([&] { conv2d_forward(x, spec, w); }, reps);
  const double naive = time_ms([&] { conv2d_naive(x, spec, w); }, reps);
  std::printf("conv %lldx%lldx%lldx%lld k%lld s%lld -> %lld ch  im2col %8.2f ms  naive %8.2f ms  speedup %.2fx\n",
              (long long)n, (long long)c, (long long)hw, (long long)hw,
              (long long)k, (long long)stride, (long long)out_c, fast, naive,
              naive / fast);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", kernels::thread_count());
  bench_matmul(256, 256, 256, 5);
  bench_matmul(512, 512, 512, 3);
  bench_matmul(64, 1152, 4096, 3);
  bench_conv(4, 16, 64, 32, 3, 1, 3);
  bench_conv(1, 64, 56, 64, 3, 2, 3);
  bench_conv(8, 3, 64, 16, 3, 1, 3);
  return 0;
}
