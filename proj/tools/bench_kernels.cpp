#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nfp/kernels.hpp"
#include "nfp/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Shape {
  std::size_t m, k, n;
};

void bench_shape(const Shape& s) {
  nfp::Rng rng(42);
  std::vector<double> a(s.m * s.k), b(s.k * s.n);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  for (auto& v : b) v = rng.uniform(-1.0, 1.0);
  std::vector<double> c_serial(s.m * s.n), c_dispatch(s.m * s.n);

  const double macs = static_cast<double>(s.m) * s.k * s.n;
  // enough repetitions to spend ~0.3s per variant at small sizes
  int reps = static_cast<int>(3e8 / macs) + 1;

  auto t0 = clock_type::now();
  for (int r = 0; r < reps; ++r)
    nfp::kernels::serial::matmul_nn(a.data(), b.data(), c_serial.data(), s.m,
                                    s.k, s.n);
  const double serial_s = seconds_since(t0) / reps;

  t0 = clock_type::now();
  for (int r = 0; r < reps; ++r)
    nfp::kernels::matmul_nn(a.data(), b.data(), c_dispatch.data(), s.m, s.k,
                            s.n);
  const double dispatch_s = seconds_since(t0) / reps;

  const bool identical = std::memcmp(c_serial.data(), c_dispatch.data(),
                                     c_serial.size() * sizeof(double)) == 0;
  std::printf("%5zu x %5zu x %5zu  serial %8.2f GMAC/s  dispatch %8.2f GMAC/s"
              "  speedup %5.2fx  bitwise %s\n",
              s.m, s.k, s.n, macs / serial_s * 1e-9, macs / dispatch_s * 1e-9,
              serial_s / dispatch_s, identical ? "equal" : "DIFFER");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("openmp not enabled; dispatch falls through to serial\n");
#endif
  for (const Shape& s : std::vector<Shape>{{32, 784, 200},
                                           {256, 784, 200},
                                           {256, 200, 200},
                                           {1024, 200, 10},
                                           {512, 512, 512}})
    bench_shape(s);
  return 0;
}
