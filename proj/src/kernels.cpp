#include "nfp/kernels.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nfp::kernels {

namespace serial {

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  // ikj order: stream through B rows, accumulate into C rows.
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  // C[k x n] = A^T B; loop rows of A/B outermost so both stream.
  std::memset(c, 0, k * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  // C[m x k] = A B^T; dot products of A rows with B rows.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] = acc;
    }
  }
}

void col_sum(const double* a, double* out, std::size_t m, std::size_t n) {
  std::memset(out, 0, n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += arow[j];
  }
}

void add_rowvec(const double* a, const double* v, double* c,
                std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = arow[j] + v[j];
  }
}

void relu_forward(const double* a, double* c, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) c[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_backward(const double* a, const double* dc, double* da,
                   std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) da[i] = a[i] > 0.0 ? dc[i] : 0.0;
}

}  // namespace serial

namespace {

// Don't spin up threads for tiny problems.
constexpr std::size_t kParallelWorkThreshold = 64 * 1024;

#ifdef _OPENMP
bool worth_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && omp_get_max_threads() > 1;
}
#endif

}  // namespace

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (worth_parallel(m * k * n)) {
    // Each thread owns whole C rows; accumulation order over p matches
    // the serial kernel exactly.
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * k;
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
#endif
  serial::matmul_nn(a, b, c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (worth_parallel(m * k * n)) {
    // Threads own rows of C (indexed by p over A's columns); the inner
    // reduction over i runs ascending as in serial::matmul_tn.
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(k); ++p) {
      double* crow = c + static_cast<std::size_t>(p) * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + static_cast<std::size_t>(p)];
        const double* brow = b + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
#endif
  serial::matmul_tn(a, b, c, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (worth_parallel(m * k * n)) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * n;
      double* crow = c + static_cast<std::size_t>(i) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
        crow[p] = acc;
      }
    }
    return;
  }
#endif
  serial::matmul_nt(a, b, c, m, k, n);
}

void col_sum(const double* a, double* out, std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (worth_parallel(m * n)) {
    // Parallel over output columns; each column sum runs i-ascending.
#pragma omp parallel for schedule(static)
    for (long long j = 0; j < static_cast<long long>(n); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        acc += a[i * n + static_cast<std::size_t>(j)];
      out[j] = acc;
    }
    return;
  }
#endif
  serial::col_sum(a, out, m, n);
}

void add_rowvec(const double* a, const double* v, double* c,
                std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (worth_parallel(m * n)) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * n;
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = arow[j] + v[j];
    }
    return;
  }
#endif
  serial::add_rowvec(a, v, c, m, n);
}

void relu_forward(const double* a, double* c, std::size_t count) {
#ifdef _OPENMP
  if (worth_parallel(count)) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i)
      c[i] = a[i] > 0.0 ? a[i] : 0.0;
    return;
  }
#endif
  serial::relu_forward(a, c, count);
}

void relu_backward(const double* a, const double* dc, double* da,
                   std::size_t count) {
#ifdef _OPENMP
  if (worth_parallel(count)) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i)
      da[i] = a[i] > 0.0 ? dc[i] : 0.0;
    return;
  }
#endif
  serial::relu_backward(a, dc, da, count);
}

}  // namespace nfp::kernels
