#pragma once

#include <cstddef>
#include <vector>

namespace nfp::kernels {

// Dense kernels used by the tensor layer. Each has a plain serial
// reference implementation in kernels::serial and a dispatching version
// in this namespace that parallelizes over output rows with OpenMP when
// the problem is large enough. The parallel versions partition output
// elements only — every output element is computed by exactly one thread
// with the same k-ascending accumulation order as the serial code — so
// results are bitwise identical for any thread count.

namespace serial {

// C[m x n] = A[m x k] * B[k x n]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// C[k x n] = A^T * B where A is [m x k], B is [m x n]  (weight gradients)
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// C[m x k] = A * B^T where A is [m x n], B is [k x n]  (input gradients)
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// out[j] = sum_i a[i, j] over rows of a [m x n]  (bias gradients)
void col_sum(const double* a, double* out, std::size_t m, std::size_t n);

// c[i, j] = a[i, j] + v[j]
void add_rowvec(const double* a, const double* v, double* c,
                std::size_t m, std::size_t n);

void relu_forward(const double* a, double* c, std::size_t count);

// da[i] = (a[i] > 0) ? dc[i] : 0 — subgradient 0 at the kink
void relu_backward(const double* a, const double* dc, double* da,
                   std::size_t count);

}  // namespace serial

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void col_sum(const double* a, double* out, std::size_t m, std::size_t n);
void add_rowvec(const double* a, const double* v, double* c,
                std::size_t m, std::size_t n);
void relu_forward(const double* a, double* c, std::size_t count);
void relu_backward(const double* a, const double* dc, double* da,
                   std::size_t count);

}  // namespace nfp::kernels
