#pragma once

#include "svb/tensor.hpp"

namespace svb {

// Thread control for the OpenMP kernels. The default (1) is the sequential
// reference path; any setting produces bitwise-identical results because
// every output element keeps the same ascending-k summation order.
void set_threads(int n);
int threads();
bool parallel_enabled();

/// C[MxN] = A[MxK] * B[KxN]. Fixed ascending-k accumulation per element.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C[MxN] = A[MxK] * B[NxK]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// C[MxN] = A[KxM]^T * B[KxN].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// y[M] = A[MxN] * x[N].
Tensor matvec(const Tensor& a, const Tensor& x);

/// (i,j) -> (j,i) copy; rank-2 only.
Tensor transpose(const Tensor& a);

/// Scale row i of a by d[i] (diagonal left-multiply).
Tensor scale_rows(const Tensor& a, const std::vector<double>& d);
/// Scale column j of a by d[j] (diagonal right-multiply).
Tensor scale_cols(const Tensor& a, const std::vector<double>& d);

}  // namespace svb
