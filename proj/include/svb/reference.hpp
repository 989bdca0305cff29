#pragma once

#include <functional>
#include <vector>

#include "svb/tensor.hpp"

// Sequential reference implementations, kept independent of the production
// kernels. They back the unit/property suites and the kernel benchmark and
// are never called from the training path.
namespace svb::reference {

/// Naive triple-loop product, accumulator in a scalar, ascending k.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Direct cross-correlation: x (B,Cin,H,W), kernel (Cout,Cin,k,k) -> (B,Cout,Ho,Wo).
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad);

/// Eigendecomposition of a symmetric matrix by cyclic two-sided Jacobi.
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// columns of `vectors`. Oracle for the one-sided SVD: the squared singular
/// values of A are the eigenvalues of A^T A.
struct SymmetricEig {
  std::vector<double> values;
  Tensor vectors;
};
SymmetricEig jacobi_eigh(const Tensor& sym, int max_sweeps = 100);

/// Central finite difference of a scalar function at each entry of x,
/// loss evaluated with x temporarily perturbed in place.
Tensor central_difference(Tensor& x, const std::function<double()>& loss, double h);

}  // namespace svb::reference
