#pragma once

#include <vector>

#include "svb/tensor.hpp"

namespace svb {

/// Thin SVD A = U diag(s) V^T with P = min(M,N):
///   u: MxP column-orthonormal, v: NxP column-orthonormal,
///   s: nonnegative, sorted descending.
struct SvdFactors {
  Tensor u;
  std::vector<double> s;
  Tensor v;

  Tensor reconstruct() const;
};

/// The clipping interval [1/(1+eps), 1+eps] around 1.
struct SpectralBand {
  double epsilon = 0.0;

  double lower() const { return 1.0 / (1.0 + epsilon); }
  double upper() const { return 1.0 + epsilon; }
  double clip(double s) const;
};

/// Thin SVD by one-sided (Hestenes) Jacobi with cyclic pivoting.
///
/// A column pair is rotated whenever |b_p.b_q| > 1e-12 * ||b_p|| * ||b_q||;
/// a sweep with no rotations means every pair cosine is at most 1e-12 and the
/// iteration stops. More than 60 sweeps raises ConvergenceError with the
/// residual. Sign convention: the largest-magnitude entry of each U column is
/// made positive, so factorizations are deterministic.
SvdFactors svd(const Tensor& a);

/// Random matrix with every singular value equal to 1: orthonormal rows when
/// rows <= cols, orthonormal columns when rows >= cols. Householder QR of a
/// Gaussian draw with the R-diagonal sign fix.
Tensor orthogonal_init(Rng& rng, std::size_t rows, std::size_t cols);

/// U diag(clip(s)) V^T: every singular value clamped into the band, singular
/// vectors preserved. Values below the band (including exact zeros) are raised
/// to the lower edge.
Tensor bound_singular_values(const Tensor& w, const SpectralBand& band);

/// Outcome of the diagonal-scaling spectrum check (the `lemma1` verify suite):
/// for W with unit spectrum and diagonal scaling g, the singular values of
/// diag(g) W must lie in [min|g|, max|g|]; in the fat full-rank case they are
/// exactly the sorted |g_i|.
struct DiagScalingReport {
  std::vector<double> scaled_singular_values;  // descending
  double g_abs_min = 0.0;
  double g_abs_max = 0.0;
  double band_overshoot = 0.0;    // how far outside [g_min, g_max], 0 when inside
  bool within_bounds = false;
  bool exact_case_applies = false;  // M <= N (fat, full rank by unit spectrum)
  double exact_case_deviation = 0.0;
  bool pass = false;
};

/// Precondition: all singular values of w equal 1 within 1e-8, all g nonzero;
/// violations raise InputError.
DiagScalingReport check_diagonal_scaling_bounds(const Tensor& w, const std::vector<double>& g,
                                                double tolerance = 1e-9);

}  // namespace svb
