#include "svb/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svb/kernels.hpp"

namespace svb {

namespace {

constexpr double kPairTol = 1e-12;  // relative pair-cosine threshold
constexpr int kMaxSweeps = 60;

// Orthonormal completion for columns belonging to zero singular values:
// pick the canonical basis vector least represented by the columns fixed so
// far and orthogonalize it twice.
void fill_null_column(Tensor& u, std::size_t col) {
  const std::size_t m = u.dim(0);
  std::size_t best = 0;
  double best_residual = -1.0;
  for (std::size_t cand = 0; cand < m; ++cand) {
    double proj = 0.0;
    for (std::size_t j = 0; j < u.dim(1); ++j) {
      if (j == col) continue;
      proj += u.at(cand, j) * u.at(cand, j);
    }
    const double residual = 1.0 - proj;
    if (residual > best_residual) {
      best_residual = residual;
      best = cand;
    }
  }
  std::vector<double> w(m, 0.0);
  w[best] = 1.0;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < u.dim(1); ++j) {
      if (j == col) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += w[i] * u.at(i, j);
      for (std::size_t i = 0; i < m; ++i) w[i] -= dot * u.at(i, j);
    }
  }
  double norm = 0.0;
  for (double x : w) norm += x * x;
  norm = std::sqrt(norm);
  if (norm <= 0.0) throw NumericError("svd: failed to complete an orthonormal basis");
  for (std::size_t i = 0; i < m; ++i) u.at(i, col) = w[i] / norm;
}

// One-sided Jacobi on a tall-or-square matrix (m >= n).
SvdFactors svd_tall(const Tensor& a) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor b = a;
  Tensor v = Tensor::identity(n);

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at(i, p), bq = b.at(i, q);
          alpha += bp * bp;
          beta += bq * bq;
          gamma += bp * bq;
        }
        if (std::fabs(gamma) <= kPairTol * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double sign = zeta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at(i, p), bq = b.at(i, q);
          b.at(i, p) = c * bp - s * bq;
          b.at(i, q) = s * bp + c * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v.at(i, p), vq = v.at(i, q);
          v.at(i, p) = c * vp - s * vq;
          v.at(i, q) = s * vp + c * vq;
        }
        rotated = true;
      }
    }
    if (!rotated) converged = true;
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) gamma += b.at(i, p) * b.at(i, q);
        off += gamma * gamma;
      }
    }
    throw ConvergenceError("svd: no convergence after " + std::to_string(kMaxSweeps) +
                           " sweeps, off-diagonal residual " + std::to_string(std::sqrt(off)));
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += b.at(i, j) * b.at(i, j);
    norms[j] = std::sqrt(acc);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdFactors f;
  f.s.resize(n);
  f.u = Tensor({m, n});
  f.v = Tensor({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    f.s[j] = norms[src];
    for (std::size_t i = 0; i < n; ++i) f.v.at(i, j) = v.at(i, src);
    if (norms[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u.at(i, j) = b.at(i, src) / norms[src];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (f.s[j] == 0.0) fill_null_column(f.u, j);
  }
  return f;
}

// Deterministic signs: largest-|entry| of each U column positive.
void apply_sign_convention(SvdFactors& f) {
  const std::size_t m = f.u.dim(0), p = f.u.dim(1), n = f.v.dim(0);
  for (std::size_t j = 0; j < p; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double mag = std::fabs(f.u.at(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (f.u.at(arg, j) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u.at(i, j) = -f.u.at(i, j);
      for (std::size_t i = 0; i < n; ++i) f.v.at(i, j) = -f.v.at(i, j);
    }
  }
}

}  // namespace

Tensor SvdFactors::reconstruct() const {
  return matmul(scale_cols(u, s), transpose(v));
}

double SpectralBand::clip(double s) const {
  if (epsilon < 0.0) throw InputError("SpectralBand: epsilon must be nonnegative");
  return std::min(upper(), std::max(lower(), s));
}

SvdFactors svd(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("svd: expected a matrix, got " + shape_string(a.shape()));
  if (a.dim(0) < 1 || a.dim(1) < 1) throw ShapeError("svd: empty matrix");
  if (!a.all_finite()) throw NumericError("svd: input has non-finite entries");
  SvdFactors f;
  if (a.dim(0) >= a.dim(1)) {
    f = svd_tall(a);
  } else {
    f = svd_tall(transpose(a));
    std::swap(f.u, f.v);
  }
  apply_sign_convention(f);
  return f;
}

Tensor orthogonal_init(Rng& rng, std::size_t rows, std::size_t cols) {
  const std::size_t m = std::max(rows, cols), n = std::min(rows, cols);
  Tensor g = gaussian(rng, {m, n});

  // Householder QR; reflectors stored in-place below the diagonal.
  std::vector<double> betas(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < m; ++i) norm += g.at(i, j) * g.at(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = g.at(j, j) >= 0.0 ? -norm : norm;
    const double v0 = g.at(j, j) - alpha;
    betas[j] = -v0 / alpha;  // beta = 2 / (v^T v) with v scaled so v[0] = 1
    g.at(j, j) = alpha;
    for (std::size_t i = j + 1; i < m; ++i) g.at(i, j) /= v0;
    for (std::size_t col = j + 1; col < n; ++col) {
      double dot = g.at(j, col);
      for (std::size_t i = j + 1; i < m; ++i) dot += g.at(i, j) * g.at(i, col);
      dot *= betas[j];
      g.at(j, col) -= dot;
      for (std::size_t i = j + 1; i < m; ++i) g.at(i, col) -= dot * g.at(i, j);
    }
  }

  // Accumulate the thin Q = H_0 ... H_{n-1} [I_n; 0].
  Tensor q({m, n});
  for (std::size_t j = 0; j < n; ++j) q.at(j, j) = 1.0;
  for (std::size_t j = n; j-- > 0;) {
    if (betas[j] == 0.0) continue;
    for (std::size_t col = 0; col < n; ++col) {
      double dot = q.at(j, col);
      for (std::size_t i = j + 1; i < m; ++i) dot += g.at(i, j) * q.at(i, col);
      dot *= betas[j];
      q.at(j, col) -= dot;
      for (std::size_t i = j + 1; i < m; ++i) q.at(i, col) -= dot * g.at(i, j);
    }
  }

  // Sign fix from the R diagonal: Haar-distributed and reproducible.
  for (std::size_t j = 0; j < n; ++j) {
    if (g.at(j, j) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) q.at(i, j) = -q.at(i, j);
    }
  }

  return rows >= cols ? q : transpose(q);
}

Tensor bound_singular_values(const Tensor& w, const SpectralBand& band) {
  SvdFactors f = svd(w);
  for (double& s : f.s) s = band.clip(s);
  return f.reconstruct();
}

DiagScalingReport check_diagonal_scaling_bounds(const Tensor& w, const std::vector<double>& g,
                                                double tolerance) {
  if (w.rank() != 2) throw ShapeError("check_diagonal_scaling_bounds: expected a matrix");
  if (g.size() != w.dim(0)) {
    throw InputError("check_diagonal_scaling_bounds: " + std::to_string(g.size()) +
                     " scales for " + shape_string(w.shape()));
  }
  for (double gi : g) {
    if (gi == 0.0) throw InputError("check_diagonal_scaling_bounds: zero diagonal entry");
  }
  const SvdFactors base = svd(w);
  for (double s : base.s) {
    if (std::fabs(s - 1.0) > 1e-8) {
      throw InputError("check_diagonal_scaling_bounds: input spectrum is not unit (found " +
                       std::to_string(s) + ")");
    }
  }

  DiagScalingReport report;
  report.g_abs_min = std::fabs(g[0]);
  report.g_abs_max = std::fabs(g[0]);
  for (double gi : g) {
    report.g_abs_min = std::min(report.g_abs_min, std::fabs(gi));
    report.g_abs_max = std::max(report.g_abs_max, std::fabs(gi));
  }

  const SvdFactors scaled = svd(scale_rows(w, g));
  report.scaled_singular_values = scaled.s;
  for (double s : scaled.s) {
    report.band_overshoot = std::max(report.band_overshoot,
                                     std::max(report.g_abs_min - s, s - report.g_abs_max));
  }
  report.band_overshoot = std::max(report.band_overshoot, 0.0);
  report.within_bounds = report.band_overshoot <= tolerance;

  report.exact_case_applies = w.dim(0) <= w.dim(1);
  if (report.exact_case_applies) {
    std::vector<double> expected(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) expected[i] = std::fabs(g[i]);
    std::sort(expected.begin(), expected.end(), std::greater<>());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      report.exact_case_deviation =
          std::max(report.exact_case_deviation, std::fabs(expected[i] - scaled.s[i]));
    }
  }
  report.pass = report.within_bounds &&
                (!report.exact_case_applies || report.exact_case_deviation <= tolerance);
  return report;
}

}  // namespace svb
