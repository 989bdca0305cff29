#include "svb/lineardyn.hpp"

#include <algorithm>
#include <cmath>

#include "svb/kernels.hpp"
#include "svb/spectral.hpp"

namespace svb {

std::size_t LinearNetSpec::min_width() const {
  std::size_t m = widths.front();
  for (std::size_t w : widths) m = std::min(m, w);
  return m;
}

Tensor LinearNetSpec::weight(std::size_t l) const {
  if (l < 1 || l > depth()) throw InputError("LinearNetSpec::weight: layer index out of range");
  const std::size_t rows = widths[l], cols = widths[l - 1];
  const std::vector<double>& s = spectra[l - 1];
  // diag(s) embedded in a rows x cols rectangle.
  Tensor rect({rows, cols});
  for (std::size_t i = 0; i < s.size(); ++i) rect.at(i, i) = s[i];
  return matmul(matmul(rotations[l], rect), transpose(rotations[l - 1]));
}

std::vector<Tensor> LinearNetSpec::weights() const {
  std::vector<Tensor> out;
  out.reserve(depth());
  for (std::size_t l = 1; l <= depth(); ++l) out.push_back(weight(l));
  return out;
}

void LinearNetSpec::check_valid() const {
  if (widths.size() < 2) throw InputError("LinearNetSpec: need at least one layer");
  if (rotations.size() != widths.size()) {
    throw InputError("LinearNetSpec: need L+1 rotations");
  }
  if (spectra.size() != depth()) throw InputError("LinearNetSpec: need L spectra");
  for (std::size_t l = 0; l < rotations.size(); ++l) {
    const Tensor& r = rotations[l];
    if (r.rank() != 2 || r.dim(0) != widths[l] || r.dim(1) != widths[l]) {
      throw InputError("LinearNetSpec: rotation " + std::to_string(l + 1) + " has shape " +
                       shape_string(r.shape()));
    }
    const Tensor gram = matmul_tn(r, r);
    if (frobenius_diff(gram, Tensor::identity(r.dim(0))) > 1e-10) {
      throw InputError("LinearNetSpec: rotation " + std::to_string(l + 1) + " is not orthogonal");
    }
  }
  for (std::size_t l = 0; l < spectra.size(); ++l) {
    if (spectra[l].size() != std::min(widths[l], widths[l + 1])) {
      throw InputError("LinearNetSpec: spectrum " + std::to_string(l + 1) + " has wrong length");
    }
    for (double s : spectra[l]) {
      if (s < 0.0) throw InputError("LinearNetSpec: spectra must be nonnegative");
    }
  }
}

LinearNetSpec make_aligned_spec(Rng& rng, const std::vector<std::size_t>& widths,
                                const std::vector<double>& sigma, double initial_scale) {
  LinearNetSpec spec;
  spec.widths = widths;
  spec.target_sigma = sigma;
  for (std::size_t w : widths) spec.rotations.push_back(orthogonal_init(rng, w, w));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    spec.spectra.emplace_back(std::min(widths[l], widths[l + 1]), initial_scale);
  }
  spec.check_valid();
  if (sigma.size() > spec.min_width()) {
    throw InputError("make_aligned_spec: more target directions than the narrowest width");
  }
  return spec;
}

double CrossCov::whitening_residual() const {
  return frobenius_diff(cxx, Tensor::identity(cxx.dim(0)));
}

CrossCov cross_covariance(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2) throw ShapeError("cross_covariance: need sample matrices");
  if (x.dim(0) != y.dim(0)) {
    throw ShapeError("cross_covariance: sample counts differ, " + std::to_string(x.dim(0)) +
                     " vs " + std::to_string(y.dim(0)));
  }
  const double k = static_cast<double>(x.dim(0));
  CrossCov cov;
  cov.cyx = matmul_tn(y, x);
  cov.cyx *= 1.0 / k;
  cov.cxx = matmul_tn(x, x);
  cov.cxx *= 1.0 / k;
  return cov;
}

TwoLayerGrads two_layer_grads(const Tensor& w1, const Tensor& w2, const CrossCov& cov) {
  if (w2.dim(1) != w1.dim(0)) throw ShapeError("two_layer_grads: layer widths do not chain");
  if (w1.dim(1) != cov.cxx.dim(0) || w2.dim(0) != cov.cyx.dim(0)) {
    throw ShapeError("two_layer_grads: covariance shapes do not match the layers");
  }
  const Tensor residual = cov.cyx - matmul(matmul(w2, w1), cov.cxx);
  return {matmul_tn(w2, residual), matmul_nt(residual, w1)};
}

DecoupledTwoLayer decoupled_two_layer(double s, double t, double sigma) {
  const double r = sigma - s * t;
  return {r * t, r * s, 0.5 * r * r};
}

namespace {

// prod_{i=lo..hi} W^i = W^hi ... W^lo (1-based, empty product = I of size n).
Tensor chain_product(const std::vector<Tensor>& weights, std::size_t lo, std::size_t hi,
                     std::size_t identity_n) {
  if (lo > hi) return Tensor::identity(identity_n);
  Tensor acc = weights[lo - 1];
  for (std::size_t i = lo + 1; i <= hi; ++i) acc = matmul(weights[i - 1], acc);
  return acc;
}

}  // namespace

Tensor deep_grad(const std::vector<Tensor>& weights, const CrossCov& cov, std::size_t l) {
  if (weights.empty()) throw InputError("deep_grad: no layers");
  if (l < 1 || l > weights.size()) throw InputError("deep_grad: layer index out of range");
  if (cov.whitening_residual() > 1e-8) {
    throw InputError("deep_grad: inputs are not whitened (||Cxx - I|| = " +
                     std::to_string(cov.whitening_residual()) + ")");
  }
  const std::size_t depth = weights.size();
  const Tensor upper = chain_product(weights, l + 1, depth, weights[l - 1].dim(0));
  const Tensor lower = chain_product(weights, 1, l - 1, weights[l - 1].dim(1));
  const Tensor full = chain_product(weights, 1, depth, weights[0].dim(1));
  const Tensor residual = cov.cyx - full;
  return matmul(matmul_tn(upper, residual), transpose(lower));
}

double decoupled_deep_grad(const LinearNetSpec& spec, std::size_t m, std::size_t l) {
  if (m >= spec.min_width() || m >= spec.target_sigma.size()) {
    throw InputError("decoupled_deep_grad: direction index out of range");
  }
  if (l < 1 || l > spec.depth()) throw InputError("decoupled_deep_grad: layer index out of range");
  double above = 1.0, below = 1.0, all = 1.0;
  for (std::size_t i = 1; i <= spec.depth(); ++i) {
    const double s = spec.spectra[i - 1][m];
    all *= s;
    if (i > l) above *= s;
    if (i < l) below *= s;
  }
  return above * (spec.target_sigma[m] - all) * below;
}

double decoupled_energy(const LinearNetSpec& spec, std::size_t m) {
  if (m >= spec.min_width() || m >= spec.target_sigma.size()) {
    throw InputError("decoupled_energy: direction index out of range");
  }
  double all = 1.0;
  for (std::size_t i = 1; i <= spec.depth(); ++i) all *= spec.spectra[i - 1][m];
  const double r = spec.target_sigma[m] - all;
  return 0.5 * r * r;
}

Tensor mixing_matrix(const Tensor& w_next, const Tensor& w_prev) {
  if (w_next.dim(1) != w_prev.dim(0)) throw ShapeError("mixing_matrix: widths do not chain");
  const SvdFactors fn = svd(w_next);
  const SvdFactors fp = svd(w_prev);
  // S' V'^T U S
  Tensor inner = matmul_tn(fn.v, fp.u);
  Tensor m = scale_cols(scale_rows(inner, fn.s), fp.s);
  // Factor check against the entrywise product form.
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < fn.v.dim(0); ++r) dot += fn.v.at(r, i) * fp.u.at(r, j);
      const double expected = fn.s[i] * fp.s[j] * dot;
      if (std::fabs(expected - m.at(i, j)) > 1e-9) {
        throw NumericError("mixing_matrix: factor check failed at (" + std::to_string(i) + "," +
                           std::to_string(j) + ")");
      }
    }
  }
  return m;
}

BackpropComponents backprop_error(const LinearNetSpec& spec, std::size_t l, const Tensor& dl_top) {
  spec.check_valid();
  const std::size_t depth = spec.depth();
  if (l > depth) throw InputError("backprop_error: layer index out of range");
  if (dl_top.rank() != 1 || dl_top.dim(0) != spec.widths[depth]) {
    throw ShapeError("backprop_error: top error vector has shape " + shape_string(dl_top.shape()));
  }

  const auto ws = spec.weights();
  const Tensor upper = chain_product(ws, l + 1, depth, spec.widths[l]);
  BackpropComponents out;
  out.total = matvec(transpose(upper), dl_top);

  std::size_t m_count = spec.widths[l];
  for (std::size_t i = l; i <= depth; ++i) m_count = std::min(m_count, spec.widths[i]);
  const Tensor& r_top = spec.rotations[depth];  // R^{L+1}
  const Tensor& r_l = spec.rotations[l];        // R^{l+1}
  for (std::size_t m = 0; m < m_count; ++m) {
    double amp = 1.0;
    for (std::size_t i = l + 1; i <= depth; ++i) amp *= spec.spectra[i - 1][m];
    double proj = 0.0;
    for (std::size_t i = 0; i < dl_top.dim(0); ++i) proj += r_top.at(i, m) * dl_top[i];
    Tensor comp({spec.widths[l]});
    for (std::size_t i = 0; i < comp.dim(0); ++i) comp[i] = amp * proj * r_l.at(i, m);
    out.components.push_back(std::move(comp));
    out.amplification.push_back(amp);
  }
  return out;
}

BandFeasibility band_feasibility(double sigma, std::size_t depth, double epsilon) {
  if (sigma <= 0.0) throw InputError("band_feasibility: sigma must be positive");
  if (epsilon < 0.0) throw InputError("band_feasibility: epsilon must be nonnegative");
  BandFeasibility r;
  r.sigma = sigma;
  r.depth = depth;
  r.epsilon = epsilon;
  r.hi = std::pow(1.0 + epsilon, static_cast<double>(depth));
  r.lo = 1.0 / r.hi;
  r.feasible = sigma >= r.lo && sigma <= r.hi;
  // A product of scales <= 1 stays <= 1, so sigma > 1 is unreachable without
  // some scale above 1; symmetrically for sigma < 1.
  r.needs_scale_above_one = sigma > 1.0;
  r.needs_scale_below_one = sigma < 1.0;
  return r;
}

}  // namespace svb
