#pragma once

#include <vector>

#include "svb/tensor.hpp"

namespace svb {

/// Aligned deep linear network: W^l = R^{l+1} S^l R^{l T} for l = 1..L with
/// fixed orthogonal rotations R^1..R^{L+1} (R^l is widths[l-1] square) and
/// per-layer diagonal spectra embedded in zero-padded rectangles. The
/// rotations stay frozen, which decouples the directions of variation.
struct LinearNetSpec {
  std::vector<std::size_t> widths;                // N_0..N_L
  std::vector<Tensor> rotations;                  // R^1..R^{L+1}
  std::vector<std::vector<double>> spectra;       // s^l, length min(N_{l-1},N_l)
  std::vector<double> target_sigma;               // spectrum of the input-output covariance

  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t min_width() const;
  /// W^l for l in 1..L.
  Tensor weight(std::size_t l) const;
  std::vector<Tensor> weights() const;
  void check_valid() const;
};

/// Random aligned spec; every spectrum entry set to initial_scale.
LinearNetSpec make_aligned_spec(Rng& rng, const std::vector<std::size_t>& widths,
                                const std::vector<double>& sigma, double initial_scale = 1.0);

struct CrossCov {
  Tensor cyx;  // (N_y, N_x)
  Tensor cxx;  // (N_x, N_x)

  /// ||cxx - I||_F; the whitened-input analysis requires <= 1e-8.
  double whitening_residual() const;
};

/// Empirical second moments of row-major sample matrices X (K,N_x), Y (K,N_y).
CrossCov cross_covariance(const Tensor& x, const Tensor& y);

/// Descent directions of the squared-error loss of y ~ W2 W1 x, in the
/// residual-correlation form: G1 = W2^T (Cyx - W2 W1 Cxx),
/// G2 = (Cyx - W2 W1 Cxx) W1^T. A gradient-descent step moves along +G.
struct TwoLayerGrads {
  Tensor g1, g2;
};
TwoLayerGrads two_layer_grads(const Tensor& w1, const Tensor& w2, const CrossCov& cov);

/// Scalar dynamics of one direction: ds = (sigma - s t) t, dt = (sigma - s t) s,
/// energy = (sigma - s t)^2 / 2. ds/dt are descent directions of the energy.
struct DecoupledTwoLayer {
  double ds, dt, energy;
};
DecoupledTwoLayer decoupled_two_layer(double s, double t, double sigma);

/// Descent direction for layer l (1-based) of a deep linear chain under
/// whitened inputs: (prod_{i>l} W^i)^T (Cyx - prod W^i) (prod_{i<l} W^i)^T.
Tensor deep_grad(const std::vector<Tensor>& weights, const CrossCov& cov, std::size_t l);

/// Per-direction scalar form of deep_grad for aligned specs
/// (m is 0-based, m < min_width; l is 1-based).
double decoupled_deep_grad(const LinearNetSpec& spec, std::size_t m, std::size_t l);
/// (sigma_m - prod_l s_m^l)^2 / 2.
double decoupled_energy(const LinearNetSpec& spec, std::size_t m);

/// M = S' V'^T U S from the SVDs of two adjacent layers (w_next = U'S'V'^T,
/// w_prev = U S V^T); entry (m,m') = s'_m s_{m'} <v'_m, u_{m'}> measures how
/// direction m' of the lower layer feeds direction m of the upper. Each entry
/// is cross-checked against the scalar product form to 1e-9.
Tensor mixing_matrix(const Tensor& w_next, const Tensor& w_prev);

/// Error vector propagated from the top to layer l (0-based, 0..L):
/// total = (prod_{i>l} W^i)^T dl_top, plus its per-direction components
/// (prod_{i>l} s_m^i) r_m^{l+1} <r_m^{L+1}, dl_top>, which sum back to total.
struct BackpropComponents {
  Tensor total;                    // (N_l)
  std::vector<Tensor> components;  // M vectors of size N_l
  std::vector<double> amplification;  // prod_{i>l} s_m^i per direction
};
BackpropComponents backprop_error(const LinearNetSpec& spec, std::size_t l, const Tensor& dl_top);

/// Whether sigma is reachable by a depth-L product of values inside the band:
/// sigma in [(1+eps)^-L, (1+eps)^L]. Also reports which side of 1 the layer
/// scales must touch (sigma > 1 forces some s > 1, sigma < 1 forces some s < 1).
struct BandFeasibility {
  double sigma = 0.0;
  std::size_t depth = 0;
  double epsilon = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool feasible = false;
  bool needs_scale_above_one = false;
  bool needs_scale_below_one = false;
};
BandFeasibility band_feasibility(double sigma, std::size_t depth, double epsilon);

}  // namespace svb
