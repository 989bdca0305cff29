#include "svb/verify.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "svb/kernels.hpp"
#include "svb/lineardyn.hpp"
#include "svb/network.hpp"
#include "svb/reference.hpp"
#include "svb/spectral.hpp"

namespace svb::verify {

namespace {

struct Tally {
  const Report* report;
  bool all_ok = true;

  void check(bool ok, const std::string& name, const std::string& detail = "") {
    all_ok &= ok;
    (*report)(ok, name, detail);
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Tensor random_matrix(Rng& rng, std::size_t m, std::size_t n) { return gaussian(rng, {m, n}); }

double orthonormality_residual(const Tensor& cols) {
  return frobenius_diff(matmul_tn(cols, cols), Tensor::identity(cols.dim(1)));
}

}  // namespace

Report stdout_report() {
  return [](bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s%s%s\n", ok ? "ok  " : "FAIL", name.c_str(), detail.empty() ? "" : ": ",
                detail.c_str());
  };
}

bool run_svd_suite(const Report& report, int instances, std::uint64_t seed) {
  Tally t{&report};
  Rng rng(seed);

  double worst_recon = 0.0, worst_orth = 0.0, worst_oracle = 0.0;
  bool sorted_ok = true;
  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 1 + rng.uniform_below(64);
    const std::size_t n = 1 + rng.uniform_below(64);
    const Tensor a = random_matrix(rng, m, n);
    const SvdFactors f = svd(a);

    worst_recon = std::max(worst_recon,
                           frobenius_diff(f.reconstruct(), a) / std::max(1.0, a.frobenius_norm()));
    worst_orth = std::max({worst_orth, orthonormality_residual(f.u), orthonormality_residual(f.v)});
    for (std::size_t j = 0; j + 1 < f.s.size(); ++j) sorted_ok &= f.s[j] >= f.s[j + 1];
    for (double s : f.s) sorted_ok &= s >= 0.0;

    const auto eig = reference::jacobi_eigh(matmul_tn(a, a));
    const double scale = std::max(1.0, f.s.front());
    for (std::size_t j = 0; j < f.s.size(); ++j) {
      const double expected = std::sqrt(std::max(0.0, eig.values[j]));
      worst_oracle = std::max(worst_oracle, std::fabs(f.s[j] - expected) / scale);
    }
  }
  t.check(worst_recon <= 1e-9, "svd.reconstruction", "worst " + num(worst_recon));
  t.check(worst_orth <= 1e-9, "svd.orthonormality", "worst " + num(worst_orth));
  t.check(sorted_ok, "svd.sorted_nonnegative");
  t.check(worst_oracle <= 1e-8, "svd.gram_eigenvalue_oracle", "worst " + num(worst_oracle));

  // Projection properties at several band widths.
  const double eps_grid[4] = {0.01, 0.05, 0.5, 1.0};
  double worst_band = 0.0, worst_idem = 0.0, worst_vectors = 0.0;
  for (int i = 0; i < std::max(instances / 4, 8); ++i) {
    const std::size_t m = 2 + rng.uniform_below(24);
    const std::size_t n = 2 + rng.uniform_below(24);
    const Tensor a = random_matrix(rng, m, n);
    for (double eps : eps_grid) {
      const SpectralBand band{eps};
      const Tensor bounded = bound_singular_values(a, band);
      const SvdFactors fb = svd(bounded);
      for (double s : fb.s) {
        worst_band = std::max(worst_band, std::max(band.lower() - s, s - band.upper()));
      }
      worst_idem = std::max(worst_idem,
                            frobenius_diff(bound_singular_values(bounded, band), bounded));
      SvdFactors fa = svd(a);
      for (double& s : fa.s) s = band.clip(s);
      worst_vectors = std::max(worst_vectors, frobenius_diff(bounded, fa.reconstruct()));
    }
  }
  t.check(worst_band <= 1e-9, "svb.projection_in_band", "worst overshoot " + num(worst_band));
  t.check(worst_idem <= 1e-9, "svb.idempotent", "worst " + num(worst_idem));
  t.check(worst_vectors <= 1e-9, "svb.vectors_preserved", "worst " + num(worst_vectors));
  return t.all_ok;
}

bool run_lemma1_suite(const Report& report, int instances, std::uint64_t seed) {
  Tally t{&report};
  Rng rng(seed);

  {
    const auto r = check_diagonal_scaling_bounds(Tensor::identity(2), {3.0, 0.5});
    t.check(r.pass && std::fabs(r.scaled_singular_values[0] - 3.0) < 1e-12 &&
                std::fabs(r.scaled_singular_values[1] - 0.5) < 1e-12,
            "lemma1.identity_case");
  }
  {
    Tensor w({2, 3});
    w.at(0, 0) = 1.0;
    w.at(1, 1) = 1.0;
    const auto r = check_diagonal_scaling_bounds(w, {2.0, -0.5});
    t.check(r.pass && std::fabs(r.scaled_singular_values[0] - 2.0) < 1e-12 &&
                std::fabs(r.scaled_singular_values[1] - 0.5) < 1e-12,
            "lemma1.fat_full_rank_case");
  }

  double worst_bound = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 2 + rng.uniform_below(12);
    const std::size_t m = n + 1 + rng.uniform_below(12);  // tall
    const Tensor w = orthogonal_init(rng, m, n);
    std::vector<double> g(m);
    for (double& gi : g) {
      gi = 0.1 + 2.9 * rng.uniform();
      if (rng.uniform_below(2) == 1) gi = -gi;
    }
    const auto r = check_diagonal_scaling_bounds(w, g);
    worst_bound = std::max(worst_bound, r.band_overshoot);
  }
  t.check(worst_bound <= 1e-9, "lemma1.tall_bound", "worst overshoot " + num(worst_bound));

  double worst_exact = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 2 + rng.uniform_below(12);
    const std::size_t n = m + rng.uniform_below(12);  // fat or square
    const Tensor w = orthogonal_init(rng, m, n);
    std::vector<double> g(m);
    for (double& gi : g) {
      gi = 0.1 + 2.9 * rng.uniform();
      if (rng.uniform_below(2) == 1) gi = -gi;
    }
    const auto r = check_diagonal_scaling_bounds(w, g);
    worst_exact = std::max(worst_exact, r.exact_case_deviation);
    worst_bound = std::max(worst_bound, r.band_overshoot);
  }
  t.check(worst_exact <= 1e-9, "lemma1.fat_exact_values", "worst deviation " + num(worst_exact));
  return t.all_ok;
}

namespace {

// Relative agreement of an analytic gradient with a finite-difference one.
double grad_disagreement(const Tensor& analytic, const Tensor& fd) {
  return frobenius_diff(analytic, fd) / std::max(1.0, fd.frobenius_norm());
}

}  // namespace

bool run_gradcheck_suite(const Report& report, int instances, std::uint64_t seed) {
  Tally t{&report};
  Rng rng(seed);
  const double h = 1e-5;

  auto weighted = [](const Tensor& z, const Tensor& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += z[i] * p[i];
    return acc;
  };

  double worst_linear = 0.0;
  for (int i = 0; i < instances; ++i) {
    LinearLayer layer{gaussian(rng, {5, 7}), gaussian(rng, {5})};
    Tensor x = gaussian(rng, {4, 7});
    const Tensor p = gaussian(rng, {4, 5});
    const auto loss = [&] { return weighted(linear_forward(layer, x), p); };
    const LinearGrads g = linear_backward(layer, x, p);
    worst_linear = std::max({worst_linear,
                             grad_disagreement(g.dw, reference::central_difference(layer.w, loss, h)),
                             grad_disagreement(g.db, reference::central_difference(layer.b, loss, h)),
                             grad_disagreement(g.dx, reference::central_difference(x, loss, h))});
  }
  t.check(worst_linear <= 1e-5, "gradcheck.linear", "worst " + num(worst_linear));

  double worst_conv = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int stride = 1 + static_cast<int>(rng.uniform_below(2));
    const int pad = static_cast<int>(rng.uniform_below(2));
    ConvLayer layer = make_conv(gaussian(rng, {3, 2, 3, 3}), gaussian(rng, {3}), stride, pad);
    Tensor x = gaussian(rng, {2, 2, 6, 6});
    const Tensor probe_shape = conv_forward(layer, x);
    Tensor p = gaussian(rng, probe_shape.shape());
    const auto loss = [&] { return weighted(conv_forward(layer, x), p); };
    const ConvGrads g = conv_backward(layer, x, p);
    worst_conv = std::max(
        {worst_conv,
         grad_disagreement(g.dkernel, reference::central_difference(layer.kernel, loss, h)),
         grad_disagreement(g.dbias, reference::central_difference(layer.bias, loss, h)),
         grad_disagreement(g.dx, reference::central_difference(x, loss, h))});
  }
  t.check(worst_conv <= 1e-5, "gradcheck.conv", "worst " + num(worst_conv));

  double worst_relu = 0.0;
  for (int i = 0; i < instances; ++i) {
    Tensor x = gaussian(rng, {4, 9});
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (std::fabs(x[j]) < 0.1) x[j] = x[j] < 0.0 ? x[j] - 0.1 : x[j] + 0.1;  // stay off the kink
    }
    const Tensor p = gaussian(rng, x.shape());
    const auto loss = [&] { return weighted(relu_forward(x), p); };
    worst_relu = std::max(worst_relu, grad_disagreement(relu_backward(x, p),
                                                        reference::central_difference(x, loss, h)));
  }
  t.check(worst_relu <= 1e-5, "gradcheck.relu", "worst " + num(worst_relu));

  double worst_gap = 0.0;
  for (int i = 0; i < instances; ++i) {
    Tensor x = gaussian(rng, {3, 4, 5, 5});
    const Tensor p = gaussian(rng, {3, 4});
    const auto loss = [&] { return weighted(gap_forward(x), p); };
    worst_gap = std::max(worst_gap, grad_disagreement(gap_backward(x, p),
                                                      reference::central_difference(x, loss, h)));
  }
  t.check(worst_gap <= 1e-5, "gradcheck.gap", "worst " + num(worst_gap));

  double worst_bn = 0.0;
  for (int i = 0; i < instances; ++i) {
    const bool image = rng.uniform_below(2) == 1;
    Tensor x = image ? gaussian(rng, {3, 4, 3, 3}) : gaussian(rng, {8, 6});
    const std::size_t width = x.dim(1);
    BnState st = BnState::create(width);
    st.gamma = gaussian(rng, {width});
    st.beta = gaussian(rng, {width});
    const Tensor p = gaussian(rng, x.shape());
    const auto loss = [&] {
      BnState scratch = st;  // running averages drift per call otherwise
      return weighted(bn_forward(scratch, x), p);
    };
    const BnGrads g = bn_backward(st, x, p);
    worst_bn = std::max({worst_bn,
                         grad_disagreement(g.dgamma, reference::central_difference(st.gamma, loss, h)),
                         grad_disagreement(g.dbeta, reference::central_difference(st.beta, loss, h)),
                         grad_disagreement(g.dz, reference::central_difference(x, loss, h))});
  }
  t.check(worst_bn <= 1e-5, "gradcheck.bn", "worst " + num(worst_bn));

  double worst_sx = 0.0;
  for (int i = 0; i < instances; ++i) {
    Tensor logits = gaussian(rng, {5, 7});
    std::vector<int> labels(5);
    for (int& l : labels) l = static_cast<int>(rng.uniform_below(7));
    const auto loss = [&] { return softmax_xent(logits, labels).loss; };
    const Tensor analytic = softmax_xent(logits, labels).dlogits;
    worst_sx = std::max(worst_sx,
                        grad_disagreement(analytic, reference::central_difference(logits, loss, h)));
  }
  t.check(worst_sx <= 1e-6, "gradcheck.softmax_xent", "worst " + num(worst_sx));

  return t.all_ok;
}

namespace {

// Input-output covariance implied by an aligned spec: R^{L+1} rect(sigma) R^{1 T}.
CrossCov cov_from_spec(const LinearNetSpec& spec) {
  const std::size_t ny = spec.widths.back(), nx = spec.widths.front();
  Tensor rect({ny, nx});
  for (std::size_t m = 0; m < spec.target_sigma.size(); ++m) rect.at(m, m) = spec.target_sigma[m];
  CrossCov cov;
  cov.cyx = matmul(matmul(spec.rotations.back(), rect), transpose(spec.rotations.front()));
  cov.cxx = Tensor::identity(nx);
  return cov;
}

LinearNetSpec random_spec(Rng& rng, std::size_t max_depth, double s_lo, double s_hi) {
  const std::size_t depth = 2 + rng.uniform_below(max_depth - 1);
  std::vector<std::size_t> widths(depth + 1);
  for (auto& w : widths) w = 2 + rng.uniform_below(4);
  std::size_t min_w = widths[0];
  for (std::size_t w : widths) min_w = std::min(min_w, w);
  std::vector<double> sigma(min_w);
  for (double& s : sigma) s = 0.25 + 2.0 * rng.uniform();
  LinearNetSpec spec = make_aligned_spec(rng, widths, sigma, 1.0);
  for (auto& layer : spec.spectra) {
    for (double& s : layer) s = s_lo + (s_hi - s_lo) * rng.uniform();
  }
  return spec;
}

}  // namespace

bool run_dynamics_suite(const Report& report, int instances, std::uint64_t seed) {
  Tally t{&report};
  Rng rng(seed);

  // Full-matrix descent direction equals its per-direction reconstruction.
  double worst_equiv = 0.0;
  for (int i = 0; i < instances; ++i) {
    const LinearNetSpec spec = random_spec(rng, 10, 0.5, 1.5);
    const CrossCov cov = cov_from_spec(spec);
    const auto ws = spec.weights();
    for (std::size_t l = 1; l <= spec.depth(); ++l) {
      const Tensor full = deep_grad(ws, cov, l);
      Tensor rect({spec.widths[l], spec.widths[l - 1]});
      for (std::size_t m = 0; m < spec.target_sigma.size(); ++m) {
        rect.at(m, m) = decoupled_deep_grad(spec, m, l);
      }
      const Tensor rebuilt =
          matmul(matmul(spec.rotations[l], rect), transpose(spec.rotations[l - 1]));
      worst_equiv = std::max(worst_equiv, max_abs_diff(full, rebuilt));
    }
  }
  t.check(worst_equiv <= 1e-9, "dynamics.deep_grad_equivalence", "worst " + num(worst_equiv));

  // Two-layer form against finite differences of the sample loss.
  double worst_fd = 0.0;
  for (int i = 0; i < std::max(instances / 5, 5); ++i) {
    const std::size_t nx = 3, nh = 4, ny = 3, k = 32;
    const Tensor x = gaussian(rng, {k, nx});
    const Tensor y = gaussian(rng, {k, ny});
    Tensor w1 = gaussian(rng, {nh, nx});
    Tensor w2 = gaussian(rng, {ny, nh});
    const CrossCov cov = cross_covariance(x, y);
    const TwoLayerGrads g = two_layer_grads(w1, w2, cov);
    const auto sample_loss = [&] {
      double acc = 0.0;
      const Tensor pred = matmul_nt(x, matmul(w2, w1));
      for (std::size_t j = 0; j < pred.size(); ++j) {
        const double d = y[j] - pred[j];
        acc += d * d;
      }
      return acc / (2.0 * static_cast<double>(k));
    };
    // The returned direction is the negative loss gradient.
    Tensor fd1 = reference::central_difference(w1, sample_loss, 1e-6);
    Tensor fd2 = reference::central_difference(w2, sample_loss, 1e-6);
    fd1 *= -1.0;
    fd2 *= -1.0;
    worst_fd = std::max({worst_fd, grad_disagreement(g.g1, fd1), grad_disagreement(g.g2, fd2)});
  }
  t.check(worst_fd <= 1e-6, "dynamics.two_layer_fd", "worst " + num(worst_fd));

  // A small explicit Euler step along the descent direction never raises the energy.
  bool descent_ok = true;
  for (int i = 0; i < instances; ++i) {
    LinearNetSpec spec = random_spec(rng, 8, 0.5, 2.0);
    for (std::size_t m = 0; m < spec.target_sigma.size(); ++m) {
      const double before = decoupled_energy(spec, m);
      LinearNetSpec stepped = spec;
      for (std::size_t l = 1; l <= spec.depth(); ++l) {
        stepped.spectra[l - 1][m] += 1e-3 * decoupled_deep_grad(spec, m, l);
      }
      descent_ok &= decoupled_energy(stepped, m) <= before + 1e-15;
    }
  }
  t.check(descent_ok, "dynamics.energy_descent");

  // Unit spectra preserve error norms; banded spectra bound the amplification.
  double worst_norm = 0.0;
  bool band_ok = true;
  double worst_mixing = 0.0;
  for (int i = 0; i < std::max(instances / 5, 5); ++i) {
    const std::size_t width = 3 + rng.uniform_below(3);
    const std::size_t depth = 4 + rng.uniform_below(6);
    LinearNetSpec spec =
        make_aligned_spec(rng, std::vector<std::size_t>(depth + 1, width),
                          std::vector<double>(width, 1.0), 1.0);
    const Tensor top = gaussian(rng, {width});
    for (std::size_t l = 0; l <= depth; ++l) {
      const auto bp = backprop_error(spec, l, top);
      worst_norm = std::max(worst_norm,
                            std::fabs(bp.total.frobenius_norm() / top.frobenius_norm() - 1.0));
    }

    const double eps = 0.2;
    LinearNetSpec banded = spec;
    for (auto& layer : banded.spectra) {
      for (double& s : layer) s = 1.0 / (1.0 + eps) + (1.0 + eps - 1.0 / (1.0 + eps)) * rng.uniform();
    }
    for (std::size_t l = 0; l <= depth; ++l) {
      const auto bp = backprop_error(banded, l, top);
      const double hi = std::pow(1.0 + eps, static_cast<double>(depth - l));
      for (double a : bp.amplification) {
        band_ok &= a >= 1.0 / hi - 1e-12 && a <= hi + 1e-12;
      }
      // Components must reassemble the matrix-product path.
      Tensor sum({banded.widths[l]});
      for (const Tensor& c : bp.components) sum += c;
      band_ok &= max_abs_diff(sum, bp.total) <= 1e-9;
    }

    const Tensor wa = banded.weight(1);
    const Tensor wb = banded.weight(2);
    const Tensor mix = mixing_matrix(wb, wa);
    const SvdFactors fa = svd(wa);
    const SvdFactors fb = svd(wb);
    for (std::size_t r = 0; r < mix.dim(0); ++r) {
      for (std::size_t c = 0; c < mix.dim(1); ++c) {
        worst_mixing = std::max(worst_mixing, std::fabs(mix.at(r, c)) - fb.s[r] * fa.s[c]);
      }
    }
  }
  t.check(worst_norm <= 1e-10, "dynamics.norm_preservation", "worst " + num(worst_norm));
  t.check(band_ok, "dynamics.band_amplification");
  t.check(worst_mixing <= 1e-12, "dynamics.mixing_entry_bound", "worst excess " + num(worst_mixing));
  return t.all_ok;
}

bool run_suite(const std::string& name, const Report& report) {
  if (name == "svd") return run_svd_suite(report);
  if (name == "lemma1") return run_lemma1_suite(report);
  if (name == "gradcheck") return run_gradcheck_suite(report);
  if (name == "dynamics") return run_dynamics_suite(report);
  throw InputError("unknown verify suite '" + name + "'");
}

}  // namespace svb::verify
