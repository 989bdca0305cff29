#include "svb/network.hpp"

#include <algorithm>
#include <cmath>

#include "svb/kernels.hpp"

namespace svb {

namespace {

void require_rank(const Tensor& t, std::size_t r, const char* who) {
  if (t.rank() != r) {
    throw ShapeError(std::string(who) + ": expected rank-" + std::to_string(r) +
                     " input, got " + shape_string(t.shape()));
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int pad) {
  const long span = static_cast<long>(in) + 2 * pad - static_cast<long>(k);
  if (span < 0) throw ShapeError("conv: kernel larger than padded input");
  return static_cast<std::size_t>(span / stride) + 1;
}

// im2col for one sample: (cin*k*k) x (ho*wo), rows ordered (c, ky, kx).
Tensor im2col(const Tensor& x, std::size_t b, std::size_t k, int stride, int pad,
              std::size_t ho, std::size_t wo) {
  const std::size_t cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor cols({cin * k * k, ho * wo});
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            cols.at(row, oy * wo + ox) = x.at(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
          }
        }
      }
    }
  }
  return cols;
}

// Scatter-add of column gradients back onto one sample of dx.
void col2im_add(Tensor& dx, std::size_t b, const Tensor& dcols, std::size_t k, int stride,
                int pad, std::size_t ho, std::size_t wo) {
  const std::size_t cin = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            dx.at(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                dcols.at(row, oy * wo + ox);
          }
        }
      }
    }
  }
}

// Channel statistics views: rank-2 (B,N) reduces over B per neuron; rank-4
// (B,C,H,W) reduces over B*H*W per channel.
struct ChannelView {
  std::size_t channels;
  std::size_t count;  // samples per channel
};

ChannelView channel_view(const Tensor& z, const char* who) {
  if (z.rank() == 2) return {z.dim(1), z.dim(0)};
  if (z.rank() == 4) return {z.dim(1), z.dim(0) * z.dim(2) * z.dim(3)};
  throw ShapeError(std::string(who) + ": expected rank-2 or rank-4 input, got " + shape_string(z.shape()));
}

template <typename Fn>
void for_each_channel_entry(const Tensor& z, Fn&& fn) {
  if (z.rank() == 2) {
    for (std::size_t b = 0; b < z.dim(0); ++b)
      for (std::size_t c = 0; c < z.dim(1); ++c) fn(c, b * z.dim(1) + c);
  } else {
    const std::size_t spatial = z.dim(2) * z.dim(3);
    for (std::size_t b = 0; b < z.dim(0); ++b)
      for (std::size_t c = 0; c < z.dim(1); ++c)
        for (std::size_t s = 0; s < spatial; ++s) fn(c, (b * z.dim(1) + c) * spatial + s);
  }
}

}  // namespace

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
  require_rank(x, 2, "linear_forward");
  if (x.dim(1) != layer.w.dim(1)) {
    throw ShapeError("linear_forward: input width " + std::to_string(x.dim(1)) +
                     " vs weight " + shape_string(layer.w.shape()));
  }
  Tensor z = matmul_nt(x, layer.w);
  for (std::size_t b = 0; b < z.dim(0); ++b)
    for (std::size_t o = 0; o < z.dim(1); ++o) z.at(b, o) += layer.b[o];
  return z;
}

LinearGrads linear_backward(const LinearLayer& layer, const Tensor& x, const Tensor& dz) {
  require_rank(dz, 2, "linear_backward");
  if (dz.dim(0) != x.dim(0) || dz.dim(1) != layer.w.dim(0)) {
    throw ShapeError("linear_backward: dz " + shape_string(dz.shape()) + " vs weight " +
                     shape_string(layer.w.shape()));
  }
  LinearGrads g;
  g.dx = matmul(dz, layer.w);
  g.dw = matmul_tn(dz, x);
  g.db = Tensor({layer.b.size()});
  for (std::size_t b = 0; b < dz.dim(0); ++b)
    for (std::size_t o = 0; o < dz.dim(1); ++o) g.db[o] += dz.at(b, o);
  return g;
}

Tensor ConvLayer::kernel_matrix() const {
  return kernel.reshaped({kernel.dim(0), kernel.dim(1) * kernel.dim(2) * kernel.dim(3)});
}

void ConvLayer::set_kernel_matrix(const Tensor& km) {
  kernel = km.reshaped(kernel.shape());
}

ConvLayer make_conv(Tensor kernel, Tensor bias, int stride, int pad) {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("make_conv: kernel must be (cout,cin,k,k), got " + shape_string(kernel.shape()));
  }
  const std::size_t k = kernel.dim(2);
  if (k != 1 && k != 3) throw ShapeError("make_conv: kernel size must be 1 or 3");
  if (stride != 1 && stride != 2) throw ShapeError("make_conv: stride must be 1 or 2");
  if (pad < 0) throw ShapeError("make_conv: negative padding");
  if (bias.size() != kernel.dim(0)) throw ShapeError("make_conv: bias size mismatch");
  return ConvLayer{std::move(kernel), std::move(bias), stride, pad};
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& x) {
  require_rank(x, 4, "conv_forward");
  if (x.dim(1) != layer.in_channels()) {
    throw ShapeError("conv_forward: input channels " + std::to_string(x.dim(1)) + " vs kernel " +
                     shape_string(layer.kernel.shape()));
  }
  const std::size_t batch = x.dim(0), k = layer.ksize();
  const std::size_t ho = conv_out_extent(x.dim(2), k, layer.stride, layer.pad);
  const std::size_t wo = conv_out_extent(x.dim(3), k, layer.stride, layer.pad);
  const Tensor km = layer.kernel_matrix();
  Tensor y({batch, layer.out_channels(), ho, wo});
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor cols = im2col(x, b, k, layer.stride, layer.pad, ho, wo);
    const Tensor out = matmul(km, cols);  // (cout, ho*wo)
    for (std::size_t co = 0; co < layer.out_channels(); ++co)
      for (std::size_t p = 0; p < ho * wo; ++p)
        y.at(b, co, p / wo, p % wo) = out.at(co, p) + layer.bias[co];
  }
  return y;
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& x, const Tensor& dy) {
  require_rank(x, 4, "conv_backward");
  require_rank(dy, 4, "conv_backward");
  const std::size_t batch = x.dim(0), k = layer.ksize();
  const std::size_t ho = conv_out_extent(x.dim(2), k, layer.stride, layer.pad);
  const std::size_t wo = conv_out_extent(x.dim(3), k, layer.stride, layer.pad);
  if (dy.dim(0) != batch || dy.dim(1) != layer.out_channels() || dy.dim(2) != ho || dy.dim(3) != wo) {
    throw ShapeError("conv_backward: dy " + shape_string(dy.shape()) + " does not match output");
  }
  const Tensor km = layer.kernel_matrix();

  ConvGrads g;
  g.dx = Tensor(x.shape());
  g.dkernel = Tensor(layer.kernel.shape());
  g.dbias = Tensor({layer.out_channels()});
  Tensor dkm({km.dim(0), km.dim(1)});

  for (std::size_t b = 0; b < batch; ++b) {
    Tensor dy_b({layer.out_channels(), ho * wo});
    for (std::size_t co = 0; co < layer.out_channels(); ++co)
      for (std::size_t p = 0; p < ho * wo; ++p) dy_b.at(co, p) = dy.at(b, co, p / wo, p % wo);

    const Tensor cols = im2col(x, b, k, layer.stride, layer.pad, ho, wo);
    dkm += matmul_nt(dy_b, cols);
    const Tensor dcols = matmul_tn(km, dy_b);
    col2im_add(g.dx, b, dcols, k, layer.stride, layer.pad, ho, wo);
    for (std::size_t co = 0; co < layer.out_channels(); ++co)
      for (std::size_t p = 0; p < ho * wo; ++p) g.dbias[co] += dy_b.at(co, p);
  }
  g.dkernel = dkm.reshaped(layer.kernel.shape());
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i]);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) throw ShapeError("relu_backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (x[i] <= 0.0) dx[i] = 0.0;
  }
  return dx;
}

Tensor gap_forward(const Tensor& x) {
  require_rank(x, 4, "gap_forward");
  const std::size_t batch = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor y({batch, c});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) acc += x[(b * c + ch) * spatial + s];
      y.at(b, ch) = acc / static_cast<double>(spatial);
    }
  return y;
}

Tensor gap_backward(const Tensor& x, const Tensor& dy) {
  require_rank(x, 4, "gap_backward");
  require_rank(dy, 2, "gap_backward");
  const std::size_t batch = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  if (dy.dim(0) != batch || dy.dim(1) != c) throw ShapeError("gap_backward: dy shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = dy.at(b, ch) / static_cast<double>(spatial);
      for (std::size_t s = 0; s < spatial; ++s) dx[(b * c + ch) * spatial + s] = g;
    }
  return dx;
}

SoftmaxXent softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_xent");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) throw ShapeError("softmax_xent: label count mismatch");
  SoftmaxXent out{0.0, Tensor(logits.shape())};
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InputError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
    double mx = logits.at(b, 0);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits.at(b, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits.at(b, c) - mx);
    const double log_denom = std::log(denom);
    out.loss += -(logits.at(b, static_cast<std::size_t>(label)) - mx - log_denom);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(logits.at(b, c) - mx) / denom;
      out.dlogits.at(b, c) = (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) /
                             static_cast<double>(batch);
    }
  }
  out.loss /= static_cast<double>(batch);
  return out;
}

BnState BnState::create(std::size_t n, double avg_momentum) {
  BnState st;
  st.gamma = Tensor::full({n}, 1.0);
  st.beta = Tensor({n});
  st.run_mean = Tensor({n});
  st.run_std = Tensor::full({n}, 1.0);
  st.avg_momentum = avg_momentum;
  return st;
}

Tensor bn_forward(BnState& state, const Tensor& z) {
  const ChannelView view = channel_view(z, "bn_forward");
  if (view.channels != state.width()) {
    throw ShapeError("bn_forward: " + std::to_string(view.channels) + " channels vs state width " +
                     std::to_string(state.width()));
  }
  Tensor out(z.shape());
  if (state.training) {
    if (z.dim(0) < 2) throw InputError("bn_forward: training mode needs a batch of at least 2");
    std::vector<double> mean(view.channels, 0.0), var(view.channels, 0.0);
    for_each_channel_entry(z, [&](std::size_t c, std::size_t i) { mean[c] += z[i]; });
    for (double& m : mean) m /= static_cast<double>(view.count);
    for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
      const double d = z[i] - mean[c];
      var[c] += d * d;
    });
    std::vector<double> std(view.channels);
    for (std::size_t c = 0; c < view.channels; ++c) {
      std[c] = std::sqrt(var[c] / static_cast<double>(view.count) + BnState::kBnEps);
    }
    for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
      out[i] = state.gamma[c] * (z[i] - mean[c]) / std[c] + state.beta[c];
    });
    const double rho = state.avg_momentum;
    for (std::size_t c = 0; c < view.channels; ++c) {
      state.run_mean[c] = rho * state.run_mean[c] + (1.0 - rho) * mean[c];
      state.run_std[c] = rho * state.run_std[c] + (1.0 - rho) * std[c];
    }
  } else {
    for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
      out[i] = state.gamma[c] * (z[i] - state.run_mean[c]) / state.run_std[c] + state.beta[c];
    });
  }
  return out;
}

BnGrads bn_backward(const BnState& state, const Tensor& z, const Tensor& dy) {
  const ChannelView view = channel_view(z, "bn_backward");
  if (!z.same_shape(dy)) throw ShapeError("bn_backward: z and dy shapes differ");
  const double count = static_cast<double>(view.count);

  std::vector<double> mean(view.channels, 0.0), var(view.channels, 0.0);
  for_each_channel_entry(z, [&](std::size_t c, std::size_t i) { mean[c] += z[i]; });
  for (double& m : mean) m /= count;
  for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
    const double d = z[i] - mean[c];
    var[c] += d * d;
  });
  std::vector<double> inv_std(view.channels);
  for (std::size_t c = 0; c < view.channels; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] / count + BnState::kBnEps);
  }

  BnGrads g;
  g.dz = Tensor(z.shape());
  g.dgamma = Tensor({view.channels});
  g.dbeta = Tensor({view.channels});
  std::vector<double> sum_dy(view.channels, 0.0), sum_dy_norm(view.channels, 0.0);
  for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
    const double norm = (z[i] - mean[c]) * inv_std[c];
    sum_dy[c] += dy[i];
    sum_dy_norm[c] += dy[i] * norm;
  });
  for (std::size_t c = 0; c < view.channels; ++c) {
    g.dbeta[c] = sum_dy[c];
    g.dgamma[c] = sum_dy_norm[c];
  }
  for_each_channel_entry(z, [&](std::size_t c, std::size_t i) {
    const double norm = (z[i] - mean[c]) * inv_std[c];
    g.dz[i] = state.gamma[c] * inv_std[c] *
              (dy[i] - sum_dy[c] / count - norm * sum_dy_norm[c] / count);
  });
  return g;
}

FoldedAffine bn_as_linear(const BnState& state, const Tensor& w) {
  if (w.rank() != 2 || w.dim(0) != state.width()) {
    throw ShapeError("bn_as_linear: weight " + shape_string(w.shape()) + " vs state width " +
                     std::to_string(state.width()));
  }
  FoldedAffine out;
  std::vector<double> gain(state.width());
  for (std::size_t i = 0; i < state.width(); ++i) gain[i] = state.gamma[i] / state.run_std[i];
  out.w = scale_rows(w, gain);
  out.b = Tensor({state.width()});
  for (std::size_t i = 0; i < state.width(); ++i) {
    out.b[i] = state.beta[i] - gain[i] * state.run_mean[i];
  }
  return out;
}

void Network::set_training(bool on) {
  for (NamedLayer& nl : layers) {
    if (auto* bn = std::get_if<BnState>(&nl.layer)) bn->training = on;
  }
}

std::vector<ParamRef> parameters(Network& net) {
  std::vector<ParamRef> refs;
  for (NamedLayer& nl : net.layers) {
    if (auto* lin = std::get_if<LinearLayer>(&nl.layer)) {
      refs.push_back({nl.name + ".weight", &lin->w, true});
      refs.push_back({nl.name + ".bias", &lin->b, false});
    } else if (auto* conv = std::get_if<ConvLayer>(&nl.layer)) {
      refs.push_back({nl.name + ".kernel", &conv->kernel, true});
      refs.push_back({nl.name + ".bias", &conv->bias, false});
    } else if (auto* bn = std::get_if<BnState>(&nl.layer)) {
      refs.push_back({nl.name + ".gamma", &bn->gamma, false});
      refs.push_back({nl.name + ".beta", &bn->beta, false});
    }
  }
  return refs;
}

namespace {

// MLP inputs arrive as images; flatten right before a linear layer.
Tensor maybe_flatten(const Tensor& x, const Layer& next) {
  if (x.rank() > 2 && std::holds_alternative<LinearLayer>(next)) {
    std::size_t features = 1;
    for (std::size_t d = 1; d < x.rank(); ++d) features *= x.dim(d);
    return x.reshaped({x.dim(0), features});
  }
  return x;
}

}  // namespace

ForwardTrace network_forward(Network& net, const Tensor& x, bool training) {
  net.set_training(training);
  ForwardTrace trace;
  trace.inputs.reserve(net.layers.size());
  Tensor cur = x;
  for (NamedLayer& nl : net.layers) {
    cur = maybe_flatten(cur, nl.layer);
    trace.inputs.push_back(cur);
    cur = std::visit(
        [&](auto& layer) -> Tensor {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, LinearLayer>) {
            return linear_forward(layer, cur);
          } else if constexpr (std::is_same_v<T, ConvLayer>) {
            return conv_forward(layer, cur);
          } else if constexpr (std::is_same_v<T, BnState>) {
            return bn_forward(layer, cur);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            return relu_forward(cur);
          } else {
            return gap_forward(cur);
          }
        },
        nl.layer);
  }
  trace.logits = cur;
  return trace;
}

Tensor network_infer(Network& net, const Tensor& x) {
  return network_forward(net, x, false).logits;
}

BackwardResult network_backward(Network& net, const ForwardTrace& trace, const Tensor& dlogits) {
  if (trace.inputs.size() != net.layers.size()) {
    throw InputError("network_backward: trace does not match network");
  }
  BackwardResult result;
  std::vector<std::vector<Tensor>> per_layer(net.layers.size());
  Tensor grad = dlogits;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Tensor& input = trace.inputs[li];
    NamedLayer& nl = net.layers[li];
    if (auto* lin = std::get_if<LinearLayer>(&nl.layer)) {
      LinearGrads g = linear_backward(*lin, input, grad);
      per_layer[li] = {std::move(g.dw), std::move(g.db)};
      grad = std::move(g.dx);
    } else if (auto* conv = std::get_if<ConvLayer>(&nl.layer)) {
      ConvGrads g = conv_backward(*conv, input, grad);
      per_layer[li] = {std::move(g.dkernel), std::move(g.dbias)};
      grad = std::move(g.dx);
    } else if (auto* bn = std::get_if<BnState>(&nl.layer)) {
      BnGrads g = bn_backward(*bn, input, grad);
      per_layer[li] = {std::move(g.dgamma), std::move(g.dbeta)};
      grad = std::move(g.dz);
    } else if (std::holds_alternative<ReluLayer>(nl.layer)) {
      grad = relu_backward(input, grad);
    } else {
      grad = gap_backward(input, grad);
    }
  }
  // dx keeps the shape of the (possibly flattened) first-layer input.
  result.dx = std::move(grad);
  for (auto& grads : per_layer) {
    for (auto& g : grads) result.grads.push_back(std::move(g));
  }
  return result;
}

namespace {

LinearLayer make_linear(Rng& rng, std::size_t out, std::size_t in) {
  return LinearLayer{orthogonal_init(rng, out, in), Tensor({out})};
}

ConvLayer make_orthogonal_conv(Rng& rng, std::size_t cout, std::size_t cin, std::size_t k,
                               int stride, int pad) {
  Tensor km = orthogonal_init(rng, cout, cin * k * k);
  return make_conv(km.reshaped({cout, cin, k, k}), Tensor({cout}), stride, pad);
}

}  // namespace

Network build_convnet(int x, std::size_t classes, std::size_t in_channels, std::size_t in_hw, Rng& rng) {
  if (x < 1) throw ConfigError("build_convnet: X must be at least 1");
  (void)in_hw;
  Network net;
  net.num_classes = classes;
  int index = 0;
  auto add = [&](const std::string& kind, Layer layer) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "L%02d.", index++);
    net.layers.push_back({buf + kind, std::move(layer)});
  };
  auto add_block = [&](std::size_t cout, std::size_t cin, int stride) {
    add("conv", make_orthogonal_conv(rng, cout, cin, 3, stride, 1));
    add("bn", BnState::create(cout));
    add("relu", ReluLayer{});
  };

  add_block(16, in_channels, 1);  // stem
  const std::size_t widths[3] = {16, 32, 64};
  std::size_t cin = 16;
  for (int stage = 0; stage < 3; ++stage) {
    for (int i = 0; i < 2 * x; ++i) {
      const int stride = (stage > 0 && i == 0) ? 2 : 1;
      add_block(widths[stage], cin, stride);
      cin = widths[stage];
    }
  }
  add("gap", GapLayer{});
  add("linear", make_linear(rng, classes, cin));
  return net;
}

Network build_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("build_mlp: need at least input and output widths");
  Network net;
  net.num_classes = widths.back();
  int index = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "L%02d.", index++);
    net.layers.push_back({std::string(buf) + "linear", make_linear(rng, widths[i + 1], widths[i])});
    if (i + 2 < widths.size()) {
      std::snprintf(buf, sizeof(buf), "L%02d.", index++);
      net.layers.push_back({std::string(buf) + "relu", ReluLayer{}});
    }
  }
  return net;
}

}  // namespace svb
