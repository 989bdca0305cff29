#pragma once

#include <string>
#include <variant>
#include <vector>

#include "svb/spectral.hpp"
#include "svb/tensor.hpp"

namespace svb {

struct LinearLayer {
  Tensor w;  // (out, in)
  Tensor b;  // (out)
};

/// z = x W^T + b for a batch of rows.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);
struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const LinearLayer& layer, const Tensor& x, const Tensor& dz);

struct ConvLayer {
  Tensor kernel;  // (cout, cin, k, k)
  Tensor bias;    // (cout)
  int stride = 1;
  int pad = 0;

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t ksize() const { return kernel.dim(2); }
  /// The matrix the kernel acts as under im2col: (cout, cin*k*k). This is the
  /// operator whose spectrum gets bounded.
  Tensor kernel_matrix() const;
  void set_kernel_matrix(const Tensor& km);
};

/// k in {1,3}, stride in {1,2}; shape errors otherwise.
ConvLayer make_conv(Tensor kernel, Tensor bias, int stride, int pad);

/// Cross-correlation via im2col; x (B,cin,H,W) -> (B,cout,Ho,Wo).
Tensor conv_forward(const ConvLayer& layer, const Tensor& x);
struct ConvGrads {
  Tensor dx, dkernel, dbias;
};
ConvGrads conv_backward(const ConvLayer& layer, const Tensor& x, const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// Global average pool (B,C,H,W) -> (B,C).
Tensor gap_forward(const Tensor& x);
Tensor gap_backward(const Tensor& x, const Tensor& dy);

/// Mean cross-entropy of softmax(logits) against integer labels, with the
/// gradient of the mean loss.
struct SoftmaxXent {
  double loss;
  Tensor dlogits;
};
SoftmaxXent softmax_xent(const Tensor& logits, const std::vector<int>& labels);

struct BnState {
  Tensor gamma;         // (N), init 1
  Tensor beta;          // (N), init 0
  Tensor run_mean;      // (N), init 0
  Tensor run_std;       // (N), init 1; entries sqrt(var + kBnEps) >= sqrt(kBnEps)
  double avg_momentum = 0.9;
  bool training = true;

  static constexpr double kBnEps = 1e-5;  // stability constant added to the variance
  static BnState create(std::size_t n, double avg_momentum = 0.9);
  std::size_t width() const { return gamma.size(); }
};

/// Training mode standardizes by batch statistics (per neuron for rank-2
/// input, per channel over batch*H*W for rank-4) and updates the running
/// averages; inference mode uses the stored statistics. Batch of 1 in
/// training mode is an error.
Tensor bn_forward(BnState& state, const Tensor& z);
struct BnGrads {
  Tensor dz, dgamma, dbeta;
};
/// Gradients under training-mode statistics, recomputed from z.
BnGrads bn_backward(const BnState& state, const Tensor& z, const Tensor& dy);

/// Fold inference-mode normalization into the preceding linear map:
/// w~ = diag(gamma/std) W, b~ = beta - diag(gamma/std) mean.
struct FoldedAffine {
  Tensor w;
  Tensor b;
};
FoldedAffine bn_as_linear(const BnState& state, const Tensor& w);

struct ReluLayer {};
struct GapLayer {};

using Layer = std::variant<LinearLayer, ConvLayer, BnState, ReluLayer, GapLayer>;

struct NamedLayer {
  std::string name;
  Layer layer;
};

struct Network {
  std::vector<NamedLayer> layers;
  std::size_t num_classes = 0;

  void set_training(bool on);
};

/// Reference to one trainable tensor inside a network.
struct ParamRef {
  std::string name;
  Tensor* value;
  bool spectral = false;  // participates in singular value bounding
};
std::vector<ParamRef> parameters(Network& net);

/// Forward pass caching each layer's input, as needed by the backward pass.
struct ForwardTrace {
  std::vector<Tensor> inputs;
  Tensor logits;
};
ForwardTrace network_forward(Network& net, const Tensor& x, bool training);
/// Plain forward without caching (inference).
Tensor network_infer(Network& net, const Tensor& x);

/// Per-parameter gradients in parameters() order, plus the input gradient.
struct BackwardResult {
  std::vector<Tensor> grads;
  Tensor dx;
};
BackwardResult network_backward(Network& net, const ForwardTrace& trace, const Tensor& dlogits);

/// Stacked plain conv family: one 3x3/16 stem, three stages of 2X 3x3 conv
/// layers with widths 16/32/64 and stride-2 subsampling at stage entry, BN and
/// ReLU after every conv, global average pooling, one linear classifier.
/// 6X+2 weight layers in total. Parameters orthogonally initialized.
Network build_convnet(int x, std::size_t classes, std::size_t in_channels, std::size_t in_hw, Rng& rng);

/// widths = {input, hidden..., classes}; linear layers with ReLU between,
/// orthogonally initialized, zero biases.
Network build_mlp(const std::vector<std::size_t>& widths, Rng& rng);

}  // namespace svb
