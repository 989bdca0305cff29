#pragma once

#include <string>
#include <vector>

#include "svb/tensor.hpp"

namespace svb {

/// Sample collection: inputs (K, C, H, W) or (K, D); classification sets
/// carry integer labels, regression sets carry continuous targets (K, Ny).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  Tensor targets;
  int num_classes = 0;
  std::string split;
  std::string provenance;

  std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
  bool classification() const { return !labels.empty(); }
};

/// IDX image file (big-endian magic 0x00000803): (K,1,rows,cols), pixels
/// scaled to [0,1]. Truncation and bad magic raise FormatError with offsets.
Tensor load_idx_images(const std::string& path);
/// IDX label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::string& path);
/// Image + label pair; K must agree.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split);

/// One file of 3073-byte records (label byte + 3x32x32 pixels), scaled to
/// [0,1]. File sizes that are not a multiple of 3073 raise FormatError.
Dataset load_cifar_binary(const std::string& path, const std::string& split);

/// Appends rows of b to a; shapes beyond the leading dimension must match.
Dataset concat(const Dataset& a, const Dataset& b);

/// Zero-pad 4 pixels per side, take the 32x32 crop at (dy,dx) in [0,8]^2,
/// optionally mirror it horizontally. Input (C,32,32).
Tensor pad_crop_flip(const Tensor& image, int dy, int dx, bool flip);
/// Crop offset and flip drawn from rng (dy, dx, then flip).
Tensor augment_pad_crop_flip(Rng& rng, const Tensor& image);

/// Whitened regression set: inputs exactly whitened empirically (zero column
/// means, X^T X / K = I), targets y = A x + noise*g where A has the given
/// singular spectrum. Requires K > n_x.
Dataset synth_linear(Rng& rng, std::size_t k, std::size_t n_x, std::size_t n_y,
                     const std::vector<double>& sigma, double noise);

/// Gaussian-blob classification set for self-contained training runs.
Dataset synth_blobs(Rng& rng, std::size_t k, const std::vector<std::size_t>& sample_shape,
                    int classes, const std::string& split);

/// Row i of inputs as a (C,H,W) or (D,) tensor.
Tensor sample_at(const Dataset& data, std::size_t i);

}  // namespace svb
