#include "svb/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "svb/kernels.hpp"
#include "svb/spectral.hpp"

namespace svb {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& bytes, std::size_t offset,
                          const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

}  // namespace

Tensor load_idx_images(const std::string& path) {
  const auto bytes = read_file(path);
  const std::uint32_t magic = read_u32_be(bytes, 0, path);
  if (magic != 0x00000803u) {
    throw FormatError(path + ": bad image magic 0x" + std::to_string(magic) +
                      " at byte 0 (expected 0x00000803)");
  }
  const std::uint32_t k = read_u32_be(bytes, 4, path);
  const std::uint32_t rows = read_u32_be(bytes, 8, path);
  const std::uint32_t cols = read_u32_be(bytes, 12, path);
  const std::size_t expected = 16 + std::size_t(k) * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError(path + ": payload length " + std::to_string(bytes.size()) +
                      " does not match expected " + std::to_string(expected) + " bytes");
  }
  Tensor images({k, 1, rows, cols});
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  }
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const auto bytes = read_file(path);
  const std::uint32_t magic = read_u32_be(bytes, 0, path);
  if (magic != 0x00000801u) {
    throw FormatError(path + ": bad label magic 0x" + std::to_string(magic) +
                      " at byte 0 (expected 0x00000801)");
  }
  const std::uint32_t k = read_u32_be(bytes, 4, path);
  const std::size_t expected = 8 + std::size_t(k);
  if (bytes.size() != expected) {
    throw FormatError(path + ": payload length " + std::to_string(bytes.size()) +
                      " does not match expected " + std::to_string(expected) + " bytes");
  }
  std::vector<int> labels(k);
  for (std::size_t i = 0; i < k; ++i) labels[i] = bytes[8 + i];
  return labels;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split) {
  Dataset data;
  data.inputs = load_idx_images(images_path);
  data.labels = load_idx_labels(labels_path);
  if (data.labels.size() != data.inputs.dim(0)) {
    throw FormatError("image count " + std::to_string(data.inputs.dim(0)) +
                      " does not match label count " + std::to_string(data.labels.size()));
  }
  data.num_classes = 0;
  for (int l : data.labels) data.num_classes = std::max(data.num_classes, l + 1);
  data.split = split;
  data.provenance = "idx:" + images_path;
  return data;
}

Dataset load_cifar_binary(const std::string& path, const std::string& split) {
  constexpr std::size_t kRecord = 3073;
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kRecord != 0) {
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of the " + std::to_string(kRecord) + "-byte record");
  }
  const std::size_t k = bytes.size() / kRecord;
  Dataset data;
  data.inputs = Tensor({k, 3, 32, 32});
  data.labels.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const unsigned char* rec = bytes.data() + i * kRecord;
    data.labels[i] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) {
      data.inputs[i * 3072 + p] = static_cast<double>(rec[1 + p]) / 255.0;
    }
  }
  data.num_classes = 10;
  data.split = split;
  data.provenance = "cifar:" + path;
  return data;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.inputs.rank() != b.inputs.rank()) throw ShapeError("concat: rank mismatch");
  for (std::size_t d = 1; d < a.inputs.rank(); ++d) {
    if (a.inputs.dim(d) != b.inputs.dim(d)) throw ShapeError("concat: sample shape mismatch");
  }
  Dataset out = a;
  auto shape = a.inputs.shape();
  shape[0] += b.inputs.dim(0);
  std::vector<double> data = a.inputs.flat();
  data.insert(data.end(), b.inputs.flat().begin(), b.inputs.flat().end());
  out.inputs = Tensor(shape, std::move(data));
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.num_classes = std::max(a.num_classes, b.num_classes);
  return out;
}

Tensor pad_crop_flip(const Tensor& image, int dy, int dx, bool flip) {
  if (image.rank() != 3 || image.dim(1) != 32 || image.dim(2) != 32) {
    throw ShapeError("pad_crop_flip: expected (C,32,32), got " + shape_string(image.shape()));
  }
  if (dy < 0 || dy > 8 || dx < 0 || dx > 8) {
    throw InputError("pad_crop_flip: crop offset out of [0,8]");
  }
  const std::size_t c = image.dim(0);
  Tensor out({c, 32, 32});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 32; ++y) {
      const long sy = static_cast<long>(y) + dy - 4;  // position in the unpadded image
      for (std::size_t x = 0; x < 32; ++x) {
        const std::size_t ox = flip ? 31 - x : x;
        const long sx = static_cast<long>(x) + dx - 4;
        double v = 0.0;
        if (sy >= 0 && sy < 32 && sx >= 0 && sx < 32) {
          v = image[(ch * 32 + static_cast<std::size_t>(sy)) * 32 + static_cast<std::size_t>(sx)];
        }
        out[(ch * 32 + y) * 32 + ox] = v;
      }
    }
  }
  return out;
}

Tensor augment_pad_crop_flip(Rng& rng, const Tensor& image) {
  const int dy = static_cast<int>(rng.uniform_below(9));
  const int dx = static_cast<int>(rng.uniform_below(9));
  const bool flip = rng.uniform_below(2) == 1;
  return pad_crop_flip(image, dy, dx, flip);
}

Dataset synth_linear(Rng& rng, std::size_t k, std::size_t n_x, std::size_t n_y,
                     const std::vector<double>& sigma, double noise) {
  if (sigma.size() > std::min(n_x, n_y)) {
    throw InputError("synth_linear: spectrum longer than min(n_x, n_y)");
  }
  if (k <= n_x) {
    throw InputError("synth_linear: need K > n_x to whiten exactly, got K=" + std::to_string(k));
  }
  Tensor x = gaussian(rng, {k, n_x});
  // Center columns, then rotate onto an exact empirical identity covariance.
  for (std::size_t j = 0; j < n_x; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += x.at(i, j);
    mean /= static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) x.at(i, j) -= mean;
  }
  SvdFactors f = svd(x);
  for (double s : f.s) {
    if (s <= 1e-12 * f.s.front()) throw NumericError("synth_linear: degenerate draw, cannot whiten");
  }
  const double root_k = std::sqrt(static_cast<double>(k));
  Tensor white = matmul(f.u, transpose(f.v));
  white *= root_k;

  // Map with the requested singular spectrum.
  std::vector<double> padded(std::min(n_x, n_y), 0.0);
  std::copy(sigma.begin(), sigma.end(), padded.begin());
  Rng map_rng(rng.next_u64());
  Tensor uy = orthogonal_init(map_rng, n_y, padded.size());
  Tensor vx = orthogonal_init(map_rng, n_x, padded.size());
  Tensor a = matmul(scale_cols(uy, padded), transpose(vx));  // (n_y, n_x)

  Tensor y = matmul_nt(white, a);  // (k, n_y)
  if (noise != 0.0) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise * rng.normal();
  }

  Dataset data;
  data.inputs = std::move(white);
  data.targets = std::move(y);
  data.split = "train";
  data.provenance = "synth:linear";
  return data;
}

Dataset synth_blobs(Rng& rng, std::size_t k, const std::vector<std::size_t>& sample_shape,
                    int classes, const std::string& split) {
  if (classes < 2) throw InputError("synth_blobs: need at least 2 classes");
  std::size_t features = 1;
  for (std::size_t d : sample_shape) features *= d;
  Tensor centers = gaussian(rng, {static_cast<std::size_t>(classes), features});
  centers *= 1.5;

  std::vector<std::size_t> shape = {k};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Dataset data;
  data.inputs = Tensor(shape);
  data.labels.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const int label = static_cast<int>(rng.uniform_below(classes));
    data.labels[i] = label;
    for (std::size_t j = 0; j < features; ++j) {
      data.inputs[i * features + j] = centers.at(static_cast<std::size_t>(label), j) + rng.normal();
    }
  }
  data.num_classes = classes;
  data.split = split;
  data.provenance = "synth:blobs";
  return data;
}

Tensor sample_at(const Dataset& data, std::size_t i) {
  std::vector<std::size_t> shape(data.inputs.shape().begin() + 1, data.inputs.shape().end());
  std::size_t features = 1;
  for (std::size_t d : shape) features *= d;
  std::vector<double> values(data.inputs.flat().begin() + i * features,
                             data.inputs.flat().begin() + (i + 1) * features);
  return Tensor(shape, std::move(values));
}

}  // namespace svb
