#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "svb/error.hpp"

namespace svb {

/// Dense n-dimensional array of doubles, flat row-major storage.
/// data().size() == product of shape() at all times; no strides, transposes copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor identity(std::size_t n);

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Rank-specific accessors; offsets computed from the row-major shape.
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  /// Same flat data under a new shape; products must agree.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double frobenius_norm() const;
  double max_abs() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double c);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double c);

/// Largest elementwise |a-b|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
/// ||a-b||_F; shapes must match.
double frobenius_diff(const Tensor& a, const Tensor& b);

std::string shape_string(const std::vector<std::size_t>& shape);

/// Seeded deterministic generator: xoshiro256++ over a splitmix64-expanded
/// seed, with uniform doubles from the top 53 bits and standard normals via
/// the Marsaglia polar method (the spare deviate is discarded, so the whole
/// stream state is exactly the four 64-bit words).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n); rejection sampled, unbiased.
  std::uint64_t uniform_below(std::uint64_t n);
  /// One standard-normal deviate.
  double normal();

  using State = std::array<std::uint64_t, 4>;
  State state() const { return s_; }
  void set_state(const State& s) { s_ = s; }

 private:
  State s_{};
};

/// Tensor of i.i.d. standard-normal entries drawn from rng.
Tensor gaussian(Rng& rng, std::vector<std::size_t> shape);

}  // namespace svb
