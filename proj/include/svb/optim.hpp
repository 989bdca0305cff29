#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "svb/network.hpp"
#include "svb/tensor.hpp"

namespace svb {

struct TrainConfig {
  double lr_start = 0.5;
  double lr_end = 0.001;
  int lr_decay_every_epochs = 2;
  int epochs = 160;
  int batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  long t_svb = 0;               // iterations between spectrum projections; 0 disables
  double epsilon = 0.5;         // projection band half-width
  double epsilon_tilde = -1.0;  // normalization-gain band; negative disables
  std::uint64_t seed = 1;
  bool svb_include_final = true;  // whether the classifier layer is projected too

  void validate() const;
};

struct OptState {
  std::vector<Tensor> velocity;  // mirrors parameters() order
  long t = 0;
  int epoch = 0;
};

/// Heavy-ball update: v <- momentum*v - lr*(g + weight_decay*theta),
/// theta <- theta + v. Increments state.t. Non-finite gradients raise
/// DivergenceError naming the parameter and iteration.
void sgd_momentum_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
                       OptState& state, double lr, const TrainConfig& config);

/// Geometric decay hitting both endpoints: lr_start * f^floor(epoch/every)
/// with f = (lr_end/lr_start)^(1/floor((epochs-1)/every)).
double lr_at(int epoch, const TrainConfig& config);

/// Project every linear weight and every conv kernel (in its
/// cout x (cin*k*k) matrix view) onto the spectral band; biases and
/// normalization parameters untouched. Layers are independent, so the
/// projections run in parallel when threads are enabled. SVD failures are
/// rethrown naming the layer.
void apply_svb(Network& net, double epsilon, bool skip_final_linear = false);

/// Clip the gain ratios gamma_i/std_i of every normalization layer into the
/// band around their own mean alpha: ratios above alpha*(1+eps~) or below
/// alpha/(1+eps~) are reset onto the edge. alpha <= 0 raises NumericError.
void apply_bbn(Network& net, double epsilon_tilde);

/// Smallest and largest singular value over all spectrally bounded matrices.
struct SpectrumExtremes {
  double min_sv = 0.0;
  double max_sv = 0.0;
};
SpectrumExtremes spectrum_extremes(Network& net);

struct EpochMetrics {
  int epoch = 0;
  long iter = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double sv_min = 0.0;
  double sv_max = 0.0;
  long wall_ms = 0;
};

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void write(const EpochMetrics& m) = 0;
};

/// Appends `epoch,iter,lr,train_loss,train_acc,test_loss,test_acc,sv_min,
/// sv_max,wall_ms` rows. wall_ms is written as 0 unless timing is enabled, so
/// repeated seeded runs produce byte-identical files.
class CsvMetricSink : public MetricSink {
 public:
  explicit CsvMetricSink(const std::string& path, bool include_timing = false);
  void write(const EpochMetrics& m) override;

 private:
  std::ofstream out_;
  bool include_timing_;
};

class CollectingSink : public MetricSink {
 public:
  void write(const EpochMetrics& m) override { rows.push_back(m); }
  std::vector<EpochMetrics> rows;
};

struct TrainReport {
  long iterations = 0;
  long svb_applications = 0;
  long bbn_applications = 0;
  double final_train_loss = 0.0;
  double final_test_acc = 0.0;
  double final_sv_min = 0.0;
  double final_sv_max = 0.0;
};

// Defined in harness (dataset.hpp); train only reads it.
struct Dataset;

/// Minibatch SGD over the training split: per-epoch seeded shuffle, optional
/// pad/crop/flip augmentation for 32x32 image inputs, spectrum projection
/// after every t_svb-th iteration (followed by the gain clip when enabled),
/// one metrics row per epoch. Deterministic given config.seed.
TrainReport train(Network& net, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config, MetricSink& sink, OptState* opt_out = nullptr);

/// Number of minibatches per epoch (ceiling division).
long iterations_per_epoch(std::size_t dataset_size, int batch_size);

/// Mean loss and accuracy over a split in inference mode.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(Network& net, const Dataset& data, int batch_size);

}  // namespace svb
