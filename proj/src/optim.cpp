#include "svb/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "svb/dataset.hpp"
#include "svb/kernels.hpp"

#ifdef SVB_HAVE_OPENMP
#include <omp.h>
#endif

namespace svb {

void TrainConfig::validate() const {
  if (!(lr_start >= lr_end && lr_end > 0.0)) {
    throw ConfigError("config: need lr_start >= lr_end > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must be in [0,1)");
  if (epsilon < 0.0) throw ConfigError("config: epsilon must be nonnegative");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be nonnegative");
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (epochs < 0) throw ConfigError("config: epochs must be nonnegative");
  if (lr_decay_every_epochs < 1) throw ConfigError("config: lr_decay_every_epochs must be positive");
  if (t_svb < 0) throw ConfigError("config: t_svb must be nonnegative");
}

void sgd_momentum_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
                       OptState& state, double lr, const TrainConfig& config) {
  if (grads.size() != params.size()) {
    throw InputError("sgd_momentum_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const ParamRef& p : params) state.velocity.emplace_back(p.value->shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw DivergenceError("non-finite gradient in " + params[i].name + " at iteration " +
                            std::to_string(state.t),
                            state.t);
    }
    Tensor& theta = *params[i].value;
    Tensor& v = state.velocity[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = config.momentum * v[j] - lr * (grads[i][j] + config.weight_decay * theta[j]);
      theta[j] += v[j];
    }
  }
  ++state.t;
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch >= config.epochs) {
    throw InputError("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                     std::to_string(config.epochs) + ")");
  }
  const int num_decays = (config.epochs - 1) / config.lr_decay_every_epochs;
  if (num_decays == 0) return config.lr_start;
  const double f = std::pow(config.lr_end / config.lr_start, 1.0 / num_decays);
  return config.lr_start * std::pow(f, epoch / config.lr_decay_every_epochs);
}

namespace {

struct SpectralTarget {
  std::string name;
  LinearLayer* linear = nullptr;
  ConvLayer* conv = nullptr;
};

std::vector<SpectralTarget> spectral_targets(Network& net, bool skip_final_linear) {
  std::vector<SpectralTarget> targets;
  for (NamedLayer& nl : net.layers) {
    if (auto* lin = std::get_if<LinearLayer>(&nl.layer)) {
      targets.push_back({nl.name, lin, nullptr});
    } else if (auto* conv = std::get_if<ConvLayer>(&nl.layer)) {
      targets.push_back({nl.name, nullptr, conv});
    }
  }
  if (skip_final_linear) {
    for (std::size_t i = targets.size(); i-- > 0;) {
      if (targets[i].linear != nullptr) {
        targets.erase(targets.begin() + static_cast<long>(i));
        break;
      }
    }
  }
  return targets;
}

}  // namespace

void apply_svb(Network& net, double epsilon, bool skip_final_linear) {
  const SpectralBand band{epsilon};
  auto targets = spectral_targets(net, skip_final_linear);
  std::vector<std::string> failures(targets.size());
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < targets.size(); ++i) {
    try {
      if (targets[i].linear != nullptr) {
        targets[i].linear->w = bound_singular_values(targets[i].linear->w, band);
      } else {
        targets[i].conv->set_kernel_matrix(
            bound_singular_values(targets[i].conv->kernel_matrix(), band));
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!failures[i].empty()) {
      throw NumericError("apply_svb: layer " + targets[i].name + ": " + failures[i]);
    }
  }
}

void apply_bbn(Network& net, double epsilon_tilde) {
  if (epsilon_tilde < 0.0) throw InputError("apply_bbn: epsilon_tilde must be nonnegative");
  const double hi = 1.0 + epsilon_tilde;
  for (NamedLayer& nl : net.layers) {
    auto* bn = std::get_if<BnState>(&nl.layer);
    if (bn == nullptr) continue;
    const std::size_t n = bn->width();
    double alpha = 0.0;
    for (std::size_t i = 0; i < n; ++i) alpha += bn->gamma[i] / bn->run_std[i];
    alpha /= static_cast<double>(n);
    if (alpha <= 0.0) {
      throw NumericError("apply_bbn: layer " + nl.name + " has non-positive mean gain " +
                         std::to_string(alpha));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ratio = bn->gamma[i] / bn->run_std[i] / alpha;
      if (ratio > hi) {
        bn->gamma[i] = alpha * bn->run_std[i] * hi;
      } else if (ratio < 1.0 / hi) {
        bn->gamma[i] = alpha * bn->run_std[i] / hi;
      }
    }
  }
}

SpectrumExtremes spectrum_extremes(Network& net) {
  auto targets = spectral_targets(net, false);
  if (targets.empty()) return {};
  std::vector<double> mins(targets.size()), maxs(targets.size());
#ifdef SVB_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel_enabled())
#endif
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Tensor m = targets[i].linear != nullptr ? targets[i].linear->w
                                                  : targets[i].conv->kernel_matrix();
    const SvdFactors f = svd(m);
    mins[i] = f.s.back();
    maxs[i] = f.s.front();
  }
  SpectrumExtremes ext{mins[0], maxs[0]};
  for (std::size_t i = 1; i < targets.size(); ++i) {
    ext.min_sv = std::min(ext.min_sv, mins[i]);
    ext.max_sv = std::max(ext.max_sv, maxs[i]);
  }
  return ext;
}

CsvMetricSink::CsvMetricSink(const std::string& path, bool include_timing)
    : out_(path, std::ios::trunc), include_timing_(include_timing) {
  if (!out_) throw ConfigError("cannot open metrics file " + path);
  out_ << "epoch,iter,lr,train_loss,train_acc,test_loss,test_acc,sv_min,sv_max,wall_ms\n";
  out_.flush();
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void CsvMetricSink::write(const EpochMetrics& m) {
  out_ << m.epoch << ',' << m.iter << ',' << fmt(m.lr) << ',' << fmt(m.train_loss) << ','
       << fmt(m.train_acc) << ',' << fmt(m.test_loss) << ',' << fmt(m.test_acc) << ','
       << fmt(m.sv_min) << ',' << fmt(m.sv_max) << ',' << (include_timing_ ? m.wall_ms : 0)
       << '\n';
  out_.flush();
}

long iterations_per_epoch(std::size_t dataset_size, int batch_size) {
  return static_cast<long>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                           static_cast<std::size_t>(batch_size));
}

namespace {

std::size_t sample_features(const Dataset& data) {
  std::size_t f = 1;
  for (std::size_t d = 1; d < data.inputs.rank(); ++d) f *= data.inputs.dim(d);
  return f;
}

bool augmentable(const Dataset& data) {
  return data.inputs.rank() == 4 && data.inputs.dim(2) == 32 && data.inputs.dim(3) == 32;
}

Tensor gather_batch(const Dataset& data, const std::vector<std::size_t>& ids, std::size_t begin,
                    std::size_t count, bool augment, Rng* rng) {
  std::vector<std::size_t> shape = {count};
  shape.insert(shape.end(), data.inputs.shape().begin() + 1, data.inputs.shape().end());
  Tensor batch(shape);
  const std::size_t features = sample_features(data);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = ids[begin + i];
    if (augment) {
      const Tensor img = augment_pad_crop_flip(*rng, sample_at(data, src));
      std::copy(img.flat().begin(), img.flat().end(), batch.flat().begin() + i * features);
    } else {
      std::copy(data.inputs.flat().begin() + src * features,
                data.inputs.flat().begin() + (src + 1) * features,
                batch.flat().begin() + i * features);
    }
  }
  return batch;
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c) {
      if (logits.at(b, c) > logits.at(b, arg)) arg = c;
    }
    if (static_cast<int>(arg) == labels[b]) ++correct;
  }
  return correct;
}

}  // namespace

EvalResult evaluate(Network& net, const Dataset& data, int batch_size) {
  EvalResult res;
  if (data.size() == 0) return res;
  std::vector<std::size_t> ids(data.size());
  std::iota(ids.begin(), ids.end(), 0);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min<std::size_t>(batch_size, data.size() - begin);
    Tensor x = gather_batch(data, ids, begin, count, false, nullptr);
    std::vector<int> labels(data.labels.begin() + static_cast<long>(begin),
                            data.labels.begin() + static_cast<long>(begin + count));
    Tensor logits = network_infer(net, x);
    const SoftmaxXent sx = softmax_xent(logits, labels);
    loss_sum += sx.loss * static_cast<double>(count);
    correct += count_correct(logits, labels);
  }
  res.loss = loss_sum / static_cast<double>(data.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return res;
}

TrainReport train(Network& net, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config, MetricSink& sink, OptState* opt_out) {
  config.validate();
  if (train_set.size() == 0) throw InputError("train: empty training set");
  if (!train_set.classification()) throw InputError("train: training set has no class labels");

  Rng rng(config.seed);
  OptState local_state;
  OptState& opt = opt_out != nullptr ? *opt_out : local_state;
  auto params = parameters(net);
  if (opt.velocity.empty()) {
    opt.velocity.reserve(params.size());
    for (const ParamRef& p : params) opt.velocity.emplace_back(p.value->shape());
  }

  const bool augment = augmentable(train_set);
  const std::size_t k = train_set.size();
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);

  TrainReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, config);

    // Fisher-Yates from the seeded stream.
    for (std::size_t i = k; i > 1; --i) {
      const std::size_t j = rng.uniform_below(i);
      std::swap(perm[i - 1], perm[j]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < k; begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, k - begin);
      Tensor x = gather_batch(train_set, perm, begin, count, augment, &rng);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = train_set.labels[perm[begin + i]];

      ForwardTrace trace = network_forward(net, x, true);
      const SoftmaxXent sx = softmax_xent(trace.logits, labels);
      if (!std::isfinite(sx.loss)) {
        throw DivergenceError("train: non-finite loss at iteration " + std::to_string(opt.t),
                              opt.t);
      }
      loss_sum += sx.loss * static_cast<double>(count);
      correct += count_correct(trace.logits, labels);

      BackwardResult back = network_backward(net, trace, sx.dlogits);
      sgd_momentum_step(params, back.grads, opt, lr, config);

      if (config.t_svb > 0 && opt.t % config.t_svb == 0) {
        apply_svb(net, config.epsilon, !config.svb_include_final);
        ++report.svb_applications;
        if (config.epsilon_tilde >= 0.0) {
          apply_bbn(net, config.epsilon_tilde);
          ++report.bbn_applications;
        }
      }
    }
    opt.epoch = epoch + 1;

    const EvalResult test = evaluate(net, test_set, config.batch_size);
    const SpectrumExtremes ext = spectrum_extremes(net);
    const auto t1 = std::chrono::steady_clock::now();

    EpochMetrics m;
    m.epoch = epoch;
    m.iter = opt.t;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(k);
    m.train_acc = static_cast<double>(correct) / static_cast<double>(k);
    m.test_loss = test.loss;
    m.test_acc = test.accuracy;
    m.sv_min = ext.min_sv;
    m.sv_max = ext.max_sv;
    m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    sink.write(m);

    report.final_train_loss = m.train_loss;
    report.final_test_acc = m.test_acc;
    report.final_sv_min = m.sv_min;
    report.final_sv_max = m.sv_max;
  }
  report.iterations = opt.t;
  return report;
}

}  // namespace svb
