#pragma once

#include <string>

#include "svb/optim.hpp"

namespace svb {

/// A training run description: `key = value` lines, `#` comments. Keys are
/// the TrainConfig field names plus `arch` and `dataset`:
///   arch    = convnet-X<k> | mlp:<w1>,<w2>,...
///   dataset = idx:<dir> | cifar:<dir> | synth:<Ktrain>,<Ktest>,<CxHxW|D>,<classes>
struct RunConfig {
  TrainConfig train;
  std::string arch;
  std::string dataset;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace svb
