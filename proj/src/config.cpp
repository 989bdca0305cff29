#include "svb/config.hpp"

#include <fstream>
#include <sstream>

namespace svb {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value '" + value + "' for " + key);
  }
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value '" + value + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean value '" + value + "' for " + key);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig rc;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    }

    if (key == "lr_start") {
      rc.train.lr_start = parse_double(key, value);
    } else if (key == "lr_end") {
      rc.train.lr_end = parse_double(key, value);
    } else if (key == "lr_decay_every_epochs") {
      rc.train.lr_decay_every_epochs = static_cast<int>(parse_long(key, value));
    } else if (key == "epochs") {
      rc.train.epochs = static_cast<int>(parse_long(key, value));
    } else if (key == "batch_size") {
      rc.train.batch_size = static_cast<int>(parse_long(key, value));
    } else if (key == "momentum") {
      rc.train.momentum = parse_double(key, value);
    } else if (key == "weight_decay") {
      rc.train.weight_decay = parse_double(key, value);
    } else if (key == "t_svb") {
      rc.train.t_svb = parse_long(key, value);
    } else if (key == "epsilon") {
      rc.train.epsilon = parse_double(key, value);
    } else if (key == "epsilon_tilde") {
      rc.train.epsilon_tilde = parse_double(key, value);
    } else if (key == "seed") {
      rc.train.seed = static_cast<std::uint64_t>(parse_long(key, value));
    } else if (key == "svb_include_final") {
      rc.train.svb_include_final = parse_bool(key, value);
    } else if (key == "arch") {
      rc.arch = value;
    } else if (key == "dataset") {
      rc.dataset = value;
    } else {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (rc.arch.empty()) throw ConfigError(origin + ": missing arch");
  if (rc.dataset.empty()) throw ConfigError(origin + ": missing dataset");
  rc.train.validate();
  return rc;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace svb
