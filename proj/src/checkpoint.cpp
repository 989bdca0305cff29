#include "svb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace svb {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'B', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
  return v;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void write_record(std::ofstream& out, const std::string& name, const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<long>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<long>(t.size() * 8));
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &t.flat()[i], 8);
      bits = to_little(bits);
      out.write(reinterpret_cast<const char*>(&bits), 8);
    }
  }
}

struct Reader {
  std::vector<unsigned char> bytes;
  std::size_t pos = 0;
  std::string path;

  std::uint32_t u32() {
    if (pos + 4 > bytes.size()) {
      throw FormatError(path + ": truncated at byte " + std::to_string(pos));
    }
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return to_little(v);
  }

  std::string str(std::size_t n) {
    if (pos + n > bytes.size()) {
      throw FormatError(path + ": truncated name at byte " + std::to_string(pos));
    }
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }

  Tensor tensor(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    if (pos + n * 8 > bytes.size()) {
      throw FormatError(path + ": payload of " + std::to_string(n) + " doubles truncated at byte " +
                        std::to_string(pos));
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + pos + i * 8, 8);
      bits = to_little(bits);
      std::memcpy(&data[i], &bits, 8);
    }
    pos += n * 8;
    return Tensor(shape, std::move(data));
  }

  bool eof() const { return pos == bytes.size(); }
};

std::vector<std::pair<std::string, Tensor>> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  Reader r;
  r.path = path;
  r.bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (r.bytes.size() < 8 || std::memcmp(r.bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, not a checkpoint");
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(path + ": version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kVersion) + ")");
  }
  std::vector<std::pair<std::string, Tensor>> records;
  while (!r.eof()) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u32();
    records.emplace_back(name, r.tensor(shape));
  }
  return records;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net, const OptState& opt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);

  for (const NamedLayer& nl : net.layers) {
    if (const auto* lin = std::get_if<LinearLayer>(&nl.layer)) {
      write_record(out, nl.name + ".weight", lin->w);
      write_record(out, nl.name + ".bias", lin->b);
    } else if (const auto* conv = std::get_if<ConvLayer>(&nl.layer)) {
      write_record(out, nl.name + ".kernel", conv->kernel);
      write_record(out, nl.name + ".bias", conv->bias);
      write_record(out, nl.name + ".geom",
                   Tensor({2}, {static_cast<double>(conv->stride), static_cast<double>(conv->pad)}));
    } else if (const auto* bn = std::get_if<BnState>(&nl.layer)) {
      write_record(out, nl.name + ".gamma", bn->gamma);
      write_record(out, nl.name + ".beta", bn->beta);
      write_record(out, nl.name + ".mean", bn->run_mean);
      write_record(out, nl.name + ".std", bn->run_std);
      write_record(out, nl.name + ".momentum", Tensor({1}, {bn->avg_momentum}));
    } else {
      write_record(out, nl.name + ".mark", Tensor({1}));
    }
  }
  write_record(out, "net.classes", Tensor({1}, {static_cast<double>(net.num_classes)}));
  for (std::size_t i = 0; i < opt.velocity.size(); ++i) {
    write_record(out, "opt.v." + std::to_string(i), opt.velocity[i]);
  }
  write_record(out, "opt.iter", Tensor({1}, {static_cast<double>(opt.t)}));
  write_record(out, "opt.epoch", Tensor({1}, {static_cast<double>(opt.epoch)}));
  if (!out) throw FormatError("write failed for checkpoint " + path);
}

std::pair<Network, OptState> load_checkpoint(const std::string& path) {
  const auto records = read_records(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : records) by_name[name] = &tensor;

  auto find = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path + ": missing record " + name);
    return *it->second;
  };

  Network net;
  OptState opt;
  // Layer records appear in order; group them by the "Lxx.kind" prefix.
  std::string current;
  for (const auto& [name, tensor] : records) {
    const std::size_t dot = name.rfind('.');
    if (dot == std::string::npos) throw FormatError(path + ": malformed record name " + name);
    const std::string prefix = name.substr(0, dot);
    if (prefix.rfind("L", 0) != 0 || prefix == current) continue;
    current = prefix;
    const std::size_t kind_dot = prefix.find('.');
    if (kind_dot == std::string::npos) throw FormatError(path + ": malformed layer name " + prefix);
    const std::string kind = prefix.substr(kind_dot + 1);
    if (kind == "linear") {
      net.layers.push_back({prefix, LinearLayer{find(prefix + ".weight"), find(prefix + ".bias")}});
    } else if (kind == "conv") {
      const Tensor& geom = find(prefix + ".geom");
      if (geom.size() != 2) throw FormatError(path + ": bad geometry record for " + prefix);
      net.layers.push_back({prefix, make_conv(find(prefix + ".kernel"), find(prefix + ".bias"),
                                              static_cast<int>(geom[0]), static_cast<int>(geom[1]))});
    } else if (kind == "bn") {
      BnState bn;
      bn.gamma = find(prefix + ".gamma");
      bn.beta = find(prefix + ".beta");
      bn.run_mean = find(prefix + ".mean");
      bn.run_std = find(prefix + ".std");
      bn.avg_momentum = find(prefix + ".momentum")[0];
      net.layers.push_back({prefix, std::move(bn)});
    } else if (kind == "relu") {
      net.layers.push_back({prefix, ReluLayer{}});
    } else if (kind == "gap") {
      net.layers.push_back({prefix, GapLayer{}});
    } else {
      throw FormatError(path + ": unknown layer kind in " + prefix);
    }
  }
  net.num_classes = static_cast<std::size_t>(find("net.classes")[0]);
  for (std::size_t i = 0;; ++i) {
    auto it = by_name.find("opt.v." + std::to_string(i));
    if (it == by_name.end()) break;
    opt.velocity.push_back(*it->second);
  }
  opt.t = static_cast<long>(find("opt.iter")[0]);
  opt.epoch = static_cast<int>(find("opt.epoch")[0]);
  return {std::move(net), std::move(opt)};
}

std::vector<std::pair<std::string, Tensor>> checkpoint_weight_matrices(const std::string& path) {
  auto [net, opt] = load_checkpoint(path);
  std::vector<std::pair<std::string, Tensor>> out;
  for (NamedLayer& nl : net.layers) {
    if (auto* lin = std::get_if<LinearLayer>(&nl.layer)) {
      out.emplace_back(nl.name + ".weight", lin->w);
    } else if (auto* conv = std::get_if<ConvLayer>(&nl.layer)) {
      out.emplace_back(nl.name + ".kernel", conv->kernel_matrix());
    }
  }
  return out;
}

}  // namespace svb
