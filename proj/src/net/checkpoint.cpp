#include "priordepth/net/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "priordepth/core/errors.hpp"

namespace priordepth {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'E', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (1u << 20)) throw DataError("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint: truncated file");
  return s;
}

void write_header(std::ostream& os, const NetworkConfig& cfg) {
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_string(os, cfg.to_json());
}

NetworkConfig read_header(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  return NetworkConfig::from_json(read_string(is));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  return is;
}

}  // namespace

void write_tensor_dict(std::ostream& os, const std::vector<NamedTensor>& entries) {
  write_pod<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    write_string(os, e.name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int i = 0; i < e.tensor.rank(); ++i)
      write_pod<std::int64_t>(os, e.tensor.dim(i));
    os.write(reinterpret_cast<const char*>(e.tensor.data()),
             static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
  }
}

std::vector<NamedTensor> read_tensor_dict(std::istream& is) {
  const auto count = read_pod<std::uint64_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = read_string(is);
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank > 8) throw DataError("checkpoint: implausible tensor rank");
    nn::Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_pod<std::int64_t>(is));
    e.tensor = nn::Tensor(shape);
    is.read(reinterpret_cast<char*>(e.tensor.data()),
            static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated tensor data");
    out.push_back(std::move(e));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const DepthNetwork& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot write " + path.string());
  write_header(os, net.config());
  std::vector<NamedTensor> entries;
  entries.reserve(net.parameters().size());
  for (const auto& [name, var] : net.parameters()) entries.push_back({name, var->value});
  write_tensor_dict(os, entries);
  if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

NetworkConfig checkpoint_config(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_header(is);
}

namespace {

std::size_t load_filtered(const std::filesystem::path& path, DepthNetwork& net,
                          const std::string& prefix, bool strict) {
  auto is = open_in(path);
  read_header(is);
  const auto entries = read_tensor_dict(is);
  std::size_t copied = 0;
  std::vector<bool> seen(net.parameters().size(), false);
  for (const auto& e : entries) {
    if (!prefix.empty() && e.name.rfind(prefix, 0) != 0) continue;
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
      const auto& [name, var] = net.parameters()[i];
      if (name != e.name) continue;
      if (!var->value.same_shape(e.tensor))
        throw DataError("checkpoint: shape mismatch for " + name + ": file " +
                        e.tensor.shape_str() + " vs model " + var->value.shape_str());
      var->value = e.tensor;
      seen[i] = true;
      ++copied;
      break;
    }
  }
  if (strict) {
    for (std::size_t i = 0; i < net.parameters().size(); ++i)
      if (!seen[i])
        throw DataError("checkpoint: missing parameter " + net.parameters()[i].first);
  }
  return copied;
}

}  // namespace

void load_checkpoint(const std::filesystem::path& path, DepthNetwork& net) {
  load_filtered(path, net, "", true);
}

std::size_t load_checkpoint_prefix(const std::filesystem::path& path, DepthNetwork& net,
                                   const std::string& prefix) {
  return load_filtered(path, net, prefix, false);
}

std::vector<std::string> config_diff(const NetworkConfig& a, const NetworkConfig& b) {
  std::vector<std::string> diff;
  if (a.input_width != b.input_width) diff.push_back("input_width");
  if (a.input_height != b.input_height) diff.push_back("input_height");
  if (a.n_bins != b.n_bins) diff.push_back("n_bins");
  if (a.patch_size != b.patch_size) diff.push_back("patch_size");
  if (a.embed_dim != b.embed_dim) diff.push_back("embed_dim");
  if (a.tf_layers != b.tf_layers) diff.push_back("tf_layers");
  if (a.tf_heads != b.tf_heads) diff.push_back("tf_heads");
  if (a.n_kernels != b.n_kernels) diff.push_back("n_kernels");
  if (a.width_mult != b.width_mult) diff.push_back("width_mult");
  if (a.eps != b.eps) diff.push_back("eps");
  if (a.d_min != b.d_min) diff.push_back("d_min");
  if (a.r_min != b.r_min) diff.push_back("r_min");
  if (a.use_priors != b.use_priors) diff.push_back("use_priors");
  return diff;
}

}  // namespace priordepth
