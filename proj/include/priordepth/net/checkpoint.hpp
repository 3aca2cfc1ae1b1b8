#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "priordepth/net/model.hpp"
#include "priordepth/nn/tensor.hpp"

namespace priordepth {

// Binary parameter dictionary: magic, format version, NetworkConfig header,
// then named tensors. Host byte order (the artifact targets one platform).
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

void write_tensor_dict(std::ostream& os, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_tensor_dict(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const DepthNetwork& net);

// Reads only the config header.
NetworkConfig checkpoint_config(const std::filesystem::path& path);

// Strict load: every network parameter must be present with matching shape.
void load_checkpoint(const std::filesystem::path& path, DepthNetwork& net);

// Loads only parameters whose name starts with prefix (e.g. "encoder." for a
// separately trained backbone); returns how many tensors were copied.
std::size_t load_checkpoint_prefix(const std::filesystem::path& path, DepthNetwork& net,
                                   const std::string& prefix);

// Names of NetworkConfig fields that differ; empty means compatible.
std::vector<std::string> config_diff(const NetworkConfig& a, const NetworkConfig& b);

}  // namespace priordepth
