#include "priordepth/net/config.hpp"

#include <json.hpp>
#include <stdexcept>

namespace priordepth {

void NetworkConfig::validate() const {
  if (input_width <= 0 || input_height <= 0)
    throw std::invalid_argument("config: non-positive input size");
  if (input_width % 16 != 0 || input_height % 16 != 0)
    throw std::invalid_argument("config: input size must be divisible by 16");
  if (n_bins < 2) throw std::invalid_argument("config: n_bins must be at least 2");
  if (patch_size < 1) throw std::invalid_argument("config: patch_size must be positive");
  if (embed_dim < 1 || tf_heads < 1 || embed_dim % tf_heads != 0)
    throw std::invalid_argument("config: tf_heads must divide embed_dim");
  if (tf_layers < 1) throw std::invalid_argument("config: tf_layers must be positive");
  if (n_kernels < 1) throw std::invalid_argument("config: n_kernels must be positive");
  if (width_mult <= 0.0) throw std::invalid_argument("config: width_mult must be positive");
  if (eps <= 0.0) throw std::invalid_argument("config: eps must be positive");
  if (r_min <= 0.0) throw std::invalid_argument("config: r_min must be positive");
  if (d_min < 0.0) throw std::invalid_argument("config: d_min must be non-negative");
  if (feature_width() % patch_size != 0 || feature_height() % patch_size != 0)
    throw std::invalid_argument("config: patch size must divide feature dimensions");
  if (sequence_length() < n_kernels + 1)
    throw std::invalid_argument(
        "config: n_kernels + 1 exceeds the patch token count (token 0 feeds the head)");
}

std::string NetworkConfig::to_json() const {
  nlohmann::json j;
  j["input_width"] = input_width;
  j["input_height"] = input_height;
  j["n_bins"] = n_bins;
  j["patch_size"] = patch_size;
  j["embed_dim"] = embed_dim;
  j["tf_layers"] = tf_layers;
  j["tf_heads"] = tf_heads;
  j["n_kernels"] = n_kernels;
  j["width_mult"] = width_mult;
  j["eps"] = eps;
  j["d_min"] = d_min;
  j["r_min"] = r_min;
  j["use_priors"] = use_priors;
  return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  NetworkConfig c;
  c.input_width = j.at("input_width").get<int>();
  c.input_height = j.at("input_height").get<int>();
  c.n_bins = j.at("n_bins").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.tf_layers = j.at("tf_layers").get<int>();
  c.tf_heads = j.at("tf_heads").get<int>();
  c.n_kernels = j.at("n_kernels").get<int>();
  c.width_mult = j.at("width_mult").get<double>();
  c.eps = j.at("eps").get<double>();
  c.d_min = j.at("d_min").get<double>();
  c.r_min = j.at("r_min").get<double>();
  c.use_priors = j.at("use_priors").get<bool>();
  return c;
}

}  // namespace priordepth
