#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cafe/mask_network.hpp"

namespace cafe {

// Checkpoint file: one line of compact JSON describing the network
// ({widths, L, C, seed, config, config_hash, ...}) terminated by '\n', followed by
// the little-endian f64 parameter blob in MaskNetwork slot order.
struct Checkpoint {
  MaskNetwork net;
  nlohmann::json config;  // resolved train config the network came from
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// `config` is the resolved train config; its "seed" (if any) and hash are
/// recorded alongside it.
void save_checkpoint(const MaskNetwork& net, const std::filesystem::path& path, const nlohmann::json& config);
/// Rejects a header whose config_hash does not match its embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_header(const MaskNetwork& net, const nlohmann::json& config);

}  // namespace cafe
