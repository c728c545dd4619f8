#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cafe/feature_store.hpp"
#include "cafe/synthetic_benchmark.hpp"

namespace cafe::cli {

// Config file layout:
//   {
//     "description": "...",            free text, not part of the resolved config
//     "train": { TrainConfig keys },
//     "benchmark": { BenchmarkSpec keys },
//     "manifest": "path/to/manifest.json",   relative to the config file
//     "train_domain": "domain0",
//     "normalize_features": false
//   }
// Without a manifest the benchmark section is generated in memory.
struct RunConfig {
  nlohmann::json train = nlohmann::json::object();
  BenchmarkSpec benchmark;
  std::optional<std::filesystem::path> manifest;
  std::optional<std::string> train_domain;
  bool normalize_features = false;
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct LoadedData {
  std::vector<FeatureDataset> domains;
  std::size_t source = 0;
  nlohmann::json description;  // content identity of the data, free of paths
};

LoadedData load_data(const RunConfig& config);

}  // namespace cafe::cli
