#include "cli/run_config.hpp"

#include <fstream>
#include <set>

#include "cafe/errors.hpp"

namespace cafe::cli {
namespace {

std::size_t find_domain(const std::vector<FeatureDataset>& domains, const std::string& name) {
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i].name() == name) return i;
  }
  throw ArgumentError("unknown train domain '" + name + "'");
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  static const std::set<std::string> kKnown = {"description", "train",        "benchmark",
                                               "manifest",    "train_domain", "normalize_features"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw ArgumentError("unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("train")) {
      c.train = j.at("train");
      if (!c.train.is_object()) throw ArgumentError("config 'train' must be an object");
    }
    if (j.contains("benchmark")) c.benchmark = benchmark_spec_from_json(j.at("benchmark"));
    if (j.contains("manifest")) {
      std::filesystem::path p = j.at("manifest").get<std::string>();
      c.manifest = p.is_absolute() ? p : base_dir / p;
    }
    if (j.contains("train_domain")) c.train_domain = j.at("train_domain").get<std::string>();
    c.normalize_features = j.value("normalize_features", false);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config " + path.filename().string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

LoadedData load_data(const RunConfig& config) {
  LoadedData data;
  if (config.manifest) {
    const Manifest manifest = read_manifest(*config.manifest);
    data.domains = load_manifest_datasets(manifest, config.manifest->parent_path());
    nlohmann::json domains = nlohmann::json::array();
    for (const auto& e : manifest.domains) domains.push_back({{"name", e.name}, {"sha256", e.sha256}});
    data.description = {{"manifest", {{"spec", manifest.spec}, {"domains", domains}}}};
    const ManifestEntry* src = manifest.source();
    if (!config.train_domain && src == nullptr) throw ValidationError("manifest names no source domain");
    data.source = find_domain(data.domains, config.train_domain.value_or(src ? src->name : ""));
    return data;
  }
  Benchmark bench = generate(config.benchmark);
  data.domains = std::move(bench.domains);
  data.source = config.benchmark.source_domain;
  data.description = {{"benchmark", to_json(config.benchmark)}};
  if (config.train_domain) data.source = find_domain(data.domains, *config.train_domain);
  return data;
}

}  // namespace cafe::cli
