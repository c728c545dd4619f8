#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cafe/feature_store.hpp"
#include "cafe/frozen_provider.hpp"

namespace cafe {

enum class ShiftKind { kAffine, kNuisanceSubspace };

const char* to_string(ShiftKind kind);
ShiftKind parse_shift_kind(const std::string& text);

/// Multi-domain classification problem with controlled domain shift.
///
/// Latent samples z = mu_y + noise * eps are shared in distribution across
/// domains. Each domain d applies its own shift before the frozen provider
/// sees the data:
///   affine:            x = (I + m * G_d / sqrt(D)) z + m * b_d
///   nuisance-subspace: x = z + U_d (m * o_d + nuisance * n)
/// where m is `shift_magnitude`, U_d a random D x nuisance_dim basis, o_d a
/// domain offset and n per-sample nuisance. With m = 0 and nuisance = 0 all
/// domains are i.i.d. Frozen features are provider.extract(x).
struct BenchmarkSpec {
  std::size_t num_domains = 5;
  std::size_t num_classes = 7;
  std::size_t input_dim = 64;
  std::size_t samples_per_class = 60;
  double prototype_scale = 3.0;
  double noise_scale = 1.0;
  ShiftKind shift = ShiftKind::kAffine;
  double shift_magnitude = 1.0;
  std::size_t nuisance_dim = 8;
  double nuisance_scale = 0.0;
  std::size_t feature_dim = 512;
  double provider_gain = 1.0;
  double provider_bias_scale = 0.1;
  std::size_t source_domain = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const BenchmarkSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j);

struct Benchmark {
  BenchmarkSpec spec;
  FrozenProvider provider;
  std::vector<FeatureDataset> domains;  // names "domain0", "domain1", ...

  const FeatureDataset& source() const { return domains.at(spec.source_domain); }
};

/// The provider a spec generates features with (random projection seeded from the spec).
FrozenProvider benchmark_provider(const BenchmarkSpec& spec);

Benchmark generate(const BenchmarkSpec& spec);

/// Writes one feature file per domain plus manifest.json; returns the manifest path.
std::filesystem::path write_benchmark(const Benchmark& bench, const std::filesystem::path& dir);

/// Nearest class-mean classifier in backbone-input space. Returns the
/// accuracy (percent) on each test domain.
std::vector<double> nearest_mean_oracle(const FeatureDataset& train, const std::vector<FeatureDataset>& tests);

}  // namespace cafe
