#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cafe/matrix.hpp"

namespace cafe {

// Binary feature file, little-endian, no padding:
//   "CAFEFT01" | u32 version | u64 N | u32 C | u32 D | u32 L
//   | N x u8 labels | N*C f32 frozen features | N*D f32 backbone inputs
inline constexpr std::array<char, 8> kFeatureMagic = {'C', 'A', 'F', 'E', 'F', 'T', '0', '1'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 8 + 4 + 8 + 4 + 4 + 4;
inline constexpr const char* kFeatureExtension = ".cafeft";

std::uint64_t feature_file_size(std::uint64_t n, std::uint32_t c, std::uint32_t d);

/// One domain of aligned samples: frozen face features F (N x C), backbone
/// inputs x (N x D) and labels y in [0, L). The constructor validates every
/// invariant; the payload is immutable afterwards.
class FeatureDataset {
 public:
  FeatureDataset(std::string name, MatrixF frozen_features, MatrixF backbone_inputs,
                 std::vector<std::uint8_t> labels, std::uint32_t num_classes = 7);

  const std::string& name() const noexcept { return name_; }
  const MatrixF& frozen_features() const noexcept { return frozen_; }
  const MatrixF& backbone_inputs() const noexcept { return inputs_; }
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::uint32_t num_classes() const noexcept { return num_classes_; }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t feature_dim() const noexcept { return frozen_.cols(); }
  std::size_t input_dim() const noexcept { return inputs_.cols(); }

  std::size_t class_count(std::uint8_t label) const;

 private:
  std::string name_;
  MatrixF frozen_;
  MatrixF inputs_;
  std::vector<std::uint8_t> labels_;
  std::uint32_t num_classes_;
};

/// Bit-exact equality of name, dimensions, labels and both matrices.
bool bit_identical(const FeatureDataset& a, const FeatureDataset& b);

/// 64-bit digest of the frozen feature matrix (used to prove it is never mutated).
std::uint64_t frozen_checksum(const FeatureDataset& dataset);

std::vector<std::byte> encode_features(const FeatureDataset& dataset);
FeatureDataset decode_features(std::span<const std::byte> bytes, std::string name);

/// Writes atomically (temp file + rename). Nothing is created if validation fails.
void write_feature_file(const FeatureDataset& dataset, const std::filesystem::path& path);

/// The dataset name defaults to the file stem.
FeatureDataset read_feature_file(const std::filesystem::path& path,
                                 std::optional<std::string> name = std::nullopt);

/// Row subset of one dataset, gathered on demand into 64-bit matrices.
class Batch {
 public:
  Batch(const FeatureDataset& dataset, std::vector<std::size_t> indices);

  std::span<const std::size_t> indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  const FeatureDataset& dataset() const noexcept { return *dataset_; }

  MatrixD inputs() const;
  MatrixD frozen_features() const;
  std::vector<std::uint8_t> labels() const;

 private:
  const FeatureDataset* dataset_;
  std::vector<std::size_t> indices_;
};

/// One epoch of batches. Every index appears exactly once; ascending order
/// when `shuffle` is false, a seeded Fisher-Yates permutation otherwise.
std::vector<Batch> make_batches(const FeatureDataset& dataset, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle);

struct ManifestEntry {
  std::string name;
  std::string path;  // relative to the manifest's directory
  std::string sha256;
  std::string role;  // "source" or "unseen"
};

struct Manifest {
  std::vector<ManifestEntry> domains;
  nlohmann::json spec = nlohmann::json::object();

  const ManifestEntry* source() const;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Loads every listed domain in manifest order; optionally verifies sha256.
std::vector<FeatureDataset> load_manifest_datasets(const Manifest& manifest,
                                                   const std::filesystem::path& manifest_dir,
                                                   bool verify_sha256 = true);

}  // namespace cafe
