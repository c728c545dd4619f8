#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>

#include "cafe/feature_store.hpp"
#include "cafe/matrix.hpp"

namespace cafe {

enum class ProviderKind { kFileBacked, kRandomProjection };

struct ProjectionConfig {
  std::size_t input_dim = 64;
  std::size_t feature_dim = 512;
  std::uint64_t seed = 0;
  /// Projection entries are N(0, gain^2 / input_dim).
  double gain = 1.0;
  /// Bias entries are U(-bias_scale, bias_scale); 0 gives a zero bias.
  double bias_scale = 0.1;
  bool normalize = false;
};

/// Source of the fixed face features F. Either returns the rows stored in a
/// feature file, or computes tanh(x * P + b) with a seeded projection P that
/// is generated once and never written again. All state is shared immutably
/// between copies.
class FrozenProvider {
 public:
  static FrozenProvider file_backed(bool normalize = false);
  static FrozenProvider random_projection(const ProjectionConfig& config);

  ProviderKind kind() const noexcept { return kind_; }
  bool normalize() const noexcept { return normalize_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// 0 for file-backed providers (width is whatever the file holds).
  std::size_t input_dim() const noexcept;
  std::size_t feature_dim() const noexcept;

  /// Random-projection only: B x D inputs -> B x C features.
  MatrixD extract(const MatrixD& inputs) const;

  /// Features for the given rows of a dataset: stored rows for file-backed,
  /// projected backbone inputs for random-projection.
  MatrixD features(const FeatureDataset& dataset, std::span<const std::size_t> rows) const;
  MatrixD features(const FeatureDataset& dataset) const;

  /// Random-projection only.
  const MatrixD& projection() const;
  std::span<const double> bias() const;

  /// Digest of kind, configuration and (for random projection) the projection
  /// and bias values.
  std::uint64_t fingerprint() const;

 private:
  struct Projection {
    MatrixD weights;  // D x C
    std::vector<double> bias;
    double gain = 1.0;
    double bias_scale = 0.0;
  };

  FrozenProvider(ProviderKind kind, bool normalize, std::uint64_t seed,
                 std::shared_ptr<const Projection> projection)
      : kind_(kind), normalize_(normalize), seed_(seed), projection_(std::move(projection)) {}

  const Projection& require_projection(const char* op) const;

  ProviderKind kind_;
  bool normalize_;
  std::uint64_t seed_;
  std::shared_ptr<const Projection> projection_;
};

/// Scales every row to unit L2 norm; zero rows stay zero.
void normalize_rows(MatrixD& m);

}  // namespace cafe
