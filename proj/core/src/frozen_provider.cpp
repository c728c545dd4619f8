#include "cafe/frozen_provider.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "cafe/hashing.hpp"
#include "cafe/random.hpp"

namespace cafe {

FrozenProvider FrozenProvider::file_backed(bool normalize) {
  return FrozenProvider(ProviderKind::kFileBacked, normalize, 0, nullptr);
}

FrozenProvider FrozenProvider::random_projection(const ProjectionConfig& config) {
  if (config.input_dim == 0 || config.feature_dim == 0) {
    throw ArgumentError("random_projection: dimensions must be positive");
  }
  if (!(config.gain > 0.0) || !(config.bias_scale >= 0.0)) {
    throw ArgumentError("random_projection: gain must be > 0 and bias_scale >= 0");
  }
  auto proj = std::make_shared<Projection>();
  proj->gain = config.gain;
  proj->bias_scale = config.bias_scale;
  proj->weights = MatrixD(config.input_dim, config.feature_dim);
  proj->bias.assign(config.feature_dim, 0.0);

  Rng rng(config.seed);
  const double scale = config.gain / std::sqrt(static_cast<double>(config.input_dim));
  for (double& w : proj->weights.values()) w = scale * rng.normal();
  if (config.bias_scale > 0.0) {
    for (double& b : proj->bias) b = rng.uniform(-config.bias_scale, config.bias_scale);
  }
  return FrozenProvider(ProviderKind::kRandomProjection, config.normalize, config.seed,
                        std::move(proj));
}

std::size_t FrozenProvider::input_dim() const noexcept {
  return projection_ ? projection_->weights.rows() : 0;
}

std::size_t FrozenProvider::feature_dim() const noexcept {
  return projection_ ? projection_->weights.cols() : 0;
}

const FrozenProvider::Projection& FrozenProvider::require_projection(const char* op) const {
  if (kind_ != ProviderKind::kRandomProjection || !projection_) {
    throw ArgumentError(std::string(op) + ": only available for random-projection providers");
  }
  return *projection_;
}

MatrixD FrozenProvider::extract(const MatrixD& inputs) const {
  const Projection& p = require_projection("extract");
  const std::size_t d = p.weights.rows();
  const std::size_t c = p.weights.cols();
  if (inputs.cols() != d) {
    throw ArgumentError("extract: input width " + std::to_string(inputs.cols()) +
                        " does not match provider width " + std::to_string(d));
  }
  MatrixD out(inputs.rows(), c);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(p.bias.begin(), p.bias.end(), dst.begin());
    for (std::size_t k = 0; k < d; ++k) {
      const double x = inputs(i, k);
      auto w = p.weights.row(k);
      for (std::size_t j = 0; j < c; ++j) dst[j] += x * w[j];
    }
    for (double& v : dst) v = std::tanh(v);
  }
  if (normalize_) normalize_rows(out);
  return out;
}

MatrixD FrozenProvider::features(const FeatureDataset& dataset, std::span<const std::size_t> rows) const {
  for (std::size_t r : rows) {
    if (r >= dataset.size()) throw ArgumentError("features: row index out of range");
  }
  if (kind_ == ProviderKind::kRandomProjection) {
    const auto& x = dataset.backbone_inputs();
    MatrixD inputs(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = x.row(rows[i]);
      std::copy(src.begin(), src.end(), inputs.row(i).begin());
    }
    return extract(inputs);
  }
  const auto& f = dataset.frozen_features();
  MatrixD out(rows.size(), f.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = f.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  if (normalize_) normalize_rows(out);
  return out;
}

MatrixD FrozenProvider::features(const FeatureDataset& dataset) const {
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return features(dataset, all);
}

const MatrixD& FrozenProvider::projection() const { return require_projection("projection").weights; }

std::span<const double> FrozenProvider::bias() const { return require_projection("bias").bias; }

std::uint64_t FrozenProvider::fingerprint() const {
  std::vector<std::byte> buf;
  auto put = [&buf](const auto& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf.insert(buf.end(), p, p + sizeof(v));
  };
  put(static_cast<std::uint32_t>(kind_));
  put(static_cast<std::uint8_t>(normalize_));
  put(seed_);
  if (projection_) {
    put(static_cast<std::uint64_t>(projection_->weights.rows()));
    put(static_cast<std::uint64_t>(projection_->weights.cols()));
    put(projection_->gain);
    put(projection_->bias_scale);
    auto w = std::as_bytes(projection_->weights.values());
    buf.insert(buf.end(), w.begin(), w.end());
    auto b = std::as_bytes(std::span<const double>(projection_->bias));
    buf.insert(buf.end(), b.begin(), b.end());
  }
  return hash64(buf);
}

void normalize_rows(MatrixD& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (double& v : r) v *= inv;
    }
  }
}

}  // namespace cafe
